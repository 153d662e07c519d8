//! Automatic regime-boundary extraction.
//!
//! The mean grid is thresholded into a binary mask over cell centers;
//! every adjacent pair of discordant cells contributes the separating
//! edge, and the edges are chained into polylines. Coordinates live in
//! cell-index space (cell `(ix, iy)` is centered at `(ix, iy)`, so
//! separating edges run along half-integer lines).

use serde::{Deserialize, Serialize};

use super::stats::MetricGrid;

pub type Polyline = Vec<(f64, f64)>;

/// Boundary polylines at the main threshold and at the +/- perturbation
/// band thresholds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryExtraction {
    pub threshold: f64,
    pub main: Vec<Polyline>,
    pub lower: Vec<Polyline>,
    pub upper: Vec<Polyline>,
    /// True when every cell lies on one side of the main threshold.
    pub empty: bool,
}

/// Integer-doubled lattice point so endpoints hash exactly.
type Node = (i64, i64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Edge {
    a: Node,
    b: Node,
}

/// Separating edges between mask-discordant 4-adjacent cells, in doubled
/// index coordinates.
fn discordant_edges(mask: &[bool], nx: usize, ny: usize) -> Vec<Edge> {
    let mut edges = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let here = mask[iy * nx + ix];
            if ix + 1 < nx && mask[iy * nx + ix + 1] != here {
                // vertical edge at x = ix + 1/2 spanning y in [iy - 1/2, iy + 1/2]
                let x = 2 * ix as i64 + 1;
                edges.push(Edge {
                    a: (x, 2 * iy as i64 - 1),
                    b: (x, 2 * iy as i64 + 1),
                });
            }
            if iy + 1 < ny && mask[(iy + 1) * nx + ix] != here {
                let y = 2 * iy as i64 + 1;
                edges.push(Edge {
                    a: (2 * ix as i64 - 1, y),
                    b: (2 * ix as i64 + 1, y),
                });
            }
        }
    }
    edges.sort();
    edges
}

/// Chain edges that share endpoints into polylines; open chains first,
/// then closed loops, in deterministic order.
fn chain_edges(edges: &[Edge]) -> Vec<Polyline> {
    use std::collections::BTreeMap;
    let mut incident: BTreeMap<Node, Vec<usize>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        incident.entry(e.a).or_default().push(i);
        incident.entry(e.b).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut polylines = Vec::new();
    // endpoints with odd degree start open chains; remaining edges form loops
    let starts: Vec<Node> = incident
        .iter()
        .filter(|(_, ids)| ids.len() % 2 == 1)
        .map(|(n, _)| *n)
        .collect();
    let mut walk_from = |start: Node, used: &mut Vec<bool>| -> Option<Polyline> {
        let first = *incident.get(&start)?.iter().find(|&&i| !used[i])?;
        let mut line = vec![start];
        let mut cur = start;
        let mut edge = first;
        loop {
            used[edge] = true;
            let e = edges[edge];
            let next = if e.a == cur { e.b } else { e.a };
            line.push(next);
            cur = next;
            match incident
                .get(&cur)
                .and_then(|ids| ids.iter().find(|&&i| !used[i]))
            {
                Some(&i) => edge = i,
                None => break,
            }
        }
        Some(line.into_iter().map(|(x, y)| (x as f64 / 2.0, y as f64 / 2.0)).collect())
    };
    for s in starts {
        while incident.get(&s).map_or(false, |ids| ids.iter().any(|&i| !used[i])) {
            if let Some(line) = walk_from(s, &mut used) {
                polylines.push(line);
            }
        }
    }
    for i in 0..edges.len() {
        if !used[i] {
            if let Some(line) = walk_from(edges[i].a, &mut used) {
                polylines.push(line);
            }
        }
    }
    polylines
}

fn extract_at(grid: &MetricGrid, threshold: f64) -> (Vec<Polyline>, bool) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mask: Vec<bool> = grid.values.iter().map(|&v| !(v <= threshold)).collect();
    let edges = discordant_edges(&mask, nx, ny);
    let empty = edges.is_empty();
    (chain_edges(&edges), empty)
}

/// Threshold the grid into a binary mask and trace the separating
/// boundary, repeating at `threshold * (1 - perturb)` and
/// `threshold * (1 + perturb)` for the robustness band.
pub fn extract_boundaries(grid: &MetricGrid, threshold: f64, perturb: f64) -> BoundaryExtraction {
    let (main, empty) = extract_at(grid, threshold);
    let (lower, _) = extract_at(grid, threshold * (1.0 - perturb));
    let (upper, _) = extract_at(grid, threshold * (1.0 + perturb));
    BoundaryExtraction {
        threshold,
        main,
        lower,
        upper,
        empty,
    }
}

/// Undirected unit segments of a polyline set, in doubled coordinates
/// (testing hook: boundary extraction must match brute-force enumeration
/// of discordant adjacent pairs).
pub fn polyline_segments(lines: &[Polyline]) -> Vec<((i64, i64), (i64, i64))> {
    let mut out = Vec::new();
    for line in lines {
        for w in line.windows(2) {
            let a = ((w[0].0 * 2.0).round() as i64, (w[0].1 * 2.0).round() as i64);
            let b = ((w[1].0 * 2.0).round() as i64, (w[1].1 * 2.0).round() as i64);
            let seg = if a <= b { (a, b) } else { (b, a) };
            out.push(seg);
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(nx: usize, ny: usize, values: Vec<f64>) -> MetricGrid {
        MetricGrid {
            x_values: (0..nx).map(|i| i as f64).collect(),
            y_values: (0..ny).map(|i| i as f64).collect(),
            values,
        }
    }

    #[test]
    fn two_by_two_column_split_gives_one_vertical_polyline() {
        // rows of [0, 1]: the threshold separates the columns
        let g = grid(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        let out = extract_boundaries(&g, 0.5, 0.2);
        assert!(!out.empty);
        assert_eq!(out.main.len(), 1, "expected one chained polyline: {:?}", out.main);
        let line = &out.main[0];
        assert!(line.iter().all(|&(x, _)| (x - 0.5).abs() < 1e-12));
        let ys: Vec<f64> = line.iter().map(|&(_, y)| y).collect();
        assert!(ys.contains(&-0.5) && ys.contains(&1.5));
    }

    #[test]
    fn uniform_grid_has_no_boundary() {
        let g = grid(3, 3, vec![0.1; 9]);
        let out = extract_boundaries(&g, 0.5, 0.2);
        assert!(out.empty);
        assert!(out.main.is_empty());
    }

    #[test]
    fn band_thresholds_differ_when_values_straddle_them() {
        let g = grid(3, 1, vec![0.7, 0.9, 1.3]);
        let out = extract_boundaries(&g, 1.0, 0.2);
        // main threshold 1.0 separates 0.9|1.3; lower 0.8 separates 0.7|0.9;
        // upper 1.2 separates 0.9|1.3
        assert_eq!(polyline_segments(&out.main).len(), 1);
        assert_eq!(polyline_segments(&out.lower).len(), 2);
        assert_eq!(polyline_segments(&out.upper).len(), 1);
    }

    proptest! {
        #[test]
        fn edges_match_brute_force_on_small_grids(
            nx in 1usize..6,
            ny in 1usize..6,
            raw in proptest::collection::vec(0.0f64..1.0, 36),
            threshold in 0.2f64..0.8,
        ) {
            let values: Vec<f64> = raw[..nx * ny].to_vec();
            let g = grid(nx, ny, values.clone());
            let out = extract_boundaries(&g, threshold, 0.2);
            let got = polyline_segments(&out.main);

            // brute force: enumerate discordant adjacent pairs
            let mask: Vec<bool> = values.iter().map(|&v| !(v <= threshold)).collect();
            let mut expected = Vec::new();
            for iy in 0..ny {
                for ix in 0..nx {
                    if ix + 1 < nx && mask[iy * nx + ix] != mask[iy * nx + ix + 1] {
                        let x = 2 * ix as i64 + 1;
                        expected.push(((x, 2 * iy as i64 - 1), (x, 2 * iy as i64 + 1)));
                    }
                    if iy + 1 < ny && mask[iy * nx + ix] != mask[(iy + 1) * nx + ix] {
                        let y = 2 * iy as i64 + 1;
                        expected.push(((2 * ix as i64 - 1, y), (2 * ix as i64 + 1, y)));
                    }
                }
            }
            expected.sort();
            prop_assert_eq!(got, expected);
        }
    }
}
