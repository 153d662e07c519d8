//! Closed-form and numerical reference solutions plus the test-error metric.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::residual::{initial_condition, reaction_bump};
use super::{Family, ProblemSpec, ReactionTerm};
use crate::error::{Error, Result};
use crate::mlp::{JetSpec, MlpTape, NetworkParameters};

/// Default PDE evaluation grid (space x time).
pub const EVAL_NX: usize = 256;
pub const EVAL_NT: usize = 100;

/// Values on a rectangular space-time lattice; x is periodic-exclusive,
/// t includes both endpoints. Row-major in time: `values[it * nx + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpaceTimeGrid {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn nt(&self) -> usize {
        self.ts.len()
    }
}

fn grid_axes(spec: &ProblemSpec, nx: usize, nt: usize) -> (Vec<f64>, Vec<f64>) {
    let (x0, x1) = spec.domain.x;
    let (t0, t1) = spec.domain.t;
    let xs = (0..nx)
        .map(|i| x0 + (x1 - x0) * i as f64 / nx as f64)
        .collect();
    let ts = (0..nt)
        .map(|j| {
            if nt == 1 {
                t0
            } else {
                t0 + (t1 - t0) * j as f64 / (nt - 1) as f64
            }
        })
        .collect();
    (xs, ts)
}

/// Closed-form solution for the families that have one.
pub fn analytic_solution(spec: &ProblemSpec, point: [f64; 2]) -> Result<f64> {
    let [x, t] = point;
    match spec.family {
        Family::Convection => Ok((x - spec.coeff * t).sin()),
        Family::Reaction => Ok(reaction_closed_form(spec.coeff, x, t)),
        Family::Wave => {
            let pi = std::f64::consts::PI;
            let (c, k) = (spec.coeff, spec.aux_coeff);
            Ok((pi * x).sin() * (c * pi * t).cos()
                + 0.5 * (k * pi * x).sin() * (k * c * pi * t).cos())
        }
        Family::ReactionDiffusion | Family::Pendulum => Err(Error::Unsupported(format!(
            "{:?} has no closed-form solution",
            spec.family
        ))),
    }
}

/// `u(x,t) = h e^{rho t} / (h e^{rho t} + 1 - h)` with the Gaussian bump h.
pub(crate) fn reaction_closed_form(rho: f64, x: f64, t: f64) -> f64 {
    let h = reaction_bump(x);
    let e = (rho * t).exp();
    h * e / (h * e + 1.0 - h)
}

/// Explicit finite-difference reference for reaction-diffusion: second
/// order central Laplacian, periodic in x, explicit Heun sub-stepping held
/// under the diffusion stability limit (second order in space and time).
pub fn reference_solution_grid(spec: &ProblemSpec, nx: usize, nt: usize) -> Result<SpaceTimeGrid> {
    if spec.family != Family::ReactionDiffusion {
        return Err(Error::Unsupported(
            "finite-difference reference is only for reaction-diffusion".into(),
        ));
    }
    if nx < 4 || nt < 2 {
        return Err(Error::config("reference grid needs nx >= 4, nt >= 2"));
    }
    const MAX_SUBSTEPS: usize = 20_000_000;
    let (xs, ts) = grid_axes(spec, nx, nt);
    let dx = (spec.domain.x.1 - spec.domain.x.0) / nx as f64;
    let nu = spec.aux_coeff;
    let rho = spec.coeff;
    let sign = match spec.rd_reaction {
        ReactionTerm::Sink => -1.0,
        ReactionTerm::Source => 1.0,
    };
    // stability: forward Euler needs dt <= dx^2 / (2 nu); halve for margin
    let dt_stab = if nu > 0.0 {
        0.5 * dx * dx / (2.0 * nu)
    } else {
        f64::INFINITY
    };
    // keep the reaction update well-resolved too
    let dt_react = if rho > 0.0 { 0.1 / rho } else { f64::INFINITY };
    let dt_cap = dt_stab.min(dt_react);

    let mut u: Vec<f64> = xs.iter().map(|&x| initial_condition(spec.family, 0.0, x)).collect();
    let mut values = Vec::with_capacity(nx * nt);
    values.extend_from_slice(&u);
    let rhs = |u: &[f64], out: &mut [f64]| {
        for i in 0..nx {
            let im = if i == 0 { nx - 1 } else { i - 1 };
            let ip = if i == nx - 1 { 0 } else { i + 1 };
            let lap = (u[im] - 2.0 * u[i] + u[ip]) / (dx * dx);
            out[i] = nu * lap + sign * rho * u[i] * (1.0 - u[i]);
        }
    };
    let mut k1 = vec![0.0f64; nx];
    let mut k2 = vec![0.0f64; nx];
    let mut mid = vec![0.0f64; nx];
    let mut total_steps = 0usize;
    for w in ts.windows(2) {
        let span = w[1] - w[0];
        let n_sub = (span / dt_cap).ceil().max(1.0) as usize;
        total_steps += n_sub;
        if total_steps > MAX_SUBSTEPS {
            return Err(Error::Numerical(format!(
                "reaction-diffusion reference needs more than {MAX_SUBSTEPS} sub-steps"
            )));
        }
        let dt = span / n_sub as f64;
        for _ in 0..n_sub {
            rhs(&u, &mut k1);
            for i in 0..nx {
                mid[i] = u[i] + dt * k1[i];
            }
            rhs(&mid, &mut k2);
            for i in 0..nx {
                u[i] += 0.5 * dt * (k1[i] + k2[i]);
            }
        }
        values.extend_from_slice(&u);
    }
    Ok(SpaceTimeGrid { xs, ts, values })
}

/// Evaluate the closed form (or finite-difference reference) on the
/// standard lattice, with an optional disk cache for reference solves.
pub fn reference_grid(
    spec: &ProblemSpec,
    nx: usize,
    nt: usize,
    cache_dir: Option<&Path>,
) -> Result<SpaceTimeGrid> {
    match spec.family {
        Family::Convection | Family::Reaction | Family::Wave => {
            let (xs, ts) = grid_axes(spec, nx, nt);
            let mut values = Vec::with_capacity(nx * nt);
            for &t in &ts {
                for &x in &xs {
                    values.push(analytic_solution(spec, [x, t])?);
                }
            }
            Ok(SpaceTimeGrid { xs, ts, values })
        }
        Family::ReactionDiffusion => {
            let key = format!(
                "rd_{:.6e}_{:.6e}_{:?}_{}x{}.json",
                spec.coeff, spec.aux_coeff, spec.rd_reaction, nx, nt
            );
            if let Some(dir) = cache_dir {
                let path = dir.join(&key);
                if path.exists() {
                    let text = std::fs::read_to_string(&path)?;
                    if let Ok(grid) = serde_json::from_str::<SpaceTimeGrid>(&text) {
                        return Ok(grid);
                    }
                }
            }
            let grid = reference_solution_grid(spec, nx, nt)?;
            if let Some(dir) = cache_dir {
                std::fs::create_dir_all(dir)?;
                let tmp = dir.join(format!("{key}.tmp.{}", std::process::id()));
                std::fs::write(&tmp, serde_json::to_string(&grid).expect("grid serializes"))?;
                let _ = std::fs::rename(&tmp, dir.join(&key));
            }
            Ok(grid)
        }
        Family::Pendulum => Err(Error::Unsupported(
            "pendulum uses trajectory references".into(),
        )),
    }
}

/// Network predictions on the same lattice.
pub fn network_grid(
    params: &NetworkParameters,
    spec: &ProblemSpec,
    nx: usize,
    nt: usize,
) -> Result<SpaceTimeGrid> {
    if params.arch().input_dim() != 2 || params.arch().output_dim() != 1 {
        return Err(Error::config(
            "PDE network must map 2 inputs to 1 output",
        ));
    }
    let (xs, ts) = grid_axes(spec, nx, nt);
    let mut tape: MlpTape<f64> = MlpTape::new(params.arch(), &JetSpec::value_only())?;
    let mut values = Vec::with_capacity(nx * nt);
    for &t in &ts {
        for &x in &xs {
            tape.forward(params.theta(), &[x, t]);
            values.push(tape.value_out()[0]);
        }
    }
    Ok(SpaceTimeGrid { xs, ts, values })
}

/// `|pred - reference|_2 / |reference|_2` over the flattened grids.
pub fn relative_l2_error(predicted: &SpaceTimeGrid, reference: &SpaceTimeGrid) -> Result<f64> {
    relative_l2_values(&predicted.values, &reference.values)
}

pub fn relative_l2_values(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Dimension {
            expected: reference.len(),
            got: predicted.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::Empty("reference grid".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, r) in predicted.iter().zip(reference) {
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::Numerical(
            "reference grid has zero norm; relative error undefined".into(),
        ));
    }
    Ok((num / den).sqrt())
}
