//! Collocation and boundary point sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Family, ProblemSpec};
use crate::error::{Error, Result};

/// Residual, initial, and boundary points with pairing metadata for
/// periodic constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    /// Interior collocation points (x, t).
    pub residual: Vec<[f64; 2]>,
    /// Initial-condition points on t = 0.
    pub initial: Vec<[f64; 2]>,
    /// Paired periodic points: (left wall, right wall) at equal t.
    pub periodic_pairs: Vec<([f64; 2], [f64; 2])>,
    /// Zero-velocity initial points (wave only).
    pub velocity_initial: Vec<[f64; 2]>,
    /// Homogeneous Dirichlet wall points (wave only).
    pub dirichlet: Vec<[f64; 2]>,
}

impl PointSet {
    /// Total number of boundary/initial residuals this set induces.
    pub fn boundary_len(&self) -> usize {
        self.initial.len()
            + self.periodic_pairs.len()
            + self.velocity_initial.len()
            + self.dirichlet.len()
    }

    pub fn check_pairing(&self, spec: &ProblemSpec) -> Result<()> {
        let (x0, x1) = spec.domain.x;
        for (l, r) in &self.periodic_pairs {
            if l[1] != r[1] || l[0] != x0 || r[0] != x1 {
                return Err(Error::config(format!(
                    "bad periodic pair ({l:?}, {r:?}); expected x = {x0} / {x1} at equal t"
                )));
            }
        }
        Ok(())
    }
}

/// Draw the training point set: residual points uniform in the open
/// domain, initial points equispaced on t = 0, periodic pairs (or wall
/// points) equispaced in t. Deterministic per seed.
pub fn sample_points(spec: &ProblemSpec, seed: u64) -> Result<PointSet> {
    if !spec.family.is_pde() {
        return Err(Error::Unsupported(
            "point sampling applies to PDE families only".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, x1) = spec.domain.x;
    let (t0, t1) = spec.domain.t;
    let mut set = PointSet::default();
    set.residual.reserve(spec.n_res);
    for _ in 0..spec.n_res {
        let x = rng.gen_range(x0..x1);
        let t = rng.gen_range(t0..t1);
        set.residual.push([x, t]);
    }

    let equispaced = |n: usize, a: f64, b: f64| -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![(a + b) / 2.0];
        }
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    };

    match spec.family {
        Family::Convection | Family::Reaction | Family::ReactionDiffusion => {
            let n_ic = spec.n_bc / 2;
            let n_pair = spec.n_bc - n_ic;
            for x in equispaced(n_ic, x0, x1) {
                set.initial.push([x, t0]);
            }
            for t in equispaced(n_pair, t0, t1) {
                set.periodic_pairs.push(([x0, t], [x1, t]));
            }
        }
        Family::Wave => {
            let n_ic = spec.n_bc / 2;
            let n_wall = spec.n_bc - n_ic;
            for x in equispaced(n_ic, x0, x1) {
                set.initial.push([x, t0]);
                set.velocity_initial.push([x, t0]);
            }
            let left = n_wall / 2;
            for t in equispaced(left, t0, t1) {
                set.dirichlet.push([x0, t]);
            }
            for t in equispaced(n_wall - left, t0, t1) {
                set.dirichlet.push([x1, t]);
            }
        }
        Family::Pendulum => unreachable!(),
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_counts_match() {
        let mut spec = ProblemSpec::convection(5.0);
        spec.n_res = 100;
        spec.n_bc = 40;
        let a = sample_points(&spec, 3).unwrap();
        let b = sample_points(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.residual.len(), 100);
        assert_eq!(a.initial.len(), 20);
        assert_eq!(a.periodic_pairs.len(), 20);
    }

    #[test]
    fn different_seeds_differ() {
        let spec = ProblemSpec::convection(5.0);
        let a = sample_points(&spec, 0).unwrap();
        let b = sample_points(&spec, 1).unwrap();
        assert_ne!(a.residual, b.residual);
    }

    #[test]
    fn all_points_inside_domain() {
        for spec in [
            ProblemSpec::convection(5.0),
            ProblemSpec::reaction(2.0),
            ProblemSpec::wave(1.0),
            ProblemSpec::reaction_diffusion(3.0),
        ] {
            let set = sample_points(&spec, 11).unwrap();
            for &[x, t] in set
                .residual
                .iter()
                .chain(&set.initial)
                .chain(&set.velocity_initial)
                .chain(&set.dirichlet)
            {
                assert!(spec.in_domain(x, t), "({x},{t}) outside {:?}", spec.family);
            }
            for &(l, r) in &set.periodic_pairs {
                assert!(spec.in_domain(l[0], l[1]) && spec.in_domain(r[0], r[1]));
            }
            set.check_pairing(&spec).unwrap();
        }
    }

    #[test]
    fn wave_gets_velocity_and_wall_points() {
        let spec = ProblemSpec::wave(1.0);
        let set = sample_points(&spec, 0).unwrap();
        assert!(!set.velocity_initial.is_empty());
        assert!(!set.dirichlet.is_empty());
        assert!(set.periodic_pairs.is_empty());
        assert_eq!(set.boundary_len(), spec.n_bc / 2 * 2 + spec.n_bc - spec.n_bc / 2);
    }
}
