//! Benchmark differential-equation problems: residual operators, boundary
//! and initial conditions, reference solutions, collocation samplers, the
//! damped pendulum, and error metrics.
//!
//! All operations are pure given `(spec, seed)`; concurrent evaluation
//! across sweep cells is safe.

pub mod pendulum;
pub mod residual;
pub mod sampling;
pub mod solutions;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{embed_sphere, node_test_error, pendulum_truth, pushforward_field, Trajectory};
pub use residual::{
    boundary_residuals, initial_condition, residual, residual_at, FieldJets, PointJets,
};
pub use sampling::{sample_points, PointSet};
pub use solutions::{
    analytic_solution, network_grid, reference_grid, reference_solution_grid, relative_l2_error,
    SpaceTimeGrid,
};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Problem family. PDE network inputs are `(x, t)`: x on axis 0, t on axis 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Convection,
    Reaction,
    Wave,
    ReactionDiffusion,
    Pendulum,
}

impl Family {
    pub fn is_pde(self) -> bool {
        !matches!(self, Family::Pendulum)
    }
}

/// Sign of the reaction term in the reaction-diffusion right-hand side
/// `u_t = nu u_xx -/+ rho u(1-u)`: `Sink` subtracts the reaction term from
/// the diffusion flux, `Source` (Fisher-type) adds it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionTerm {
    #[default]
    Sink,
    Source,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

/// Which differential equation, its physical coefficient, domain bounds,
/// and supervision quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: Family,
    /// beta (convection), rho (reaction, reaction-diffusion), c (wave),
    /// damping b (pendulum).
    pub coeff: f64,
    /// nu for reaction-diffusion; initial-condition frequency for wave.
    pub aux_coeff: f64,
    pub domain: Domain,
    /// Residual collocation point count (PDE families).
    pub n_res: usize,
    /// Boundary/initial point budget (PDE families).
    pub n_bc: usize,
    /// Training horizon in seconds (pendulum).
    pub horizon: f64,
    /// Observation step in seconds (pendulum).
    pub dt: f64,
    /// Reaction-diffusion reaction-term sign.
    #[serde(default)]
    pub rd_reaction: ReactionTerm,
}

impl ProblemSpec {
    pub fn convection(beta: f64) -> Self {
        ProblemSpec {
            family: Family::Convection,
            coeff: beta,
            aux_coeff: 0.0,
            domain: Domain {
                x: (0.0, TWO_PI),
                t: (0.0, 1.0),
            },
            n_res: 1000,
            n_bc: 200,
            horizon: 0.0,
            dt: 0.0,
            rd_reaction: ReactionTerm::default(),
        }
    }

    pub fn reaction(rho: f64) -> Self {
        ProblemSpec {
            family: Family::Reaction,
            coeff: rho,
            ..Self::convection(0.0).with_coeff(rho)
        }
    }

    pub fn wave(c: f64) -> Self {
        ProblemSpec {
            family: Family::Wave,
            coeff: c,
            aux_coeff: 3.0,
            domain: Domain {
                x: (0.0, 1.0),
                t: (0.0, 1.0),
            },
            n_res: 1000,
            n_bc: 200,
            horizon: 0.0,
            dt: 0.0,
            rd_reaction: ReactionTerm::default(),
        }
    }

    pub fn reaction_diffusion(rho: f64) -> Self {
        ProblemSpec {
            family: Family::ReactionDiffusion,
            coeff: rho,
            aux_coeff: 5.0,
            ..Self::convection(0.0).with_coeff(rho)
        }
    }

    pub fn pendulum(b: f64) -> Self {
        ProblemSpec {
            family: Family::Pendulum,
            coeff: b,
            aux_coeff: 0.0,
            domain: Domain {
                x: (0.0, 0.0),
                t: (0.0, 20.0),
            },
            n_res: 0,
            n_bc: 0,
            horizon: 20.0,
            dt: 0.05,
            rd_reaction: ReactionTerm::default(),
        }
    }

    fn with_coeff(mut self, coeff: f64) -> Self {
        self.coeff = coeff;
        self
    }

    /// Check sweep-range and supervision invariants. Called at the
    /// configuration boundary; library internals accept out-of-range
    /// coefficients (useful for oracles and edge-case tests).
    pub fn validate(&self) -> Result<()> {
        let range = match self.family {
            Family::Convection => (5.0, 70.0),
            Family::Reaction | Family::ReactionDiffusion => (1.0, 30.0),
            Family::Wave => (0.1, 6.0),
            Family::Pendulum => (0.1, 1.0),
        };
        if !(self.coeff >= range.0 && self.coeff <= range.1) {
            return Err(Error::config(format!(
                "coefficient {} outside the swept range [{}, {}] for {:?}",
                self.coeff, range.0, range.1, self.family
            )));
        }
        if self.family.is_pde() {
            if self.n_res < 1 {
                return Err(Error::config("n_res must be at least 1"));
            }
        } else {
            if self.dt <= 0.0 {
                return Err(Error::config("pendulum dt must be positive"));
            }
            if self.horizon < self.dt {
                return Err(Error::config("pendulum horizon must be at least dt"));
            }
        }
        Ok(())
    }

    pub fn in_domain(&self, x: f64, t: f64) -> bool {
        x >= self.domain.x.0 && x <= self.domain.x.1 && t >= self.domain.t.0 && t <= self.domain.t.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_enforces_sweep_ranges() {
        assert!(ProblemSpec::convection(5.0).validate().is_ok());
        assert!(ProblemSpec::convection(70.0).validate().is_ok());
        assert!(ProblemSpec::convection(4.0).validate().is_err());
        assert!(ProblemSpec::wave(6.5).validate().is_err());
        assert!(ProblemSpec::pendulum(0.5).validate().is_ok());
        assert!(ProblemSpec::pendulum(2.0).validate().is_err());
    }

    #[test]
    fn pendulum_needs_positive_dt_and_horizon() {
        let mut p = ProblemSpec::pendulum(0.5);
        p.dt = 0.0;
        assert!(p.validate().is_err());
        p.dt = 0.05;
        p.horizon = 0.01;
        assert!(p.validate().is_err());
    }
}
