//! Residual operators and boundary/initial conditions.
//!
//! Sign conventions (interior residual `r`, driven to zero):
//! * convection:          `r = u_t + beta * u_x`
//! * reaction:            `r = u_t - rho * u * (1 - u)`
//! * wave:                `r = u_tt - c^2 * u_xx`
//! * reaction-diffusion:  `r = u_t - nu * u_xx + rho * u * (1 - u)` (sink)
//!   or `... - rho * u * (1 - u)` (source), per [`ReactionTerm`].

use super::sampling::PointSet;
use super::{Family, ProblemSpec, ReactionTerm};
use crate::error::{Error, Result};
use crate::mlp::{forward, forward_jet, Jet2, JetSpec, NetworkParameters, Scalar};

/// Value and input derivatives of a scalar field at one point, enough for
/// every residual operator here.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointJets {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
    pub ut: f64,
    pub utt: f64,
}

/// A scalar space-time field with the derivatives the residual operators
/// consume. Networks implement it via jet passes; tests implement it with
/// closed-form derivatives.
pub trait FieldJets {
    fn value(&self, x: f64, t: f64) -> f64;
    /// (u, u_x, u_xx)
    fn jet_x(&self, x: f64, t: f64) -> Jet2;
    /// (u, u_t, u_tt)
    fn jet_t(&self, x: f64, t: f64) -> Jet2;
}

impl FieldJets for NetworkParameters {
    fn value(&self, x: f64, t: f64) -> f64 {
        forward(self, &[x, t]).expect("scalar space-time network")[0]
    }

    fn jet_x(&self, x: f64, t: f64) -> Jet2 {
        forward_jet(self, &[x, t], 0).expect("scalar space-time network")[0]
    }

    fn jet_t(&self, x: f64, t: f64) -> Jet2 {
        forward_jet(self, &[x, t], 1).expect("scalar space-time network")[0]
    }
}

/// Residual value from precomputed jets; shared by the public operators
/// and the fused training-loss passes.
pub(crate) fn residual_terms<S: Scalar>(
    family: Family,
    coeff: f64,
    rd_reaction: ReactionTerm,
    u: S,
    ux: S,
    uxx: S,
    ut: S,
    utt: S,
) -> S {
    let c = S::from_f64(coeff);
    match family {
        Family::Convection => ut + c * ux,
        Family::Reaction => ut - c * u * (S::one() - u),
        Family::Wave => utt - c * c * uxx,
        Family::ReactionDiffusion => match rd_reaction {
            ReactionTerm::Sink => ut - uxx + c * u * (S::one() - u),
            ReactionTerm::Source => ut - uxx - c * u * (S::one() - u),
        },
        Family::Pendulum => unreachable!("pendulum has no PDE residual"),
    }
}

/// Reaction-diffusion carries nu on the diffusion term; fold it in before
/// calling [`residual_terms`] so the latter stays single-coefficient.
pub(crate) fn scaled_uxx<S: Scalar>(family: Family, aux_coeff: f64, uxx: S) -> S {
    match family {
        Family::ReactionDiffusion => S::from_f64(aux_coeff) * uxx,
        _ => uxx,
    }
}

/// Partial derivatives of the residual with respect to (u, ux, uxx, ut, utt).
pub(crate) struct ResidualPartials<S> {
    pub du: S,
    pub dux: S,
    pub duxx: S,
    pub dut: S,
    pub dutt: S,
}

pub(crate) fn residual_partials<S: Scalar>(
    family: Family,
    coeff: f64,
    aux_coeff: f64,
    rd_reaction: ReactionTerm,
    u: S,
) -> ResidualPartials<S> {
    let c = S::from_f64(coeff);
    let zero = S::zero();
    let one = S::one();
    match family {
        Family::Convection => ResidualPartials {
            du: zero,
            dux: c,
            duxx: zero,
            dut: one,
            dutt: zero,
        },
        Family::Reaction => ResidualPartials {
            du: -c * (one - (u + u)),
            dux: zero,
            duxx: zero,
            dut: one,
            dutt: zero,
        },
        Family::Wave => ResidualPartials {
            du: zero,
            dux: zero,
            duxx: -c * c,
            dut: zero,
            dutt: one,
        },
        Family::ReactionDiffusion => {
            let sgn = match rd_reaction {
                ReactionTerm::Sink => one,
                ReactionTerm::Source => -one,
            };
            ResidualPartials {
                du: sgn * c * (one - (u + u)),
                dux: zero,
                duxx: -S::from_f64(aux_coeff),
                dut: one,
                dutt: zero,
            }
        }
        Family::Pendulum => unreachable!("pendulum has no PDE residual"),
    }
}

/// Jet channels (axis, needs-second-derivative) each family requires.
/// Axis 0 is x, axis 1 is t.
pub(crate) fn family_jet_spec(family: Family) -> JetSpec {
    let axes = match family {
        Family::Convection => vec![(0, false), (1, false)],
        Family::Reaction => vec![(1, false)],
        Family::Wave => vec![(0, true), (1, true)],
        Family::ReactionDiffusion => vec![(0, true), (1, false)],
        Family::Pendulum => Vec::new(),
    };
    JetSpec { axes }
}

/// Interior residual of the differential operator at one point, for any
/// field implementation.
pub fn residual_at(spec: &ProblemSpec, field: &dyn FieldJets, point: [f64; 2]) -> f64 {
    let [x, t] = point;
    let (u, ux, uxx) = match spec.family {
        Family::Reaction => {
            let v = field.value(x, t);
            (v, 0.0, 0.0)
        }
        _ => {
            let jx = field.jet_x(x, t);
            (jx.value, jx.d1, jx.d2)
        }
    };
    let jt = field.jet_t(x, t);
    residual_terms(
        spec.family,
        spec.coeff,
        spec.rd_reaction,
        u,
        ux,
        scaled_uxx(spec.family, spec.aux_coeff, uxx),
        jt.d1,
        jt.d2,
    )
}

/// Interior residual assembled from the network's jet passes.
pub fn residual(spec: &ProblemSpec, params: &NetworkParameters, point: [f64; 2]) -> Result<f64> {
    if !spec.family.is_pde() {
        return Err(Error::Unsupported(
            "pendulum has no PDE residual operator".into(),
        ));
    }
    if params.arch().input_dim() != 2 || params.arch().output_dim() != 1 {
        return Err(Error::config(format!(
            "PDE network must map 2 inputs to 1 output, got {:?}",
            params.arch().layer_sizes()
        )));
    }
    Ok(residual_at(spec, params, point))
}

/// Initial condition `u(x, 0)`.
pub fn initial_condition(family: Family, aux_coeff: f64, x: f64) -> f64 {
    match family {
        Family::Convection => x.sin(),
        Family::Reaction | Family::ReactionDiffusion => reaction_bump(x),
        Family::Wave => {
            (std::f64::consts::PI * x).sin()
                + 0.5 * (aux_coeff * std::f64::consts::PI * x).sin()
        }
        Family::Pendulum => unreachable!("pendulum has no PDE initial condition"),
    }
}

/// Gaussian bump `exp(-(x - pi)^2 / (2 (pi/4)^2))`.
pub(crate) fn reaction_bump(x: f64) -> f64 {
    let s = std::f64::consts::PI / 4.0;
    let d = x - std::f64::consts::PI;
    (-d * d / (2.0 * s * s)).exp()
}

/// Boundary and initial-condition residual vector over a point set.
///
/// Periodic families emit `u(x,0) - IC(x)` at initial points and
/// `u(x0,t) - u(x1,t)` at paired points; the wave family additionally
/// emits the zero-velocity condition `u_t(x,0)` and homogeneous Dirichlet
/// values at both walls.
pub fn boundary_residuals(
    spec: &ProblemSpec,
    field: &dyn FieldJets,
    points: &PointSet,
) -> Result<Vec<f64>> {
    if !spec.family.is_pde() {
        return Err(Error::Unsupported(
            "pendulum has no boundary conditions".into(),
        ));
    }
    points.check_pairing(spec)?;
    let mut out = Vec::with_capacity(points.boundary_len());
    for &[x, t] in &points.initial {
        out.push(field.value(x, t) - initial_condition(spec.family, spec.aux_coeff, x));
    }
    for &(l, r) in &points.periodic_pairs {
        out.push(field.value(l[0], l[1]) - field.value(r[0], r[1]));
    }
    for &[x, t] in &points.velocity_initial {
        out.push(field.jet_t(x, t).d1);
    }
    for &[x, t] in &points.dirichlet {
        out.push(field.value(x, t));
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::test_fields::ClosureField;
    use super::*;
    use crate::problems::TWO_PI;

    fn convection_solution_field(beta: f64) -> impl FieldJets {
        ClosureField {
            fx: move |x: f64, t: f64| {
                let p = x - beta * t;
                (p.sin(), p.cos(), -p.sin())
            },
            ft: move |x: f64, t: f64| {
                let p = x - beta * t;
                (p.sin(), -beta * p.cos(), -beta * beta * p.sin())
            },
        }
    }

    #[test]
    fn convection_solution_annihilates_operator() {
        let spec = ProblemSpec::convection(5.0);
        let field = convection_solution_field(5.0);
        for &(x, t) in &[(0.1, 0.2), (3.0, 0.9), (6.0, 0.5)] {
            let r = residual_at(&spec, &field, [x, t]);
            assert!(r.abs() <= 1e-9, "r({x},{t}) = {r}");
        }
    }

    #[test]
    fn convection_of_linear_profile() {
        // u = x: u_t = 0, u_x = 1, so r = beta
        let spec = ProblemSpec::convection(5.0);
        let field = ClosureField {
            fx: |x: f64, _t: f64| (x, 1.0, 0.0),
            ft: |x: f64, _t: f64| (x, 0.0, 0.0),
        };
        assert!((residual_at(&spec, &field, [1.0, 0.3]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn reaction_of_constant_half() {
        let spec = ProblemSpec::reaction(2.0);
        let field = ClosureField {
            fx: |_x: f64, _t: f64| (0.5, 0.0, 0.0),
            ft: |_x: f64, _t: f64| (0.5, 0.0, 0.0),
        };
        assert!((residual_at(&spec, &field, [1.0, 0.5]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn reaction_initial_condition_peaks_at_pi() {
        assert!((initial_condition(Family::Reaction, 0.0, std::f64::consts::PI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_pair_of_periodic_solution_vanishes() {
        // u = sin(x - beta t) is 2pi-periodic in x
        let beta = 7.0;
        let spec = ProblemSpec::convection(beta);
        let field = convection_solution_field(beta);
        let mut points = PointSet::default();
        points
            .periodic_pairs
            .push(([0.0, 0.4], [TWO_PI, 0.4]));
        let out = boundary_residuals(&spec, &field, &points).unwrap();
        assert!(out[0].abs() < 1e-12);
    }

    #[test]
    fn wave_zero_velocity_condition_holds_for_standing_wave() {
        // u = sin(pi x) cos(c pi t): u_t(x, 0) = 0
        let c = 2.0;
        let spec = ProblemSpec::wave(c);
        let pi = std::f64::consts::PI;
        let field = ClosureField {
            fx: move |x: f64, t: f64| {
                let ct = (c * pi * t).cos();
                (
                    (pi * x).sin() * ct,
                    pi * (pi * x).cos() * ct,
                    -pi * pi * (pi * x).sin() * ct,
                )
            },
            ft: move |x: f64, t: f64| {
                let sx = (pi * x).sin();
                (
                    sx * (c * pi * t).cos(),
                    -c * pi * sx * (c * pi * t).sin(),
                    -c * c * pi * pi * sx * (c * pi * t).cos(),
                )
            },
        };
        let mut points = PointSet::default();
        points.velocity_initial.push([0.3, 0.0]);
        let out = boundary_residuals(&spec, &field, &points).unwrap();
        assert!(out[0].abs() < 1e-12);
    }

    #[test]
    fn mismatched_pairing_is_rejected() {
        let spec = ProblemSpec::convection(5.0);
        let field = convection_solution_field(5.0);
        let mut points = PointSet::default();
        // pair with mismatched times
        points.periodic_pairs.push(([0.0, 0.1], [TWO_PI, 0.2]));
        assert!(boundary_residuals(&spec, &field, &points).is_err());
    }
}
