//! Loss assembly: collocation least squares, trajectory fitting,
//! physics-augmented trajectory fitting, and augmented Lagrangian forms.
//!
//! Every loss implements [`LossExpr`] once, generically over the scalar
//! type, so plain evaluation, exact gradients, and exact Hessian-vector
//! products all share one code path. Gradient buffers passed to `eval`
//! must be zero-initialized; implementations accumulate into them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mlp::{JetSpec, LossExpr, MlpArch, MlpTape, Scalar};
use crate::problems::residual::{
    family_jet_spec, initial_condition, residual_partials, residual_terms, scaled_uxx,
};
use crate::problems::{pushforward_field, Family, PointSet, ProblemSpec, Trajectory};

/// Multipliers and penalty for an augmented Lagrangian formulation.
#[derive(Clone, Debug, PartialEq)]
pub struct AlmState {
    pub multipliers: Vec<f64>,
    pub mu: f64,
    pub growth: f64,
    pub mu_cap: f64,
}

/// Hard guard against penalty blow-up.
pub const MU_OVERFLOW_GUARD: f64 = 1e12;

impl AlmState {
    /// `mu` starts at `mu0` and grows by `growth` per update, capped at
    /// `mu0 * growth^cap_pow`.
    pub fn new(n_constraints: usize, mu0: f64, growth: f64, cap_pow: i32) -> Self {
        AlmState {
            multipliers: vec![0.0; n_constraints],
            mu: mu0,
            growth,
            mu_cap: (mu0 * growth.powi(cap_pow)).min(MU_OVERFLOW_GUARD),
        }
    }

    /// Multiplier step `lambda_i += mu c_i`, then penalty growth.
    pub fn update(&mut self, constraint_values: &[f64]) -> Result<()> {
        if constraint_values.len() != self.multipliers.len() {
            return Err(Error::Dimension {
                expected: self.multipliers.len(),
                got: constraint_values.len(),
            });
        }
        for (lam, c) in self.multipliers.iter_mut().zip(constraint_values) {
            *lam += self.mu * c;
        }
        self.mu = (self.mu * self.growth).min(self.mu_cap).min(MU_OVERFLOW_GUARD);
        Ok(())
    }
}

/// `1/(2 n_r) sum r^2 + 1/(2 n_b) sum b^2`, each term skipped when its
/// point list is empty. Shared by the fused network loss and oracle tests.
pub fn mean_square_loss(residuals: &[f64], boundary: &[f64]) -> Result<f64> {
    if residuals.is_empty() && boundary.is_empty() {
        return Err(Error::Empty("no residual or boundary points".into()));
    }
    let mut total = 0.0;
    if !residuals.is_empty() {
        total += residuals.iter().map(|r| r * r).sum::<f64>() / (2.0 * residuals.len() as f64);
    }
    if !boundary.is_empty() {
        total += boundary.iter().map(|b| b * b).sum::<f64>() / (2.0 * boundary.len() as f64);
    }
    Ok(total)
}

fn channel_indices(spec: &JetSpec) -> (Option<(usize, bool)>, Option<(usize, bool)>) {
    let mut x = None;
    let mut t = None;
    for (c, &(axis, second)) in spec.axes.iter().enumerate() {
        match axis {
            0 => x = Some((c, second)),
            1 => t = Some((c, second)),
            _ => {}
        }
    }
    (x, t)
}

/// Collocation least-squares objective of one PDE problem; with
/// [`AlmState`] attached, the interior residuals become equality
/// constraints and the boundary term stays as the objective.
pub struct PinnLoss {
    pub spec: ProblemSpec,
    pub arch: MlpArch,
    pub points: Arc<PointSet>,
    pub alm: Option<AlmState>,
}

impl PinnLoss {
    pub fn new(spec: ProblemSpec, arch: MlpArch, points: Arc<PointSet>) -> Result<Self> {
        if !spec.family.is_pde() {
            return Err(Error::Unsupported("collocation loss needs a PDE family".into()));
        }
        if arch.input_dim() != 2 || arch.output_dim() != 1 {
            return Err(Error::config(
                "PDE network must map 2 inputs to 1 output",
            ));
        }
        if points.residual.is_empty() && points.boundary_len() == 0 {
            return Err(Error::Empty("empty point set".into()));
        }
        Ok(PinnLoss {
            spec,
            arch,
            points,
            alm: None,
        })
    }

    pub fn with_alm(mut self, state: AlmState) -> Result<Self> {
        if state.multipliers.len() != self.points.residual.len() {
            return Err(Error::Dimension {
                expected: self.points.residual.len(),
                got: state.multipliers.len(),
            });
        }
        self.alm = Some(state);
        Ok(self)
    }

    /// Interior residual values (the ALM constraint vector).
    pub fn constraints(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.points.residual.len());
        self.for_each_residual::<f64>(theta, |r, _| out.push(r))?;
        Ok(out)
    }

    fn for_each_residual<S: Scalar>(
        &self,
        theta: &[S],
        mut visit: impl FnMut(S, &mut MlpTape<S>),
    ) -> Result<()> {
        let jet_spec = family_jet_spec(self.spec.family);
        let (cx, ct) = channel_indices(&jet_spec);
        let mut tape: MlpTape<S> = MlpTape::new(&self.arch, &jet_spec)?;
        let mut input = [S::zero(); 2];
        for &[x, t] in &self.points.residual {
            input[0] = S::from_f64(x);
            input[1] = S::from_f64(t);
            tape.forward(theta, &input);
            let u = tape.value_out()[0];
            let (ux, uxx) = match cx {
                Some((c, second)) => (
                    tape.d1_out(c)[0],
                    if second { tape.d2_out(c)[0] } else { S::zero() },
                ),
                None => (S::zero(), S::zero()),
            };
            let (ut, utt) = match ct {
                Some((c, second)) => (
                    tape.d1_out(c)[0],
                    if second { tape.d2_out(c)[0] } else { S::zero() },
                ),
                None => (S::zero(), S::zero()),
            };
            let r = residual_terms(
                self.spec.family,
                self.spec.coeff,
                self.spec.rd_reaction,
                u,
                ux,
                scaled_uxx(self.spec.family, self.spec.aux_coeff, uxx),
                ut,
                utt,
            );
            visit(r, &mut tape);
        }
        Ok(())
    }
}

impl LossExpr for PinnLoss {
    fn dim(&self) -> usize {
        self.arch.param_count()
    }

    fn eval<S: Scalar>(&self, theta: &[S], mut grad: Option<&mut [S]>) -> Result<S> {
        let jet_spec = family_jet_spec(self.spec.family);
        let (cx, ct) = channel_indices(&jet_spec);
        let n_res = self.points.residual.len();
        let mut total = S::zero();

        // interior residual term
        if n_res > 0 {
            let inv_n = S::from_f64(1.0 / n_res as f64);
            let mut idx = 0usize;
            let spec = &self.spec;
            let alm = self.alm.as_ref();
            let mut residual_sq = S::zero();
            let mut alm_part = S::zero();
            let grad_ref = &mut grad;
            self.for_each_residual::<S>(theta, |r, tape| {
                let seed_scale = match alm {
                    None => {
                        residual_sq += r * r;
                        r * inv_n
                    }
                    Some(state) => {
                        let lam = S::from_f64(state.multipliers[idx]);
                        let mu = S::from_f64(state.mu);
                        alm_part += lam * r + S::from_f64(0.5) * mu * r * r;
                        lam + mu * r
                    }
                };
                idx += 1;
                if let Some(g) = grad_ref.as_deref_mut() {
                    let u = tape.value_out()[0];
                    let partials = residual_partials(
                        spec.family,
                        spec.coeff,
                        spec.aux_coeff,
                        spec.rd_reaction,
                        u,
                    );
                    tape.clear_seeds();
                    tape.seed_value_mut()[0] = seed_scale * partials.du;
                    if let Some((c, second)) = cx {
                        tape.seed_d1_mut(c)[0] = seed_scale * partials.dux;
                        if second {
                            tape.seed_d2_mut(c)[0] = seed_scale * partials.duxx;
                        }
                    }
                    if let Some((c, second)) = ct {
                        tape.seed_d1_mut(c)[0] = seed_scale * partials.dut;
                        if second {
                            tape.seed_d2_mut(c)[0] = seed_scale * partials.dutt;
                        }
                    }
                    tape.backward(theta, g, None);
                }
            })?;
            total += match self.alm {
                None => S::from_f64(0.5) * inv_n * residual_sq,
                Some(_) => alm_part,
            };
        }

        // boundary / initial term
        let n_bc = self.points.boundary_len();
        if n_bc > 0 {
            let inv_n = S::from_f64(1.0 / n_bc as f64);
            let mut bc_sq = S::zero();
            let mut value_tape: MlpTape<S> = MlpTape::new(&self.arch, &JetSpec::value_only())?;
            let eval_value = |tape: &mut MlpTape<S>, x: f64, t: f64| -> S {
                tape.forward(theta, &[S::from_f64(x), S::from_f64(t)]);
                tape.value_out()[0]
            };
            let backprop_value =
                |tape: &mut MlpTape<S>, x: f64, t: f64, seed: S, g: &mut [S]| {
                    tape.forward(theta, &[S::from_f64(x), S::from_f64(t)]);
                    tape.clear_seeds();
                    tape.seed_value_mut()[0] = seed;
                    tape.backward(theta, g, None);
                };
            for &[x, t] in &self.points.initial {
                let b = eval_value(&mut value_tape, x, t)
                    - S::from_f64(initial_condition(self.spec.family, self.spec.aux_coeff, x));
                bc_sq += b * b;
                if let Some(g) = grad.as_deref_mut() {
                    backprop_value(&mut value_tape, x, t, b * inv_n, g);
                }
            }
            for &(l, r) in &self.points.periodic_pairs {
                let b = eval_value(&mut value_tape, l[0], l[1])
                    - eval_value(&mut value_tape, r[0], r[1]);
                bc_sq += b * b;
                if let Some(g) = grad.as_deref_mut() {
                    backprop_value(&mut value_tape, l[0], l[1], b * inv_n, g);
                    backprop_value(&mut value_tape, r[0], r[1], -(b * inv_n), g);
                }
            }
            if !self.points.velocity_initial.is_empty() {
                let mut jet_t: MlpTape<S> = MlpTape::new(&self.arch, &JetSpec::single(1, false))?;
                for &[x, t] in &self.points.velocity_initial {
                    jet_t.forward(theta, &[S::from_f64(x), S::from_f64(t)]);
                    let b = jet_t.d1_out(0)[0];
                    bc_sq += b * b;
                    if let Some(g) = grad.as_deref_mut() {
                        jet_t.clear_seeds();
                        jet_t.seed_d1_mut(0)[0] = b * inv_n;
                        jet_t.backward(theta, g, None);
                    }
                }
            }
            for &[x, t] in &self.points.dirichlet {
                let b = eval_value(&mut value_tape, x, t);
                bc_sq += b * b;
                if let Some(g) = grad.as_deref_mut() {
                    backprop_value(&mut value_tape, x, t, b * inv_n, g);
                }
            }
            total += S::from_f64(0.5) * inv_n * bc_sq;
        }
        Ok(total)
    }
}

/// Forward-Euler trajectory-fitting MSE for the learned vector field.
/// `batch`, when set, restricts the MSE sum to those observation indices
/// (the rollout always runs over the full horizon).
pub struct NodeLoss {
    pub arch: MlpArch,
    pub traj: Arc<Trajectory>,
    pub n_steps: usize,
    pub dt: f64,
    pub batch: Option<Arc<Vec<usize>>>,
}

impl NodeLoss {
    pub fn new(arch: MlpArch, traj: Arc<Trajectory>, horizon: f64, dt: f64) -> Result<Self> {
        if arch.input_dim() != 3 || arch.output_dim() != 3 {
            return Err(Error::config(
                "pendulum field network must map 3 inputs to 3 outputs",
            ));
        }
        if dt <= 0.0 {
            return Err(Error::config("dt must be positive"));
        }
        let n_steps = (horizon / dt).round() as usize;
        if n_steps < 1 || n_steps + 1 > traj.len() {
            return Err(Error::config(format!(
                "horizon {horizon} needs {} samples, trajectory has {}",
                n_steps + 1,
                traj.len()
            )));
        }
        Ok(NodeLoss {
            arch,
            traj,
            n_steps,
            dt,
            batch: None,
        })
    }

    pub fn with_batch(mut self, indices: Arc<Vec<usize>>) -> Self {
        self.batch = Some(indices);
        self
    }
}

impl LossExpr for NodeLoss {
    fn dim(&self) -> usize {
        self.arch.param_count()
    }

    fn eval<S: Scalar>(&self, theta: &[S], grad: Option<&mut [S]>) -> Result<S> {
        let d = 3usize;
        let dt = S::from_f64(self.dt);
        let want_grad = grad.is_some();
        let mut tapes: Vec<MlpTape<S>> = Vec::with_capacity(self.n_steps);
        for _ in 0..self.n_steps {
            tapes.push(MlpTape::new(&self.arch, &JetSpec::value_only())?);
        }
        let mut states: Vec<[S; 3]> = Vec::with_capacity(self.n_steps + 1);
        let x0 = self.traj.embedded[0];
        states.push([
            S::from_f64(x0[0]),
            S::from_f64(x0[1]),
            S::from_f64(x0[2]),
        ]);
        for k in 0..self.n_steps {
            let cur = states[k];
            tapes[k].forward(theta, &cur);
            let f = tapes[k].value_out();
            let mut next = cur;
            for j in 0..d {
                next[j] += dt * f[j];
                if !next[j].is_finite_val() {
                    return Err(Error::NonFinite(format!(
                        "trajectory rollout at step {}",
                        k + 1
                    )));
                }
            }
            states.push(next);
        }

        let mut is_target = vec![false; self.n_steps + 1];
        let mut m = 0usize;
        match &self.batch {
            Some(idx) => {
                for &i in idx.iter() {
                    if i >= 1 && i <= self.n_steps && !is_target[i] {
                        is_target[i] = true;
                        m += 1;
                    }
                }
            }
            None => {
                for v in is_target.iter_mut().skip(1) {
                    *v = true;
                }
                m = self.n_steps;
            }
        }
        if m == 0 {
            return Err(Error::Empty("no observation targets".into()));
        }
        let inv_m = S::from_f64(1.0 / m as f64);
        let mut loss = S::zero();
        for i in 1..=self.n_steps {
            if is_target[i] {
                let obs = self.traj.embedded[i];
                for j in 0..d {
                    let e = states[i][j] - S::from_f64(obs[j]);
                    loss += e * e;
                }
            }
        }
        loss *= inv_m;

        if want_grad {
            let g = grad.unwrap();
            let two = S::from_f64(2.0);
            let mut xbar = [S::zero(); 3];
            let mut ia = [S::zero(); 3];
            for k in (0..self.n_steps).rev() {
                if is_target[k + 1] {
                    let obs = self.traj.embedded[k + 1];
                    for j in 0..d {
                        xbar[j] += two * inv_m * (states[k + 1][j] - S::from_f64(obs[j]));
                    }
                }
                let tape = &mut tapes[k];
                tape.clear_seeds();
                for j in 0..d {
                    tape.seed_value_mut()[j] = dt * xbar[j];
                }
                tape.backward(theta, g, Some(&mut ia));
                for j in 0..d {
                    xbar[j] += ia[j];
                }
            }
        }
        Ok(loss)
    }
}

/// Where the physics residual of the augmented trajectory loss is
/// anchored: at ground-truth states (default) or along the current
/// rollout (states recovered through the inverse embedding).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PhysicsAnchor {
    #[default]
    Truth,
    Rollout,
}

/// Trajectory MSE plus `lambda` times the mean squared mismatch between
/// the learned field and the known embedded dynamics. With [`AlmState`]
/// attached, the per-component field mismatches become equality
/// constraints on top of the data objective.
pub struct PinodeLoss {
    pub node: NodeLoss,
    pub lambda: f64,
    pub damping: f64,
    pub anchor: PhysicsAnchor,
    pub alm: Option<AlmState>,
    anchors: Vec<([f64; 3], [f64; 3])>,
}

impl PinodeLoss {
    pub fn new(node: NodeLoss, lambda: f64, damping: f64) -> Self {
        let anchors = (0..=node.n_steps)
            .map(|i| {
                let [th, om] = node.traj.raw[i];
                (node.traj.embedded[i], pushforward_field(th, om, damping))
            })
            .collect();
        PinodeLoss {
            node,
            lambda,
            damping,
            anchor: PhysicsAnchor::Truth,
            alm: None,
            anchors,
        }
    }

    pub fn with_alm(mut self, state: AlmState) -> Result<Self> {
        if state.multipliers.len() != 3 * self.anchors.len() {
            return Err(Error::Dimension {
                expected: 3 * self.anchors.len(),
                got: state.multipliers.len(),
            });
        }
        self.alm = Some(state);
        Ok(self)
    }

    pub fn n_constraints(&self) -> usize {
        3 * self.anchors.len()
    }

    /// Field-mismatch components at the anchors (the ALM constraints).
    pub fn constraints(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut tape: MlpTape<f64> = MlpTape::new(&self.node.arch, &JetSpec::value_only())?;
        let mut out = Vec::with_capacity(self.n_constraints());
        for (state, field) in self.anchor_points(theta)? {
            tape.forward(theta, &state);
            let f = tape.value_out();
            for j in 0..3 {
                out.push(f[j] - field[j]);
            }
        }
        Ok(out)
    }

    fn anchor_points(&self, theta: &[f64]) -> Result<Vec<([f64; 3], [f64; 3])>> {
        match self.anchor {
            PhysicsAnchor::Truth => Ok(self.anchors.clone()),
            PhysicsAnchor::Rollout => {
                // roll out, invert the embedding, evaluate the known field there
                let mut tape: MlpTape<f64> = MlpTape::new(&self.node.arch, &JetSpec::value_only())?;
                let mut state = self.node.traj.embedded[0];
                let mut out = Vec::with_capacity(self.node.n_steps + 1);
                for _ in 0..=self.node.n_steps {
                    let theta_angle = (-state[2]).clamp(-1.0, 1.0).acos();
                    let omega = state[1].atan2(state[0]);
                    out.push((state, pushforward_field(theta_angle, omega, self.damping)));
                    tape.forward(theta, &state);
                    let f = tape.value_out();
                    for j in 0..3 {
                        state[j] += self.node.dt * f[j];
                    }
                    if !state.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite("physics anchor rollout".into()));
                    }
                }
                out.truncate(self.node.n_steps + 1);
                Ok(out)
            }
        }
    }
}

impl LossExpr for PinodeLoss {
    fn dim(&self) -> usize {
        self.node.arch.param_count()
    }

    fn eval<S: Scalar>(&self, theta: &[S], mut grad: Option<&mut [S]>) -> Result<S> {
        let mut total = self.node.eval(theta, grad.as_deref_mut())?;
        let skip_physics = self.alm.is_none() && self.lambda == 0.0;
        if skip_physics {
            return Ok(total);
        }
        let theta_f: Vec<f64>;
        let anchors = match self.anchor {
            PhysicsAnchor::Truth => self.anchors.clone(),
            PhysicsAnchor::Rollout => {
                theta_f = theta.iter().map(|s| s.val()).collect();
                self.anchor_points(&theta_f)?
            }
        };
        let mut tape: MlpTape<S> = MlpTape::new(&self.node.arch, &JetSpec::value_only())?;
        let m = anchors.len();
        let inv_m = S::from_f64(1.0 / m as f64);
        let lambda = S::from_f64(self.lambda);
        let mut idx = 0usize;
        let mut phys = S::zero();
        for (state, field) in &anchors {
            let input = [
                S::from_f64(state[0]),
                S::from_f64(state[1]),
                S::from_f64(state[2]),
            ];
            tape.forward(theta, &input);
            let mut comps = [S::zero(); 3];
            for j in 0..3 {
                comps[j] = tape.value_out()[j] - S::from_f64(field[j]);
            }
            let mut seeds = [S::zero(); 3];
            match &self.alm {
                None => {
                    for j in 0..3 {
                        phys += comps[j] * comps[j];
                        seeds[j] = lambda * S::from_f64(2.0) * inv_m * comps[j];
                    }
                }
                Some(state_alm) => {
                    let mu = S::from_f64(state_alm.mu);
                    for j in 0..3 {
                        let lam = S::from_f64(state_alm.multipliers[idx + j]);
                        phys += lam * comps[j] + S::from_f64(0.5) * mu * comps[j] * comps[j];
                        seeds[j] = lam + mu * comps[j];
                    }
                }
            }
            idx += 3;
            if let Some(g) = grad.as_deref_mut() {
                tape.clear_seeds();
                for j in 0..3 {
                    tape.seed_value_mut()[j] = seeds[j];
                }
                tape.backward(theta, g, None);
            }
        }
        total += match &self.alm {
            None => lambda * inv_m * phys,
            Some(_) => phys,
        };
        Ok(total)
    }
}

/// Build a `PinodeLoss` (or plain `NodeLoss` behavior at `lambda = 0`)
/// for a damped-pendulum problem.
pub fn pendulum_node_loss(
    arch: &MlpArch,
    spec: &ProblemSpec,
    traj: Arc<Trajectory>,
) -> Result<NodeLoss> {
    if spec.family != Family::Pendulum {
        return Err(Error::Unsupported("trajectory loss needs the pendulum".into()));
    }
    NodeLoss::new(arch.clone(), traj, spec.horizon, spec.dt)
}
