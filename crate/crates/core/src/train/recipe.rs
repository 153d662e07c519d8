//! Run orchestration: builds the loss for a (problem, model) pair, drives
//! the optimizer pipeline, samples curvature on a cadence, and evaluates
//! the held-out test error.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_run, AdamConfig, AdamState};
use super::alm::{alm_run, AlmConfig};
use super::lbfgs::{lbfgs_run, LbfgsConfig};
use super::losses::{NodeLoss, PinnLoss, PinodeLoss};
use super::nncg::{nncg_run, NncgConfig};
use super::trace::{
    l2_norm, IterObserver, NoopObserver, RunStatus, StageResult, StepInfo, TraceRecord,
    TrainingTrace,
};
use crate::error::{Error, Result};
use crate::landscape::power::power_iterate;
use crate::mlp::{
    init_network, loss_gradient, make_hvp, HvpMode, Loss, MlpArch, NetworkParameters,
};
use crate::problems::pendulum::TRAIN_THETA0;
use crate::problems::solutions::{EVAL_NT, EVAL_NX};
use crate::problems::{
    network_grid, node_test_error, pendulum_truth, reference_grid, relative_l2_error,
    sample_points, Family, ProblemSpec, Trajectory,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pinn,
    Node,
    Pinode { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Stage {
    Adam {
        epochs: usize,
        lr: f64,
        /// Observation minibatch size for trajectory models; full batch
        /// when absent (collocation losses are always full batch).
        batch: Option<usize>,
    },
    Lbfgs {
        epochs: usize,
        lr: f64,
        history: usize,
        tol_grad: f64,
        tol_change: f64,
    },
    Nncg {
        epochs: usize,
        lr: f64,
        rank: usize,
        cg_max_iters: usize,
        cg_tol: f64,
    },
}

impl Stage {
    pub fn lbfgs_default(epochs: usize) -> Self {
        Stage::Lbfgs {
            epochs,
            lr: 1.0,
            history: 100,
            tol_grad: 1e-7,
            tol_change: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Fraction of the target coefficient added per stage.
    pub speed: f64,
    pub stages: usize,
    pub stage_epochs: usize,
    pub lr: f64,
    pub history: usize,
}

impl CurriculumConfig {
    /// Coefficient used at stage `k` (1-based): `target * min(1, speed*k)`.
    pub fn stage_coefficient(&self, target: f64, k: usize) -> f64 {
        target * (self.speed * k as f64).min(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed <= 0.0 {
            return Err(Error::config("curriculum speed must be positive"));
        }
        let needed = (1.0 / self.speed).ceil() as usize;
        if self.stages < needed {
            return Err(Error::config(format!(
                "curriculum needs at least {needed} stages at speed {} so the final stage reaches the target coefficient",
                self.speed
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum OptimizerConfig {
    Pipeline { stages: Vec<Stage> },
    Alm(AlmSettings),
    Curriculum(CurriculumConfig),
}

/// Serializable subset of [`AlmConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmSettings {
    pub outer_iters: usize,
    pub mu0: f64,
    pub growth: f64,
    pub cap_pow: i32,
    pub update_every: usize,
    pub lr: f64,
    pub history: usize,
}

impl Default for AlmSettings {
    fn default() -> Self {
        AlmSettings {
            outer_iters: 50,
            mu0: 2.0,
            growth: 1.2,
            cap_pow: 50,
            update_every: 2000,
            lr: 1.0,
            history: 100,
        }
    }
}

impl AlmSettings {
    fn to_config(self) -> AlmConfig {
        AlmConfig {
            outer_iters: self.outer_iters,
            mu0: self.mu0,
            growth: self.growth,
            cap_pow: self.cap_pow,
            update_every: self.update_every,
            inner_lr: self.lr,
            inner_history: self.history,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Sample lambda_max every this many iterations (0 disables).
    pub lambda_max_every: usize,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            lambda_max_every: 0,
            power_iters: 40,
            power_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recipe {
    pub problem: ProblemSpec,
    pub layer_sizes: Vec<usize>,
    pub model: ModelKind,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: TrainingTrace,
    pub params: NetworkParameters,
    /// Final value of the model's canonical (non-augmented) objective.
    pub train_loss: f64,
    pub test_error: f64,
    pub status: RunStatus,
}

fn split_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 on (seed, stream)
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(0x94d049bb133111eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Samples the top Hessian eigenvalue on a cadence, warm-starting the
/// power iteration from the previous eigenvector.
struct LambdaProbe {
    cfg: DiagnosticsConfig,
    loss: Arc<dyn Loss>,
    warm: Option<Vec<f64>>,
    samples: Vec<(usize, f64)>,
    rng: ChaCha8Rng,
}

impl LambdaProbe {
    fn new(cfg: DiagnosticsConfig, loss: Arc<dyn Loss>, seed: u64) -> Self {
        LambdaProbe {
            cfg,
            loss,
            warm: None,
            samples: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl IterObserver for LambdaProbe {
    fn observe(&mut self, info: &StepInfo<'_>) {
        if self.cfg.lambda_max_every == 0
            || info.iter % self.cfg.lambda_max_every != 0
            || !info.loss.is_finite()
        {
            return;
        }
        let hvp = make_hvp(self.loss.clone(), info.theta.to_vec(), HvpMode::FdOfGradient);
        let v0 = match &self.warm {
            Some(v) => v.clone(),
            None => {
                use rand::Rng;
                (0..info.theta.len())
                    .map(|_| self.rng.gen_range(-1.0..1.0))
                    .collect()
            }
        };
        if let Ok(pair) = power_iterate(&hvp, v0, &[], self.cfg.power_iters, self.cfg.power_tol) {
            self.warm = Some(pair.vector.clone());
            self.samples.push((info.iter, pair.value));
        }
    }
}

/// Forward an observation to two observers.
struct Tee<'a, 'b> {
    a: &'a mut dyn IterObserver,
    b: &'b mut dyn IterObserver,
}

impl IterObserver for Tee<'_, '_> {
    fn observe(&mut self, info: &StepInfo<'_>) {
        self.a.observe(info);
        self.b.observe(info);
    }
}

enum BuiltLoss {
    Pinn(Arc<PinnLoss>),
    Node(Arc<NodeLoss>),
    Pinode(Arc<PinodeLoss>),
}

impl BuiltLoss {
    fn as_dyn(&self) -> Arc<dyn Loss> {
        match self {
            BuiltLoss::Pinn(l) => l.clone(),
            BuiltLoss::Node(l) => l.clone(),
            BuiltLoss::Pinode(l) => l.clone(),
        }
    }
}

fn build_loss(
    recipe: &Recipe,
    problem: &ProblemSpec,
    arch: &MlpArch,
    traj: Option<&Arc<Trajectory>>,
) -> Result<BuiltLoss> {
    match (&recipe.model, problem.family) {
        (ModelKind::Pinn, f) if f.is_pde() => {
            let points = Arc::new(sample_points(problem, split_seed(recipe.seed, 2))?);
            Ok(BuiltLoss::Pinn(Arc::new(PinnLoss::new(
                problem.clone(),
                arch.clone(),
                points,
            )?)))
        }
        (ModelKind::Node, Family::Pendulum) => {
            let traj = traj.expect("trajectory prepared for pendulum");
            Ok(BuiltLoss::Node(Arc::new(NodeLoss::new(
                arch.clone(),
                traj.clone(),
                problem.horizon,
                problem.dt,
            )?)))
        }
        (ModelKind::Pinode { lambda }, Family::Pendulum) => {
            let traj = traj.expect("trajectory prepared for pendulum");
            let node = NodeLoss::new(arch.clone(), traj.clone(), problem.horizon, problem.dt)?;
            Ok(BuiltLoss::Pinode(Arc::new(PinodeLoss::new(
                node,
                *lambda,
                problem.coeff,
            ))))
        }
        (model, family) => Err(Error::config(format!(
            "model {model:?} incompatible with problem family {family:?}"
        ))),
    }
}

fn last_iter(records: &[TraceRecord]) -> usize {
    records.last().map(|r| r.iter).unwrap_or(0)
}

/// Adam over a trajectory loss with per-epoch shuffled observation
/// minibatches; one trace record (full-horizon loss) per epoch.
fn node_adam_run(
    make_loss: &dyn Fn(Option<Arc<Vec<usize>>>) -> Arc<dyn Loss>,
    n_obs: usize,
    batch: usize,
    theta0: Vec<f64>,
    cfg: &AdamConfig,
    stage: &str,
    iter_offset: usize,
    batch_seed: u64,
    observer: &mut dyn IterObserver,
) -> Result<StageResult> {
    let full = make_loss(None);
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    let mut theta = theta0;
    let mut state = AdamState::new(theta.len());
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let mut status = RunStatus::Completed;
    let mut indices: Vec<usize> = (1..=n_obs).collect();

    let eval_full = |theta: &[f64]| -> Result<(f64, f64)> {
        match full.value_grad(theta) {
            Ok((f, g)) => Ok((f, l2_norm(&g))),
            Err(Error::NonFinite(_)) | Err(Error::NonFiniteLoss { .. }) => {
                Ok((f64::INFINITY, 0.0))
            }
            Err(e) => Err(e),
        }
    };

    let (f0, g0) = eval_full(&theta)?;
    records.push(TraceRecord {
        iter: iter_offset,
        loss: f0,
        grad_norm: g0,
        step_magnitude: 0.0,
        stage: stage.to_string(),
    });
    observer.observe(&StepInfo {
        iter: iter_offset,
        theta: &theta,
        loss: f0,
        grad_norm: g0,
        ls: None,
    });
    if !f0.is_finite() {
        return Ok(StageResult {
            records,
            status: RunStatus::Diverged,
            theta,
        });
    }

    'epochs: for k in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let before: Vec<f64> = theta.clone();
        for chunk in indices.chunks(batch.max(1)) {
            let loss = make_loss(Some(Arc::new(chunk.to_vec())));
            let (f, g) = match loss.value_grad(&theta) {
                Ok(x) => x,
                Err(Error::NonFinite(_)) | Err(Error::NonFiniteLoss { .. }) => {
                    status = RunStatus::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !f.is_finite() {
                status = RunStatus::Diverged;
                break 'epochs;
            }
            state.step(cfg, &mut theta, &g);
        }
        let step: f64 = theta
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let (f, gnorm) = eval_full(&theta)?;
        records.push(TraceRecord {
            iter: iter_offset + k,
            loss: f,
            grad_norm: gnorm,
            step_magnitude: step,
            stage: stage.to_string(),
        });
        observer.observe(&StepInfo {
            iter: iter_offset + k,
            theta: &theta,
            loss: f,
            grad_norm: gnorm,
            ls: None,
        });
        if !f.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
    }
    Ok(StageResult {
        records,
        status,
        theta,
    })
}

fn run_pipeline(
    recipe: &Recipe,
    problem: &ProblemSpec,
    arch: &MlpArch,
    traj: Option<&Arc<Trajectory>>,
    stages: &[Stage],
    theta0: Vec<f64>,
    observer: &mut dyn IterObserver,
) -> Result<(Vec<TraceRecord>, RunStatus, Vec<f64>)> {
    if stages.is_empty() {
        return Err(Error::config("optimizer pipeline has no stages"));
    }
    let built = build_loss(recipe, problem, arch, traj)?;
    let mut theta = theta0;
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut offset = 0usize;
    for stage in stages {
        let result = match stage {
            Stage::Adam { epochs, lr, batch } => {
                let cfg = AdamConfig {
                    lr: *lr,
                    epochs: *epochs,
                    ..Default::default()
                };
                match (&built, batch) {
                    (BuiltLoss::Node(node), Some(bs)) => {
                        let shared = node.clone();
                        let make = move |b: Option<Arc<Vec<usize>>>| -> Arc<dyn Loss> {
                            let mut l = NodeLoss::new(
                                shared.arch.clone(),
                                shared.traj.clone(),
                                shared.n_steps as f64 * shared.dt,
                                shared.dt,
                            )
                            .expect("validated loss");
                            l.batch = b;
                            Arc::new(l)
                        };
                        node_adam_run(
                            &make,
                            node.n_steps,
                            *bs,
                            theta,
                            &cfg,
                            "adam",
                            offset,
                            split_seed(recipe.seed, 3),
                            observer,
                        )?
                    }
                    (BuiltLoss::Pinode(pinode), Some(bs)) => {
                        let pinode_arc = pinode.clone();
                        let make = move |b: Option<Arc<Vec<usize>>>| -> Arc<dyn Loss> {
                            let mut node = NodeLoss::new(
                                pinode_arc.node.arch.clone(),
                                pinode_arc.node.traj.clone(),
                                pinode_arc.node.n_steps as f64 * pinode_arc.node.dt,
                                pinode_arc.node.dt,
                            )
                            .expect("validated loss");
                            node.batch = b;
                            Arc::new(PinodeLoss::new(
                                node,
                                pinode_arc.lambda,
                                pinode_arc.damping,
                            ))
                        };
                        node_adam_run(
                            &make,
                            pinode.node.n_steps,
                            *bs,
                            theta,
                            &cfg,
                            "adam",
                            offset,
                            split_seed(recipe.seed, 3),
                            observer,
                        )?
                    }
                    _ => {
                        let loss = built.as_dyn();
                        let mut grad_fn = |_k: usize, th: &[f64]| {
                            let (f, g) = loss.value_grad(th)?;
                            Ok((f, g))
                        };
                        adam_run(&mut grad_fn, theta, &cfg, "adam", offset, observer)?
                    }
                }
            }
            Stage::Lbfgs {
                epochs,
                lr,
                history,
                tol_grad,
                tol_change,
            } => {
                let cfg = LbfgsConfig {
                    lr: *lr,
                    epochs: *epochs,
                    history: *history,
                    tol_grad: *tol_grad,
                    tol_change: *tol_change,
                    ..Default::default()
                };
                lbfgs_run(built.as_dyn().as_ref(), theta, &cfg, "lbfgs", offset, observer)?
            }
            Stage::Nncg {
                epochs,
                lr,
                rank,
                cg_max_iters,
                cg_tol,
            } => {
                let cfg = NncgConfig {
                    epochs: *epochs,
                    lr: *lr,
                    rank: *rank,
                    cg_max_iters: *cg_max_iters,
                    cg_tol: *cg_tol,
                    seed: split_seed(recipe.seed, 5),
                    ..Default::default()
                };
                nncg_run(built.as_dyn(), theta, &cfg, "nncg", offset, observer)?
            }
        };
        theta = result.theta;
        offset = last_iter(&result.records) + 1;
        records.extend(result.records);
        status = result.status;
        if status == RunStatus::Diverged {
            break;
        }
    }
    Ok((records, status, theta))
}

fn run_alm(
    recipe: &Recipe,
    problem: &ProblemSpec,
    arch: &MlpArch,
    traj: Option<&Arc<Trajectory>>,
    settings: &AlmSettings,
    theta0: Vec<f64>,
    observer: &mut dyn IterObserver,
) -> Result<(Vec<TraceRecord>, RunStatus, Vec<f64>)> {
    let cfg = settings.to_config();
    match &recipe.model {
        ModelKind::Pinn => {
            let points = Arc::new(sample_points(problem, split_seed(recipe.seed, 2))?);
            let n_constraints = points.residual.len();
            let spec = problem.clone();
            let arch2 = arch.clone();
            let points2 = points.clone();
            let make = move |state: &super::losses::AlmState| -> Result<Arc<dyn Loss>> {
                Ok(Arc::new(
                    PinnLoss::new(spec.clone(), arch2.clone(), points2.clone())?
                        .with_alm(state.clone())?,
                ))
            };
            let plain = PinnLoss::new(problem.clone(), arch.clone(), points)?;
            let constraints = move |theta: &[f64]| plain.constraints(theta);
            let out = alm_run(n_constraints, &make, &constraints, theta0, &cfg, observer)?;
            Ok((out.result.records, out.result.status, out.result.theta))
        }
        ModelKind::Pinode { lambda } => {
            let traj = traj.expect("trajectory prepared for pendulum");
            let base = PinodeLoss::new(
                NodeLoss::new(arch.clone(), traj.clone(), problem.horizon, problem.dt)?,
                *lambda,
                problem.coeff,
            );
            let n_constraints = base.n_constraints();
            let arch2 = arch.clone();
            let traj2 = traj.clone();
            let horizon = problem.horizon;
            let dt = problem.dt;
            let damping = problem.coeff;
            let lambda = *lambda;
            let make = move |state: &super::losses::AlmState| -> Result<Arc<dyn Loss>> {
                Ok(Arc::new(
                    PinodeLoss::new(
                        NodeLoss::new(arch2.clone(), traj2.clone(), horizon, dt)?,
                        lambda,
                        damping,
                    )
                    .with_alm(state.clone())?,
                ))
            };
            let constraints = move |theta: &[f64]| base.constraints(theta);
            let out = alm_run(n_constraints, &make, &constraints, theta0, &cfg, observer)?;
            Ok((out.result.records, out.result.status, out.result.theta))
        }
        ModelKind::Node => Err(Error::config(
            "ALM needs physics constraints; use the pinode or pinn model",
        )),
    }
}

fn run_curriculum(
    recipe: &Recipe,
    arch: &MlpArch,
    cfg: &CurriculumConfig,
    theta0: Vec<f64>,
    observer: &mut dyn IterObserver,
) -> Result<(Vec<TraceRecord>, RunStatus, Vec<f64>)> {
    cfg.validate()?;
    let target = recipe.problem.coeff;
    let mut theta = theta0;
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut offset = 0usize;
    for k in 1..=cfg.stages {
        let mut staged = recipe.problem.clone();
        staged.coeff = cfg.stage_coefficient(target, k);
        let traj = prepare_trajectory(recipe, &staged)?;
        let built = build_loss(recipe, &staged, arch, traj.as_ref())?;
        let inner = LbfgsConfig {
            lr: cfg.lr,
            epochs: cfg.stage_epochs,
            history: cfg.history,
            ..Default::default()
        };
        let stage_tag = format!("cl{k}");
        let result = lbfgs_run(
            built.as_dyn().as_ref(),
            theta,
            &inner,
            &stage_tag,
            offset,
            observer,
        )?;
        theta = result.theta;
        offset = last_iter(&result.records) + 1;
        records.extend(result.records);
        status = result.status;
        if status == RunStatus::Diverged {
            break;
        }
    }
    Ok((records, status, theta))
}

fn prepare_trajectory(recipe: &Recipe, problem: &ProblemSpec) -> Result<Option<Arc<Trajectory>>> {
    if problem.family != Family::Pendulum {
        return Ok(None);
    }
    let _ = recipe;
    Ok(Some(Arc::new(pendulum_truth(
        problem.coeff,
        TRAIN_THETA0,
        0.0,
        problem.horizon,
        problem.dt,
    )?)))
}

/// Run one full training recipe.
pub fn train(recipe: &Recipe, cache_dir: Option<&Path>) -> Result<RunResult> {
    let start = Instant::now();
    let net = init_network(&recipe.layer_sizes, split_seed(recipe.seed, 1))?;
    let arch = net.arch().clone();
    let traj = prepare_trajectory(recipe, &recipe.problem)?;

    // canonical (non-augmented) loss for diagnostics and reporting
    let canonical = build_loss(recipe, &recipe.problem, &arch, traj.as_ref())?;
    let mut probe = LambdaProbe::new(
        recipe.diagnostics,
        canonical.as_dyn(),
        split_seed(recipe.seed, 4),
    );

    let theta0 = net.theta().to_vec();
    let (records, status, theta) = {
        let mut noop = NoopObserver;
        let mut tee = Tee {
            a: &mut probe,
            b: &mut noop,
        };
        let observer: &mut dyn IterObserver = &mut tee;
        match &recipe.optimizer {
            OptimizerConfig::Pipeline { stages } => run_pipeline(
                recipe,
                &recipe.problem,
                &arch,
                traj.as_ref(),
                stages,
                theta0,
                observer,
            )?,
            OptimizerConfig::Alm(settings) => run_alm(
                recipe,
                &recipe.problem,
                &arch,
                traj.as_ref(),
                settings,
                theta0,
                observer,
            )?,
            OptimizerConfig::Curriculum(cfg) => {
                run_curriculum(recipe, &arch, cfg, theta0, observer)?
            }
        }
    };

    let params = NetworkParameters::new(arch, theta)?;
    let train_loss = canonical.as_dyn().value(params.theta()).unwrap_or(f64::INFINITY);
    let test_error = compute_test_error(recipe, &params, cache_dir)?;
    Ok(RunResult {
        trace: TrainingTrace {
            records,
            lambda_max: probe.samples,
            status: status.clone(),
            wall_secs: start.elapsed().as_secs_f64(),
            final_theta: params.theta().to_vec(),
        },
        params,
        train_loss,
        test_error,
        status,
    })
}


fn compute_test_error(
    recipe: &Recipe,
    params: &NetworkParameters,
    cache_dir: Option<&Path>,
) -> Result<f64> {
    match recipe.problem.family {
        Family::Pendulum => node_test_error(params, &recipe.problem),
        _ => {
            let reference = reference_grid(&recipe.problem, EVAL_NX, EVAL_NT, cache_dir)?;
            let predicted = network_grid(params, &recipe.problem, EVAL_NX, EVAL_NT)?;
            relative_l2_error(&predicted, &reference)
        }
    }
}

/// Gradient of an arbitrary loss (re-exported convenience used by tests
/// and the CLI).
pub fn grad_of(loss: &dyn Loss, theta: &[f64]) -> Result<Vec<f64>> {
    loss_gradient(loss, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_pinn_recipe(epochs: usize) -> Recipe {
        let mut problem = ProblemSpec::convection(5.0);
        problem.n_res = 30;
        problem.n_bc = 16;
        Recipe {
            problem,
            layer_sizes: vec![2, 8, 8, 1],
            model: ModelKind::Pinn,
            optimizer: OptimizerConfig::Pipeline {
                stages: vec![Stage::lbfgs_default(epochs)],
            },
            seed: 0,
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    #[test]
    fn zero_epoch_recipe_yields_single_record() {
        let recipe = tiny_pinn_recipe(0);
        let out = train(&recipe, None).unwrap();
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.trace.records[0].iter, 0);
        assert_eq!(out.trace.records[0].step_magnitude, 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let recipe = tiny_pinn_recipe(20);
        let a = train(&recipe, None).unwrap();
        let b = train(&recipe, None).unwrap();
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.params.theta(), b.params.theta());
        assert_eq!(a.test_error.to_bits(), b.test_error.to_bits());
    }

    #[test]
    fn step_magnitudes_dominate_net_displacement() {
        let recipe = tiny_pinn_recipe(25);
        let seed_net = init_network(&recipe.layer_sizes, split_seed(recipe.seed, 1)).unwrap();
        let out = train(&recipe, None).unwrap();
        let total: f64 = out.trace.records.iter().map(|r| r.step_magnitude).sum();
        let net_disp: f64 = out
            .params
            .theta()
            .iter()
            .zip(seed_net.theta())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(total >= net_disp - 1e-12, "sum {total} < displacement {net_disp}");
    }

    #[test]
    fn curriculum_coefficient_schedule() {
        let cfg = CurriculumConfig {
            speed: 0.05,
            stages: 25,
            stage_epochs: 10,
            lr: 1.0,
            history: 20,
        };
        assert!((cfg.stage_coefficient(70.0, 1) - 3.5).abs() < 1e-12);
        assert!((cfg.stage_coefficient(70.0, 20) - 70.0).abs() < 1e-12);
        assert!((cfg.stage_coefficient(70.0, 24) - 70.0).abs() < 1e-12);
        assert_eq!(cfg.stage_coefficient(70.0, cfg.stages), 70.0);
        cfg.validate().unwrap();
        let bad = CurriculumConfig { stages: 10, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn curriculum_final_stage_matches_direct_problem() {
        let mut recipe = tiny_pinn_recipe(0);
        recipe.optimizer = OptimizerConfig::Curriculum(CurriculumConfig {
            speed: 0.5,
            stages: 3,
            stage_epochs: 5,
            lr: 1.0,
            history: 10,
        });
        let out = train(&recipe, None).unwrap();
        let tags: Vec<&str> = out
            .trace
            .records
            .iter()
            .map(|r| r.stage.as_str())
            .collect();
        assert!(tags.contains(&"cl1") && tags.contains(&"cl3"));
        // iters strictly increase across stage boundaries
        for w in out.trace.records.windows(2) {
            assert!(w[1].iter > w[0].iter);
        }
    }

    #[test]
    fn lambda_probe_samples_on_cadence() {
        let mut recipe = tiny_pinn_recipe(10);
        recipe.diagnostics = DiagnosticsConfig {
            lambda_max_every: 5,
            power_iters: 20,
            power_tol: 1e-2,
        };
        let out = train(&recipe, None).unwrap();
        let iters: Vec<usize> = out.trace.lambda_max.iter().map(|s| s.0).collect();
        assert!(iters.contains(&0));
        assert!(iters.contains(&5));
        assert!(iters.contains(&10));
        for (_, lam) in &out.trace.lambda_max {
            assert!(lam.is_finite());
        }
    }
}
