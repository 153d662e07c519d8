//! Damped pendulum ground truth, the spherical state embedding, and the
//! one-step trajectory test error.
//!
//! Dynamics: `theta' = omega`, `omega' = -b omega - sin(theta)`.

use serde::{Deserialize, Serialize};

use super::ProblemSpec;
use crate::error::{Error, Result};
use crate::mlp::{JetSpec, MlpTape, NetworkParameters};

/// Training and held-out test initial angles (released from rest).
pub const TRAIN_THETA0: f64 = 1.7;
pub const TEST_THETA0: f64 = 2.8;
/// Held-out evaluation horizon in seconds.
pub const TEST_HORIZON: f64 = 20.0;

/// Uniformly sampled trajectory in raw phase space and on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub raw: Vec<[f64; 2]>,
    pub embedded: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Spherical embedding `[sin(th) cos(om), sin(th) sin(om), -cos(th)]`.
pub fn embed_sphere(theta: f64, omega: f64) -> [f64; 3] {
    [
        theta.sin() * omega.cos(),
        theta.sin() * omega.sin(),
        -theta.cos(),
    ]
}

/// Pushforward of the raw pendulum field through the embedding: the
/// tangent velocity of the embedded trajectory.
pub fn pushforward_field(theta: f64, omega: f64, b: f64) -> [f64; 3] {
    let dtheta = omega;
    let domega = -b * omega - theta.sin();
    let (st, ct) = (theta.sin(), theta.cos());
    let (so, co) = (omega.sin(), omega.cos());
    [
        ct * co * dtheta - st * so * domega,
        ct * so * dtheta + st * co * domega,
        st * dtheta,
    ]
}

fn pendulum_rhs(b: f64, y: [f64; 2]) -> [f64; 2] {
    [y[1], -b * y[1] - y[0].sin()]
}

/// Ground-truth trajectory via adaptive Dormand-Prince 5(4) (`rtol 1e-6`,
/// `atol 1e-9`), sampled exactly at multiples of `dt`.
pub fn pendulum_truth(
    b: f64,
    theta0: f64,
    omega0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if dt <= 0.0 || horizon < dt {
        return Err(Error::config("pendulum horizon/dt invalid"));
    }
    let n_samples = (horizon / dt).round() as usize;
    let rtol = 1e-6;
    let atol = 1e-9;

    let mut times = Vec::with_capacity(n_samples + 1);
    let mut raw = Vec::with_capacity(n_samples + 1);
    let mut y = [theta0, omega0];
    let mut t = 0.0;
    times.push(0.0);
    raw.push(y);

    let mut h = dt.min(1e-2);
    let mut steps = 0usize;
    const MAX_STEPS: usize = 50_000_000;
    for k in 1..=n_samples {
        let t_target = k as f64 * dt;
        while t < t_target - 1e-12 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Numerical("pendulum integrator stalled".into()));
            }
            let h_trial = h.min(t_target - t);
            let (y_new, err) = dp54_step(b, y, h_trial);
            let tol = atol
                + rtol
                    * y.iter()
                        .zip(&y_new)
                        .map(|(a, c)| a.abs().max(c.abs()))
                        .fold(0.0f64, f64::max);
            if err <= tol || h_trial < 1e-12 {
                t += h_trial;
                y = y_new;
            }
            let ratio = if err > 0.0 { tol / err } else { 10.0 };
            h = (h_trial * (0.9 * ratio.powf(0.2)).clamp(0.2, 5.0)).min(0.25);
        }
        t = t_target;
        times.push(t);
        raw.push(y);
    }
    let embedded = raw.iter().map(|&[th, om]| embed_sphere(th, om)).collect();
    Ok(Trajectory {
        times,
        raw,
        embedded,
    })
}

/// One Dormand-Prince 5(4) step; returns the 5th-order state and the
/// embedded error estimate (max norm of the 5th/4th order difference).
fn dp54_step(b: f64, y: [f64; 2], h: f64) -> ([f64; 2], f64) {
    let f = |y: [f64; 2]| pendulum_rhs(b, y);
    let add = |y: [f64; 2], terms: &[(f64, [f64; 2])]| -> [f64; 2] {
        let mut out = y;
        for &(c, k) in terms {
            out[0] += h * c * k[0];
            out[1] += h * c * k[1];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(add(y, &[(1.0 / 5.0, k1)]));
    let k3 = f(add(y, &[(3.0 / 40.0, k1), (9.0 / 40.0, k2)]));
    let k4 = f(add(
        y,
        &[(44.0 / 45.0, k1), (-56.0 / 15.0, k2), (32.0 / 9.0, k3)],
    ));
    let k5 = f(add(
        y,
        &[
            (19372.0 / 6561.0, k1),
            (-25360.0 / 2187.0, k2),
            (64448.0 / 6561.0, k3),
            (-212.0 / 729.0, k4),
        ],
    ));
    let k6 = f(add(
        y,
        &[
            (9017.0 / 3168.0, k1),
            (-355.0 / 33.0, k2),
            (46732.0 / 5247.0, k3),
            (49.0 / 176.0, k4),
            (-5103.0 / 18656.0, k5),
        ],
    ));
    let y5 = add(
        y,
        &[
            (35.0 / 384.0, k1),
            (500.0 / 1113.0, k3),
            (125.0 / 192.0, k4),
            (-2187.0 / 6784.0, k5),
            (11.0 / 84.0, k6),
        ],
    );
    let k7 = f(y5);
    let y4 = add(
        y,
        &[
            (5179.0 / 57600.0, k1),
            (7571.0 / 16695.0, k3),
            (393.0 / 640.0, k4),
            (-92097.0 / 339200.0, k5),
            (187.0 / 2100.0, k6),
            (1.0 / 40.0, k7),
        ],
    );
    let err = (y5[0] - y4[0]).abs().max((y5[1] - y4[1]).abs());
    (y5, err)
}

/// Mean squared one-step Euler prediction error along the fixed held-out
/// test trajectory (theta0 = 2.8 released from rest, 20 s horizon):
/// from each ground-truth embedded state advance one Euler step with the
/// learned field and compare against the next ground-truth state.
pub fn node_test_error(params: &NetworkParameters, spec: &ProblemSpec) -> Result<f64> {
    let dim = params.arch().input_dim();
    if dim != 3 || params.arch().output_dim() != 3 {
        return Err(Error::config(
            "pendulum field network must map 3 inputs to 3 outputs",
        ));
    }
    let truth = pendulum_truth(spec.coeff, TEST_THETA0, 0.0, TEST_HORIZON, spec.dt)?;
    one_step_error(&truth, spec.dt, |x| {
        let mut tape: MlpTape<f64> = MlpTape::new(params.arch(), &JetSpec::value_only())
            .expect("tape for validated arch");
        tape.forward(params.theta(), x);
        let out = tape.value_out();
        [out[0], out[1], out[2]]
    })
}

/// Mean squared one-step error of an arbitrary field along a trajectory.
pub fn one_step_error(
    truth: &Trajectory,
    dt: f64,
    mut field: impl FnMut(&[f64; 3]) -> [f64; 3],
) -> Result<f64> {
    if truth.len() < 2 {
        return Err(Error::Empty("trajectory too short".into()));
    }
    let mut total = 0.0;
    for k in 0..truth.len() - 1 {
        let x = truth.embedded[k];
        let f = field(&x);
        let mut err = 0.0;
        for i in 0..3 {
            let pred = x[i] + dt * f[i];
            let d = pred - truth.embedded[k + 1][i];
            err += d * d;
        }
        total += err;
    }
    Ok(total / (truth.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn energy(theta: f64, omega: f64) -> f64 {
        0.5 * omega * omega + (1.0 - theta.cos())
    }

    #[test]
    fn stable_equilibrium_stays_put() {
        let traj = pendulum_truth(0.5, 0.0, 0.0, 2.0, 0.05).unwrap();
        for &[th, om] in &traj.raw {
            assert!(th.abs() < 1e-12 && om.abs() < 1e-12);
        }
    }

    #[test]
    fn unstable_equilibrium_is_a_fixed_point() {
        let traj = pendulum_truth(0.3, std::f64::consts::PI, 0.0, 2.0, 0.05).unwrap();
        for &[th, om] in &traj.raw {
            assert!((th - std::f64::consts::PI).abs() < 1e-9 && om.abs() < 1e-9);
        }
    }

    #[test]
    fn energy_is_nonincreasing_under_damping() {
        let traj = pendulum_truth(0.4, 2.2, 0.0, 20.0, 0.05).unwrap();
        for w in traj.raw.windows(2) {
            let e0 = energy(w[0][0], w[0][1]);
            let e1 = energy(w[1][0], w[1][1]);
            assert!(e1 <= e0 + 1e-6, "energy rose from {e0} to {e1}");
        }
    }

    #[test]
    fn times_are_uniform_and_states_unit_norm() {
        let traj = pendulum_truth(0.5, 1.7, 0.0, 5.0, 0.05).unwrap();
        assert_eq!(traj.len(), 101);
        for w in traj.times.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
        for e in &traj.embedded {
            let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn integrator_tracks_linear_regime_frequency() {
        // small oscillations of the undamped-ish pendulum: theta ~
        // theta0 cos(t) for b ~ 0; use tiny b and small amplitude
        let b = 0.1;
        let traj = pendulum_truth(b, 0.01, 0.0, 6.0, 0.05).unwrap();
        let wd = (1.0 - b * b / 4.0).sqrt();
        for (k, &[th, _]) in traj.raw.iter().enumerate() {
            let t = k as f64 * 0.05;
            // release-from-rest solution of the linearized damped oscillator
            let approx = 0.01
                * (-b * t / 2.0).exp()
                * ((wd * t).cos() + b / (2.0 * wd) * (wd * t).sin());
            assert!((th - approx).abs() < 2e-6, "t={t}: {th} vs {approx}");
        }
    }

    #[test]
    fn embedding_examples_and_norm() {
        assert_eq!(embed_sphere(0.0, 1.23), [0.0, 0.0, -1.0]);
        let e = embed_sphere(std::f64::consts::FRAC_PI_2, 0.0);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15 && e[2].abs() < 1e-15);
        let mut state = 1u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let th = (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let om = (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0;
            let e = embed_sphere(th, om);
            let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_vanishes_at_equilibrium_and_is_tangent() {
        assert_eq!(pushforward_field(0.0, 0.0, 0.7), [0.0, 0.0, 0.0]);
        for &(th, om) in &[(1.0, 0.3), (-2.0, 1.5), (0.2, -0.9)] {
            let e = embed_sphere(th, om);
            let f = pushforward_field(th, om, 0.5);
            let dot = e[0] * f[0] + e[1] * f[1] + e[2] * f[2];
            assert!(dot.abs() <= 1e-10, "tangency violated: {dot}");
        }
    }

    #[test]
    fn pushforward_matches_flow_finite_difference() {
        let b = 0.5;
        let dt = 1e-3;
        let traj = pendulum_truth(b, 1.7, 0.0, 1.0, dt).unwrap();
        for k in [10usize, 300, 700] {
            let [th, om] = traj.raw[k];
            let f = pushforward_field(th, om, b);
            for i in 0..3 {
                let fd = (traj.embedded[k + 1][i] - traj.embedded[k - 1][i]) / (2.0 * dt);
                assert!((fd - f[i]).abs() < 5.0 * dt, "component {i}: {fd} vs {}", f[i]);
            }
        }
    }

    #[test]
    fn one_step_error_of_true_field_is_euler_truncation_sized() {
        let b = 0.5;
        let dt = 0.05;
        let truth = pendulum_truth(b, TEST_THETA0, 0.0, TEST_HORIZON, dt).unwrap();
        let err = one_step_error(&truth, dt, |x| {
            // recover (theta, omega) from the stored raw states instead of
            // inverting the embedding; the field is evaluated exactly
            let k = truth
                .embedded
                .iter()
                .position(|e| e == x)
                .expect("state from trajectory");
            let [th, om] = truth.raw[k];
            pushforward_field(th, om, b)
        })
        .unwrap();
        // squared local truncation of one Euler step is O(dt^4)
        assert!(err < 10.0 * dt.powi(4), "one-step error {err}");
        assert!(err > 0.0);
    }

    #[test]
    fn one_step_error_of_zero_field_is_state_increment_power() {
        let truth = pendulum_truth(0.5, TEST_THETA0, 0.0, 5.0, 0.05).unwrap();
        let err = one_step_error(&truth, 0.05, |_| [0.0; 3]).unwrap();
        let mut brute = 0.0;
        for k in 0..truth.len() - 1 {
            for i in 0..3 {
                let d = truth.embedded[k + 1][i] - truth.embedded[k][i];
                brute += d * d;
            }
        }
        brute /= (truth.len() - 1) as f64;
        assert!((err - brute).abs() < 1e-15);
    }
}
