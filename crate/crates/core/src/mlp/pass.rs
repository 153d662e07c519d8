//! Taped network passes.
//!
//! [`MlpTape`] runs a forward pass that can carry, besides the value
//! channel, first and second derivatives with respect to selected input
//! coordinates ("jet" channels). The tape keeps every intermediate needed
//! to run an exact reverse pass that accumulates the gradient of any
//! scalar function of the outputs (value and jet channels alike) with
//! respect to the flat parameter vector.
//!
//! Per hidden layer with pre-activation `z = W a + b`, `v = tanh(z)`,
//! `s1 = 1 - v^2`, `s2 = -2 v s1`, the jet channels propagate as
//! `dv = s1 .* dz` and `ddv = s2 .* dz^2 + s1 .* ddz`; the reverse pass
//! is the exact adjoint of those recurrences.

use super::net::MlpArch;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Which input-derivative channels a pass carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetSpec {
    /// (input axis, carry second derivative along that axis)
    pub axes: Vec<(usize, bool)>,
}

impl JetSpec {
    pub fn value_only() -> Self {
        JetSpec { axes: Vec::new() }
    }

    pub fn single(axis: usize, second: bool) -> Self {
        JetSpec {
            axes: vec![(axis, second)],
        }
    }
}

/// Value plus first and second derivative along one input axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

struct Channel<S> {
    axis: usize,
    second: bool,
    /// Post-activation first derivative per boundary.
    d1: Vec<Vec<S>>,
    /// Post-activation second derivative per boundary (empty unless `second`).
    d2: Vec<Vec<S>>,
    /// Pre-activation first derivative per hidden layer.
    dz: Vec<Vec<S>>,
    /// Pre-activation second derivative per hidden layer.
    ddz: Vec<Vec<S>>,
}

/// Reusable forward/backward workspace for one architecture and jet spec.
pub struct MlpTape<S: Scalar> {
    sizes: Vec<usize>,
    /// Activations per boundary; `a[0]` is the input, `a[L]` the output.
    a: Vec<Vec<S>>,
    channels: Vec<Channel<S>>,
    // backward scratch, ping-pong between boundaries
    adj_cur: Vec<S>,
    adj_prev: Vec<S>,
    adj_d1_cur: Vec<Vec<S>>,
    adj_d1_prev: Vec<Vec<S>>,
    adj_d2_cur: Vec<Vec<S>>,
    adj_d2_prev: Vec<Vec<S>>,
    zbar: Vec<S>,
    dzbar: Vec<Vec<S>>,
    ddzbar: Vec<Vec<S>>,
    // adjoint seeds on the outputs
    seed_value: Vec<S>,
    seed_d1: Vec<Vec<S>>,
    seed_d2: Vec<Vec<S>>,
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<S: Scalar>(alpha: S, x: &[S], out: &mut [S]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += alpha * *xi;
    }
}

impl<S: Scalar> MlpTape<S> {
    pub fn new(arch: &MlpArch, spec: &JetSpec) -> Result<Self> {
        let sizes = arch.layer_sizes().to_vec();
        let n_bound = sizes.len();
        let n_hidden = n_bound.saturating_sub(2);
        for &(axis, _) in &spec.axes {
            if axis >= sizes[0] {
                return Err(Error::config(format!(
                    "jet axis {axis} out of range for input dim {}",
                    sizes[0]
                )));
            }
        }
        let per_boundary = || sizes.iter().map(|&n| vec![S::zero(); n]).collect::<Vec<_>>();
        let per_hidden = || {
            (0..n_hidden)
                .map(|l| vec![S::zero(); sizes[l + 1]])
                .collect::<Vec<_>>()
        };
        let channels = spec
            .axes
            .iter()
            .map(|&(axis, second)| Channel {
                axis,
                second,
                d1: per_boundary(),
                d2: if second { per_boundary() } else { Vec::new() },
                dz: per_hidden(),
                ddz: if second { per_hidden() } else { Vec::new() },
            })
            .collect::<Vec<_>>();
        let width = arch.max_width();
        let scratch = || vec![S::zero(); width];
        let per_ch = |on: &dyn Fn(&Channel<S>) -> bool| {
            channels
                .iter()
                .map(|c| {
                    if on(c) {
                        vec![S::zero(); width]
                    } else {
                        Vec::new()
                    }
                })
                .collect::<Vec<_>>()
        };
        let n_out = *sizes.last().unwrap();
        Ok(MlpTape {
            a: per_boundary(),
            seed_value: vec![S::zero(); n_out],
            seed_d1: channels.iter().map(|_| vec![S::zero(); n_out]).collect(),
            seed_d2: channels
                .iter()
                .map(|c| {
                    if c.second {
                        vec![S::zero(); n_out]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
            adj_cur: scratch(),
            adj_prev: scratch(),
            adj_d1_cur: per_ch(&|_| true),
            adj_d1_prev: per_ch(&|_| true),
            adj_d2_cur: per_ch(&|c| c.second),
            adj_d2_prev: per_ch(&|c| c.second),
            zbar: scratch(),
            dzbar: per_ch(&|_| true),
            ddzbar: per_ch(&|c| c.second),
            channels,
            sizes,
        })
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Forward pass storing all intermediates. `theta` must match the
    /// architecture the tape was built for.
    pub fn forward(&mut self, theta: &[S], x: &[S]) {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        self.a[0].copy_from_slice(x);
        for ch in &mut self.channels {
            for (j, d) in ch.d1[0].iter_mut().enumerate() {
                *d = if j == ch.axis { S::one() } else { S::zero() };
            }
            if ch.second {
                for d in ch.d2[0].iter_mut() {
                    *d = S::zero();
                }
            }
        }
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &theta[off..off + n_in * n_out];
            let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let last = l == n_layers - 1;
            // split borrows: activations at boundary l are input, l+1 output
            let (a_in, a_out) = {
                let (lo, hi) = self.a.split_at_mut(l + 1);
                (&lo[l], &mut hi[0])
            };
            if last {
                for i in 0..n_out {
                    a_out[i] = dot(&w[i * n_in..(i + 1) * n_in], a_in) + b[i];
                }
                for ch in &mut self.channels {
                    let (d_in, d_out) = {
                        let (lo, hi) = ch.d1.split_at_mut(l + 1);
                        (&lo[l], &mut hi[0])
                    };
                    for i in 0..n_out {
                        d_out[i] = dot(&w[i * n_in..(i + 1) * n_in], d_in);
                    }
                    if ch.second {
                        let (dd_in, dd_out) = {
                            let (lo, hi) = ch.d2.split_at_mut(l + 1);
                            (&lo[l], &mut hi[0])
                        };
                        for i in 0..n_out {
                            dd_out[i] = dot(&w[i * n_in..(i + 1) * n_in], dd_in);
                        }
                    }
                }
            } else {
                // z into a_out temporarily, then activate in place
                for i in 0..n_out {
                    a_out[i] = dot(&w[i * n_in..(i + 1) * n_in], a_in) + b[i];
                }
                for ch in &mut self.channels {
                    {
                        let dz = &mut ch.dz[l];
                        let d_in = &ch.d1[l];
                        for i in 0..n_out {
                            dz[i] = dot(&w[i * n_in..(i + 1) * n_in], d_in);
                        }
                    }
                    if ch.second {
                        let ddz = &mut ch.ddz[l];
                        let dd_in = &ch.d2[l];
                        for i in 0..n_out {
                            ddz[i] = dot(&w[i * n_in..(i + 1) * n_in], dd_in);
                        }
                    }
                }
                for i in 0..n_out {
                    let v = a_out[i].tanh();
                    a_out[i] = v;
                }
                for ch in &mut self.channels {
                    let a_next = &self.a[l + 1];
                    if ch.second {
                        let (d1_arr, d2_arr) = (&mut ch.d1, &mut ch.d2);
                        let dz = &ch.dz[l];
                        let ddz = &ch.ddz[l];
                        let d1o = &mut d1_arr[l + 1];
                        let d2o = &mut d2_arr[l + 1];
                        for i in 0..n_out {
                            let v = a_next[i];
                            let s1 = S::one() - v * v;
                            let s2 = -(v + v) * s1;
                            d1o[i] = s1 * dz[i];
                            d2o[i] = s2 * dz[i] * dz[i] + s1 * ddz[i];
                        }
                    } else {
                        let dz = &ch.dz[l];
                        let d1o = &mut ch.d1[l + 1];
                        for i in 0..n_out {
                            let v = a_next[i];
                            let s1 = S::one() - v * v;
                            d1o[i] = s1 * dz[i];
                        }
                    }
                }
            }
        }
    }

    pub fn value_out(&self) -> &[S] {
        self.a.last().unwrap()
    }

    pub fn d1_out(&self, channel: usize) -> &[S] {
        self.channels[channel].d1.last().unwrap()
    }

    pub fn d2_out(&self, channel: usize) -> &[S] {
        self.channels[channel].d2.last().unwrap()
    }

    /// Zero all output adjoint seeds.
    pub fn clear_seeds(&mut self) {
        for s in self.seed_value.iter_mut() {
            *s = S::zero();
        }
        for ch in self.seed_d1.iter_mut() {
            for s in ch.iter_mut() {
                *s = S::zero();
            }
        }
        for ch in self.seed_d2.iter_mut() {
            for s in ch.iter_mut() {
                *s = S::zero();
            }
        }
    }

    pub fn seed_value_mut(&mut self) -> &mut [S] {
        &mut self.seed_value
    }

    pub fn seed_d1_mut(&mut self, channel: usize) -> &mut [S] {
        &mut self.seed_d1[channel]
    }

    pub fn seed_d2_mut(&mut self, channel: usize) -> &mut [S] {
        &mut self.seed_d2[channel]
    }

    /// Reverse pass. Accumulates `d(seeded scalar)/d(theta)` into `grad`
    /// and, when `input_adj` is given, the adjoint of the value channel
    /// with respect to the network input.
    pub fn backward(&mut self, theta: &[S], grad: &mut [S], mut input_adj: Option<&mut [S]>) {
        let n_layers = self.sizes.len() - 1;
        let n_out = *self.sizes.last().unwrap();
        self.adj_cur[..n_out].copy_from_slice(&self.seed_value);
        for (c, ch) in self.channels.iter().enumerate() {
            self.adj_d1_cur[c][..n_out].copy_from_slice(&self.seed_d1[c]);
            if ch.second {
                self.adj_d2_cur[c][..n_out].copy_from_slice(&self.seed_d2[c]);
            }
        }
        let mut off_end = theta.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = off_end - (n_in * n_out + n_out);
            let w = &theta[off..off + n_in * n_out];
            let last = l == n_layers - 1;

            if last {
                self.zbar[..n_out].copy_from_slice(&self.adj_cur[..n_out]);
                for (c, ch) in self.channels.iter().enumerate() {
                    self.dzbar[c][..n_out].copy_from_slice(&self.adj_d1_cur[c][..n_out]);
                    if ch.second {
                        self.ddzbar[c][..n_out].copy_from_slice(&self.adj_d2_cur[c][..n_out]);
                    }
                }
            } else {
                let a_next = &self.a[l + 1];
                for i in 0..n_out {
                    let v = a_next[i];
                    let s1 = S::one() - v * v;
                    let s2 = -(v + v) * s1;
                    let s3 = -(S::from_f64(2.0)) * (s1 * s1 + v * s2);
                    let mut s1_adj = S::zero();
                    let mut s2_adj = S::zero();
                    for (c, ch) in self.channels.iter().enumerate() {
                        let dz = ch.dz[l][i];
                        let d1a = self.adj_d1_cur[c][i];
                        s1_adj += d1a * dz;
                        let mut dzb = d1a * s1;
                        if ch.second {
                            let ddz = ch.ddz[l][i];
                            let d2a = self.adj_d2_cur[c][i];
                            s1_adj += d2a * ddz;
                            s2_adj += d2a * dz * dz;
                            dzb += d2a * (s2 + s2) * dz;
                            self.ddzbar[c][i] = d2a * s1;
                        }
                        self.dzbar[c][i] = dzb;
                    }
                    self.zbar[i] = self.adj_cur[i] * s1 + s1_adj * s2 + s2_adj * s3;
                }
            }

            // affine adjoint: parameter gradient and propagation to layer input
            let a_in = &self.a[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for p in self.adj_prev[..n_in].iter_mut() {
                *p = S::zero();
            }
            for c in 0..self.channels.len() {
                for p in self.adj_d1_prev[c][..n_in].iter_mut() {
                    *p = S::zero();
                }
                if self.channels[c].second {
                    for p in self.adj_d2_prev[c][..n_in].iter_mut() {
                        *p = S::zero();
                    }
                }
            }
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let grow = &mut gw[i * n_in..(i + 1) * n_in];
                let zb = self.zbar[i];
                gb[i] += zb;
                axpy(zb, a_in, grow);
                axpy(zb, row, &mut self.adj_prev[..n_in]);
                for (c, ch) in self.channels.iter().enumerate() {
                    let dzb = self.dzbar[c][i];
                    axpy(dzb, &ch.d1[l], grow);
                    axpy(dzb, row, &mut self.adj_d1_prev[c][..n_in]);
                    if ch.second {
                        let ddzb = self.ddzbar[c][i];
                        axpy(ddzb, &ch.d2[l], grow);
                        axpy(ddzb, row, &mut self.adj_d2_prev[c][..n_in]);
                    }
                }
            }

            std::mem::swap(&mut self.adj_cur, &mut self.adj_prev);
            std::mem::swap(&mut self.adj_d1_cur, &mut self.adj_d1_prev);
            std::mem::swap(&mut self.adj_d2_cur, &mut self.adj_d2_prev);
            off_end = off;
        }
        if let Some(ia) = input_adj.as_deref_mut() {
            ia.copy_from_slice(&self.adj_cur[..self.sizes[0]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::net::init_network;

    fn lift(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    #[test]
    fn forward_linear_layer() {
        // u = 2x (single affine layer, weight 2, bias 0)
        let net = init_network(&[1, 1], 0).unwrap();
        let mut tape: MlpTape<f64> = MlpTape::new(net.arch(), &JetSpec::value_only()).unwrap();
        tape.forward(&[2.0, 0.0], &lift(&[3.0]));
        assert_eq!(tape.value_out(), &[6.0]);
    }

    #[test]
    fn jet_of_pure_tanh() {
        // u = tanh(x): [1,1,1] with unit hidden weight, unit output weight
        let net = init_network(&[1, 1, 1], 0).unwrap();
        let theta = vec![1.0, 0.0, 1.0, 0.0];
        let mut tape: MlpTape<f64> = MlpTape::new(net.arch(), &JetSpec::single(0, true)).unwrap();
        tape.forward(&theta, &lift(&[0.0]));
        assert!((tape.value_out()[0] - 0.0).abs() < 1e-15);
        assert!((tape.d1_out(0)[0] - 1.0).abs() < 1e-15);
        assert!((tape.d2_out(0)[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        // d/dtheta of (value + 2*d1 + 3*d2) for a small jet-carrying net
        let net = init_network(&[2, 5, 4, 1], 42).unwrap();
        let arch = net.arch().clone();
        let theta = net.theta().to_vec();
        let spec = JetSpec {
            axes: vec![(0, true), (1, false)],
        };
        let x = [0.3, -0.7];

        let eval = |th: &[f64]| -> f64 {
            let mut t: MlpTape<f64> = MlpTape::new(&arch, &spec).unwrap();
            t.forward(th, &x);
            t.value_out()[0] + 2.0 * t.d2_out(0)[0] + 3.0 * t.d1_out(1)[0] + 0.5 * t.d1_out(0)[0]
        };

        let mut tape: MlpTape<f64> = MlpTape::new(&arch, &spec).unwrap();
        tape.forward(&theta, &x);
        tape.clear_seeds();
        tape.seed_value_mut()[0] = 1.0;
        tape.seed_d2_mut(0)[0] = 2.0;
        tape.seed_d1_mut(1)[0] = 3.0;
        tape.seed_d1_mut(0)[0] = 0.5;
        let mut grad = vec![0.0; theta.len()];
        tape.backward(&theta, &mut grad, None);

        let h = 1e-6;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (eval(&tp) - eval(&tm)) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!(
                (fd - grad[k]).abs() / denom < 1e-6,
                "component {k}: fd={fd} exact={}",
                grad[k]
            );
        }
    }

    #[test]
    fn input_adjoint_matches_finite_differences() {
        let net = init_network(&[3, 6, 3], 9).unwrap();
        let arch = net.arch().clone();
        let theta = net.theta().to_vec();
        let spec = JetSpec::value_only();
        let x = [0.2, -0.1, 0.5];
        // scalar = sum of outputs
        let eval = |xx: &[f64]| -> f64 {
            let mut t: MlpTape<f64> = MlpTape::new(&arch, &spec).unwrap();
            t.forward(&theta, xx);
            t.value_out().iter().sum()
        };
        let mut tape: MlpTape<f64> = MlpTape::new(&arch, &spec).unwrap();
        tape.forward(&theta, &x);
        tape.clear_seeds();
        for s in tape.seed_value_mut() {
            *s = 1.0;
        }
        let mut grad = vec![0.0; theta.len()];
        let mut ia = vec![0.0; 3];
        tape.backward(&theta, &mut grad, Some(&mut ia));
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let fd = (eval(&xp) - eval(&xm)) / (2.0 * h);
            assert!((fd - ia[k]).abs() < 1e-8, "axis {k}: fd={fd} exact={}", ia[k]);
        }
    }
}
