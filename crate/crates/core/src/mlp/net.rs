//! Dense multilayer perceptron: architecture descriptor plus a flat
//! parameter vector.
//!
//! Layout of `theta` is layer-major with weights before biases: for each
//! layer `l` (sizes `n_in -> n_out`) the row-major weight block
//! `W_l[n_out][n_in]` is followed by the bias block `b_l[n_out]`. This
//! layout is fixed so traces and checkpoints stay portable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

/// Architecture descriptor: layer sizes from input to output dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::with_activation(layer_sizes, Activation::Tanh)
    }

    pub fn with_activation(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(format!(
                "layer_sizes needs at least input and output dims, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::config(format!(
                "layer_sizes must all be positive, got {layer_sizes:?}"
            )));
        }
        Ok(MlpArch {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn max_width(&self) -> usize {
        *self.layer_sizes.iter().max().unwrap()
    }

    /// Total parameter count: sum over layers of `n_in * n_out + n_out`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offset of layer `l`'s weight block in the flat vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// (weights, biases) slices for layer `l`.
    pub fn layer_blocks<'a, S>(&self, theta: &'a [S], l: usize) -> (&'a [S], &'a [S]) {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let off = self.layer_offset(l);
        (
            &theta[off..off + n_in * n_out],
            &theta[off + n_in * n_out..off + n_in * n_out + n_out],
        )
    }

    /// Per-layer (offset, len) of the weight and bias blocks, in order.
    /// Used by filter-wise direction normalization.
    pub fn block_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(2 * self.n_layers());
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            let nw = w[0] * w[1];
            spans.push((off, nw));
            spans.push((off + nw, w[1]));
            off += nw + w[1];
        }
        spans
    }
}

/// Architecture plus the flat 64-bit parameter vector: the optimization
/// variable.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParameters {
    arch: MlpArch,
    theta: Vec<f64>,
}

impl NetworkParameters {
    pub fn new(arch: MlpArch, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.param_count() {
            return Err(Error::Dimension {
                expected: arch.param_count(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(NetworkParameters { arch, theta })
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta = theta;
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases; deterministic for a fixed seed.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<NetworkParameters> {
    let arch = MlpArch::new(layer_sizes.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0f64; arch.param_count()];
    let mut off = 0;
    for w in layer_sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        for t in theta[off..off + n_in * n_out].iter_mut() {
            *t = rng.gen_range(-bound..bound);
        }
        // biases stay zero
        off += n_in * n_out + n_out;
    }
    NetworkParameters::new(arch, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_hand_sum() {
        // (2*50+50) + 3*(50*50+50) + (50*1+1) = 150 + 7650 + 51
        let arch = MlpArch::new(vec![2, 50, 50, 50, 50, 1]).unwrap();
        assert_eq!(arch.param_count(), 7851);
        let net = init_network(&[2, 50, 50, 50, 50, 1], 0).unwrap();
        assert_eq!(net.theta().len(), 7851);
    }

    #[test]
    fn single_affine_layer_has_two_params() {
        let arch = MlpArch::new(vec![1, 1]).unwrap();
        assert_eq!(arch.param_count(), 2);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_network(&[2, 8, 1], 7).unwrap();
        let b = init_network(&[2, 8, 1], 7).unwrap();
        assert_eq!(a.theta(), b.theta());
        let c = init_network(&[2, 8, 1], 8).unwrap();
        assert_ne!(a.theta(), c.theta());
    }

    #[test]
    fn init_rejects_bad_layer_lists() {
        assert!(init_network(&[], 0).is_err());
        assert!(init_network(&[3], 0).is_err());
        assert!(init_network(&[2, 0, 1], 0).is_err());
    }

    #[test]
    fn biases_start_at_zero() {
        let net = init_network(&[2, 4, 1], 3).unwrap();
        let (_, b0) = net.arch().layer_blocks(net.theta(), 0);
        assert!(b0.iter().all(|&b| b == 0.0));
        let (_, b1) = net.arch().layer_blocks(net.theta(), 1);
        assert!(b1.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn block_spans_cover_theta() {
        let arch = MlpArch::new(vec![3, 5, 2]).unwrap();
        let spans = arch.block_spans();
        assert_eq!(spans, vec![(0, 15), (15, 5), (20, 10), (30, 2)]);
        let total: usize = spans.iter().map(|(_, n)| n).sum();
        assert_eq!(total, arch.param_count());
    }
}
