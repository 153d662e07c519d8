//! Single-shot evaluation entry points.

use super::net::NetworkParameters;
use super::pass::{Jet2, JetSpec, MlpTape};
use crate::error::{Error, Result};

/// Evaluate the network at `x`.
pub fn forward(params: &NetworkParameters, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.arch().input_dim() {
        return Err(Error::Dimension {
            expected: params.arch().input_dim(),
            got: x.len(),
        });
    }
    let mut tape: MlpTape<f64> = MlpTape::new(params.arch(), &JetSpec::value_only())?;
    tape.forward(params.theta(), x);
    Ok(tape.value_out().to_vec())
}

/// Evaluate the network together with first and second derivatives of each
/// output with respect to input coordinate `axis`.
pub fn forward_jet(params: &NetworkParameters, x: &[f64], axis: usize) -> Result<Vec<Jet2>> {
    if x.len() != params.arch().input_dim() {
        return Err(Error::Dimension {
            expected: params.arch().input_dim(),
            got: x.len(),
        });
    }
    if axis >= x.len() {
        return Err(Error::config(format!(
            "derivative axis {axis} out of range for input dim {}",
            x.len()
        )));
    }
    let mut tape: MlpTape<f64> = MlpTape::new(params.arch(), &JetSpec::single(axis, true))?;
    tape.forward(params.theta(), x);
    Ok((0..tape.output_dim())
        .map(|i| Jet2 {
            value: tape.value_out()[i],
            d1: tape.d1_out(0)[i],
            d2: tape.d2_out(0)[i],
        })
        .collect())
}
