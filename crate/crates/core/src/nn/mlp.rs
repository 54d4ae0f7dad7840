//! Shared per-row MLPs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Activation, Graph, Var};
use crate::nn::params::ParamStore;

/// Output widths of each layer plus activations.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    /// Applied after every layer but the last.
    pub activation: Activation,
    pub final_activation: Activation,
}

impl MlpSpec {
    /// Same activation after every layer.
    pub fn uniform(widths: Vec<usize>, activation: Activation) -> Self {
        MlpSpec { widths, activation, final_activation: activation }
    }

    /// Relu between layers, linear output.
    pub fn relu_hidden(widths: Vec<usize>) -> Self {
        MlpSpec { widths, activation: Activation::Relu, final_activation: Activation::None }
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().expect("validated spec has at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("mlp needs at least one layer of nonzero width, got {:?}", self.widths)));
        }
        Ok(())
    }

    fn activation_at(&self, layer: usize) -> Activation {
        if layer + 1 == self.widths.len() {
            self.final_activation
        } else {
            self.activation
        }
    }
}

pub fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.weight")
}

pub fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.bias")
}

/// Registers Glorot-uniform weights and zero biases for `spec` under `prefix`.
pub fn init_mlp(store: &mut ParamStore, prefix: &str, in_width: usize, spec: &MlpSpec, rng: &mut impl Rng) -> Result<()> {
    spec.validate()?;
    let mut fan_in = in_width;
    for (i, &w) in spec.widths.iter().enumerate() {
        store.insert_glorot(weight_name(prefix, i), fan_in, w, rng)?;
        store.insert(bias_name(prefix, i), crate::tensor::Mat::zeros(1, w))?;
        fan_in = w;
    }
    Ok(())
}

/// Applies the MLP under `prefix` to every row of `x` independently.
pub fn shared_mlp(g: &mut Graph, prefix: &str, spec: &MlpSpec, x: Var) -> Result<Var> {
    spec.validate()?;
    let mut h = x;
    for i in 0..spec.widths.len() {
        let w = g.param(&weight_name(prefix, i))?;
        let b = g.param(&bias_name(prefix, i))?;
        if g.value(w).cols() != spec.widths[i] {
            return Err(Error::Config(format!(
                "{prefix}: layer {i} has width {} but spec says {}",
                g.value(w).cols(),
                spec.widths[i]
            )));
        }
        h = g.linear(h, w, Some(b))?;
        h = g.act(h, spec.activation_at(i));
    }
    Ok(h)
}
