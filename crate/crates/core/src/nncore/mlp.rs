use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::{sigmoid, Graph, NodeId};
use super::tensor::{Matrix, ParamSet, ParamTensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Logits are clamped to `±LOGIT_BOUND` before the sigmoid, which keeps every
/// probability inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const LOGIT_BOUND: f64 = 15.0;
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Layer sizes of a multi-label network with an independent sigmoid per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
}

impl MlpSpec {
    /// Two hidden layers of width 128 with rectifiers.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: vec![128, 128],
            output_dim,
            hidden_activation: Activation::Relu,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("all layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamSet,
}

impl Mlp {
    /// Uniform fan-in initialisation for weights, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let gain = match spec.hidden_activation {
            Activation::Relu => 6.0,
            Activation::Tanh => 3.0,
        };
        let mut params = ParamSet::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let bound = (gain / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
            params.push(ParamTensor::new(format!("layers.{i}.weight"), w));
            params.push(ParamTensor::new(format!("layers.{i}.bias"), Array2::zeros((1, fan_out))));
        }
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            params.push(ParamTensor::new(format!("layers.{i}.weight"), Array2::zeros((fan_in, fan_out))));
            params.push(ParamTensor::new(format!("layers.{i}.bias"), Array2::zeros((1, fan_out))));
        }
        Ok(Mlp { spec, params })
    }

    /// Rebuild from a parameter set, checking names and shapes against the spec.
    pub fn from_params(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        let expected = Mlp::zeros(spec.clone())?;
        if expected.params.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                expected.params.len(),
                params.len()
            )));
        }
        for (e, p) in expected.params.iter().zip(params.iter()) {
            if e.name != p.name || e.shape() != p.shape() {
                return Err(Error::Config(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    p.name,
                    p.shape(),
                    e.name,
                    e.shape()
                )));
            }
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_dim {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.spec.input_dim,
                got: cols,
            });
        }
        Ok(())
    }

    /// Class probabilities for a batch of states (one per row), no tape.
    pub fn forward(&self, states: ArrayView2<'_, f64>) -> Result<Matrix> {
        self.check_input(states.ncols())?;
        let n_layers = self.spec.hidden_dims.len() + 1;
        let mut h = states.to_owned();
        for layer in 0..n_layers {
            let w = &self.params.get(2 * layer).values;
            let b = &self.params.get(2 * layer + 1).values;
            h = h.dot(w) + b;
            if layer + 1 < n_layers {
                match self.spec.hidden_activation {
                    Activation::Relu => h.mapv_inplace(|x| x.max(0.0)),
                    Activation::Tanh => h.mapv_inplace(f64::tanh),
                }
            }
        }
        h.mapv_inplace(|x| sigmoid(x.clamp(-LOGIT_BOUND, LOGIT_BOUND)));
        Ok(h)
    }

    pub fn forward_one(&self, state: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Recorded forward pass; `input` is a `batch x input_dim` node.
    pub fn forward_graph(&self, g: &mut Graph, input: NodeId) -> Result<NodeId> {
        self.check_input(g.value(input).ncols())?;
        let n_layers = self.spec.hidden_dims.len() + 1;
        let mut h = input;
        for layer in 0..n_layers {
            let w = g.param(&self.params, 2 * layer);
            let b = g.param(&self.params, 2 * layer + 1);
            let z = g.matmul(h, w);
            h = g.add_row(z, b);
            if layer + 1 < n_layers {
                h = match self.spec.hidden_activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                };
            }
        }
        Ok(g.sigmoid_clamped(h, LOGIT_BOUND))
    }
}
