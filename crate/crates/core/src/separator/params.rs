use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskActivation {
    Sigmoid,
    Relu,
}

/// Shape and behaviour of the encoder / masker / decoder network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparatorConfig {
    #[serde(default = "defaults::num_filters")]
    pub num_filters: usize,
    #[serde(default = "defaults::kernel_len")]
    pub kernel_len: usize,
    #[serde(default = "defaults::stride")]
    pub stride: usize,
    #[serde(default = "defaults::hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::num_hidden_layers")]
    pub num_hidden_layers: usize,
    pub num_outputs: usize,
    pub mixture_consistency: bool,
    #[serde(default = "defaults::mask_activation")]
    pub mask_activation: MaskActivation,
    /// Initialization seed. Derived from the stage seed when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
}

mod defaults {
    use super::MaskActivation;

    pub fn num_filters() -> usize {
        32
    }
    pub fn kernel_len() -> usize {
        16
    }
    pub fn stride() -> usize {
        8
    }
    pub fn hidden_dim() -> usize {
        64
    }
    pub fn num_hidden_layers() -> usize {
        2
    }
    pub fn mask_activation() -> MaskActivation {
        MaskActivation::Sigmoid
    }
}

impl SeparatorConfig {
    pub fn new(num_outputs: usize, mixture_consistency: bool, seed: u64) -> Self {
        Self {
            num_filters: defaults::num_filters(),
            kernel_len: defaults::kernel_len(),
            stride: defaults::stride(),
            hidden_dim: defaults::hidden_dim(),
            num_hidden_layers: defaults::num_hidden_layers(),
            num_outputs,
            mixture_consistency,
            mask_activation: MaskActivation::Sigmoid,
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_filters", self.num_filters),
            ("kernel_len", self.kernel_len),
            ("stride", self.stride),
            ("hidden_dim", self.hidden_dim),
            ("num_hidden_layers", self.num_hidden_layers),
            ("num_outputs", self.num_outputs),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("separator {name} must be at least 1")));
        }
        if self.stride > self.kernel_len {
            return Err(Error::Config(format!(
                "stride {} exceeds kernel_len {}",
                self.stride, self.kernel_len
            )));
        }
        Ok(())
    }

    pub fn seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// True when the two configs describe the same parameter shapes.
    pub fn same_architecture(&self, other: &SeparatorConfig) -> bool {
        self.num_filters == other.num_filters
            && self.kernel_len == other.kernel_len
            && self.stride == other.stride
            && self.hidden_dim == other.hidden_dim
            && self.num_hidden_layers == other.num_hidden_layers
            && self.num_outputs == other.num_outputs
    }

    /// `(out, in)` shapes of the masker's dense layers, output layer last.
    pub(crate) fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.num_hidden_layers + 1);
        let mut fan_in = self.num_filters;
        for _ in 0..self.num_hidden_layers {
            shapes.push((self.hidden_dim, fan_in));
            fan_in = self.hidden_dim;
        }
        shapes.push((self.num_outputs * self.num_filters, fan_in));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable tensors. Gradients and Adam moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorParams {
    /// `N × L` analysis filters.
    pub encoder: Array2<f64>,
    /// Hidden layers followed by the mask output layer.
    pub masker: Vec<Dense>,
    /// `N × L` synthesis filters.
    pub decoder: Array2<f64>,
}

impl SeparatorParams {
    pub fn zeros(config: &SeparatorConfig) -> Self {
        let (n, l) = (config.num_filters, config.kernel_len);
        Self {
            encoder: Array2::zeros((n, l)),
            masker: config
                .dense_shapes()
                .into_iter()
                .map(|(o, i)| Dense {
                    weight: Array2::zeros((o, i)),
                    bias: Array1::zeros(o),
                })
                .collect(),
            decoder: Array2::zeros((n, l)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: Array2::zeros(self.encoder.raw_dim()),
            masker: self
                .masker
                .iter()
                .map(|d| Dense {
                    weight: Array2::zeros(d.weight.raw_dim()),
                    bias: Array1::zeros(d.bias.raw_dim()),
                })
                .collect(),
            decoder: Array2::zeros(self.decoder.raw_dim()),
        }
    }

    /// Tensors in declaration order: encoder, (weight, bias) per layer, decoder.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.encoder.as_slice().expect("standard layout")];
        for d in &self.masker {
            out.push(d.weight.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out.push(self.decoder.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.encoder.as_slice_mut().expect("standard layout")];
        for d in &mut self.masker {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.decoder.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn get(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn same_shape(&self, other: &SeparatorParams) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
            && self.encoder.dim() == other.encoder.dim()
            && self.decoder.dim() == other.decoder.dim()
    }

    pub fn matches_config(&self, config: &SeparatorConfig) -> bool {
        self.same_shape(&SeparatorParams::zeros(config))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_scaled(&mut self, other: &SeparatorParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform `(-a, a)` initialization with `a = sqrt(1 / fan_in)`; a pure
/// function of the config (including its seed).
pub fn init_params(config: &SeparatorConfig) -> SeparatorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed_or_zero());
    let mut params = SeparatorParams::zeros(config);
    let mut fill = |t: &mut [f64], fan_in: usize| {
        let a = (1.0 / fan_in as f64).sqrt();
        t.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
    };
    fill(params.encoder.as_slice_mut().unwrap(), config.kernel_len);
    for d in &mut params.masker {
        let fan_in = d.weight.ncols();
        fill(d.weight.as_slice_mut().unwrap(), fan_in);
        fill(d.bias.as_slice_mut().unwrap(), fan_in);
    }
    fill(params.decoder.as_slice_mut().unwrap(), config.num_filters);
    params
}
