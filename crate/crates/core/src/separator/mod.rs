//! A small waveform separator: strided conv encoder, frame-wise MLP mask
//! estimator, overlap-add decoder, optional mixture-consistency projection.
//! Gradients are hand-derived and checked against finite differences.

mod adam;
mod checkpoint;
mod gradcheck;
mod network;
mod params;

use rayon::prelude::*;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use gradcheck::{check_gradients, gradcheck_suite, relative_error, GradCheckReport};
pub use params::{init_params, Dense, MaskActivation, SeparatorConfig, SeparatorParams};

use crate::assign::{mixit_loss, pit_loss};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::signal::{SourceStack, Waveform};

/// Equal-residual projection onto `{ŝ : Σ_m ŝ_m = x}`:
/// `ŝ_m = s_m + (x − Σ_m' s_m') / M`.
pub fn mixture_consistency_project(initial: &SourceStack, mixture: &Waveform) -> Result<SourceStack> {
    if initial.num_samples() != mixture.len() {
        return Err(Error::LengthMismatch {
            index: 0,
            expected: mixture.len(),
            found: initial.num_samples(),
        });
    }
    let mut channels: Vec<Vec<f64>> = initial.iter().map(|w| w.samples().to_vec()).collect();
    project_in_place(&mut channels, mixture.samples());
    SourceStack::from_channels(channels, mixture.sample_rate())
}

fn project_in_place(channels: &mut [Vec<f64>], mixture: &[f64]) {
    let m = channels.len() as f64;
    for t in 0..mixture.len() {
        let sum: f64 = channels.iter().map(|c| c[t]).sum();
        let correction = (mixture[t] - sum) / m;
        for c in channels.iter_mut() {
            c[t] += correction;
        }
    }
}

/// Adjoint of the projection (it is symmetric): subtract the per-sample
/// mean gradient from every channel.
fn project_grad_in_place(grads: &mut [Vec<f64>]) {
    let m = grads.len() as f64;
    let len = grads[0].len();
    for t in 0..len {
        let mean = grads.iter().map(|g| g[t]).sum::<f64>() / m;
        for g in grads.iter_mut() {
            g[t] -= mean;
        }
    }
}

/// One unit of training data.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingExample {
    /// Unsupervised: the network sees `x1 + x2` and is scored by the MixIT loss.
    Mixit { x1: Waveform, x2: Waveform },
    /// Supervised (or pseudo-supervised): the network sees `mixture` and is
    /// scored by the PIT loss against `refs`.
    Pit { mixture: Waveform, refs: SourceStack },
}

impl TrainingExample {
    pub fn input(&self) -> Result<Waveform> {
        match self {
            TrainingExample::Mixit { x1, x2 } => x1.add(x2),
            TrainingExample::Pit { mixture, .. } => Ok(mixture.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separator {
    pub config: SeparatorConfig,
    pub params: SeparatorParams,
}

impl Separator {
    pub fn new(config: SeparatorConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: SeparatorConfig, params: SeparatorParams) -> Result<Self> {
        config.validate()?;
        if !params.matches_config(&config) {
            return Err(Error::Shape("parameters do not match separator config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let (params, config) = load_checkpoint(path)?;
        Self::from_parts(config, params)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        save_checkpoint(&self.params, &self.config, path)
    }

    pub fn num_outputs(&self) -> usize {
        self.config.num_outputs
    }

    /// Separates `mixture` into `M` signals of the same length.
    pub fn forward(&self, mixture: &Waveform) -> Result<SourceStack> {
        forward(&self.params, &self.config, mixture)
    }

    pub fn loss_and_grad(
        &self,
        batch: &[TrainingExample],
        spec: &LossSpec,
    ) -> Result<(f64, SeparatorParams)> {
        loss_and_grad(&self.params, &self.config, batch, spec)
    }

    /// Loss of a batch without gradients.
    pub fn loss(&self, batch: &[TrainingExample], spec: &LossSpec) -> Result<f64> {
        batch_loss(&self.params, &self.config, batch, spec)
    }
}

fn check_input(config: &SeparatorConfig, mixture: &Waveform) -> Result<()> {
    if mixture.len() < config.kernel_len {
        return Err(Error::InvalidArgument(format!(
            "input of {} samples is shorter than the kernel ({})",
            mixture.len(),
            config.kernel_len
        )));
    }
    Ok(())
}

fn forward_raw(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    mixture: &Waveform,
) -> (Vec<Vec<f64>>, network::Trace) {
    let (mut outputs, trace) = network::forward(params, config, mixture.samples());
    if config.mixture_consistency {
        project_in_place(&mut outputs, mixture.samples());
    }
    (outputs, trace)
}

pub fn forward(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    mixture: &Waveform,
) -> Result<SourceStack> {
    check_input(config, mixture)?;
    let (outputs, _) = forward_raw(params, config, mixture);
    SourceStack::from_channels(outputs, mixture.sample_rate())
}

/// Per-example assignment loss and the gradient of that loss with respect to
/// each network output, holding the winning assignment fixed.
fn example_loss_and_output_grads(
    example: &TrainingExample,
    outputs: &SourceStack,
    spec: &LossSpec,
) -> Result<(f64, Vec<Vec<f64>>)> {
    match example {
        TrainingExample::Mixit { x1, x2 } => {
            let result = mixit_loss(x1, x2, outputs, spec)?;
            let matrix = result.mixing().expect("mixit returns a mixing matrix");
            let remixed = result.remixed.as_ref().expect("mixit returns remixes");
            let targets = [x1, x2];
            let row_grads: Vec<Vec<f64>> = (0..2)
                .map(|i| {
                    spec.eval_with_grad(targets[i].samples(), remixed[i].samples())
                        .1
                })
                .collect();
            let grads = matrix
                .assignment()
                .iter()
                .map(|&row| row_grads[row as usize].clone())
                .collect();
            Ok((result.total_loss, grads))
        }
        TrainingExample::Pit { refs, .. } => {
            let result = pit_loss(refs, outputs, spec)?;
            let perm = result.permutation().expect("pit returns a permutation");
            let mut grads = vec![Vec::new(); outputs.len()];
            for (i, &j) in perm.as_slice().iter().enumerate() {
                grads[j] = spec.eval_with_grad(refs[i].samples(), outputs[j].samples()).1;
            }
            Ok((result.total_loss, grads))
        }
    }
}

fn check_example(config: &SeparatorConfig, example: &TrainingExample) -> Result<()> {
    if let TrainingExample::Pit { refs, .. } = example {
        if refs.len() != config.num_outputs {
            return Err(Error::Shape(format!(
                "PIT example has {} references, separator emits {}",
                refs.len(),
                config.num_outputs
            )));
        }
    }
    Ok(())
}

fn single_loss_and_grad(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    example: &TrainingExample,
    spec: &LossSpec,
) -> Result<(f64, SeparatorParams)> {
    check_example(config, example)?;
    let input = example.input()?;
    check_input(config, &input)?;
    let (outputs, trace) = forward_raw(params, config, &input);
    let outputs = SourceStack::from_channels(outputs, input.sample_rate())?;
    let (loss, mut output_grads) = example_loss_and_output_grads(example, &outputs, spec)?;
    if config.mixture_consistency {
        project_grad_in_place(&mut output_grads);
    }
    let mut grads = params.zeros_like();
    network::backward(params, config, &trace, &output_grads, &mut grads);
    Ok((loss, grads))
}

/// Mean assignment loss over the batch and its gradient. Examples are
/// evaluated in parallel; the reduction runs in batch order so the result
/// does not depend on the thread count.
pub fn loss_and_grad(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    batch: &[TrainingExample],
    spec: &LossSpec,
) -> Result<(f64, SeparatorParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let per_example: Vec<Result<(f64, SeparatorParams)>> = batch
        .par_iter()
        .map(|ex| single_loss_and_grad(params, config, ex, spec))
        .collect();
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for (index, r) in per_example.into_iter().enumerate() {
        let (loss, g) = r?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { index });
        }
        total += loss;
        grads.add_scaled(&g, 1.0);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    if !grads.is_finite() {
        return Err(Error::NonFiniteLoss { index: 0 });
    }
    Ok((total * scale, grads))
}

/// Mean assignment loss without gradients.
pub fn batch_loss(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    batch: &[TrainingExample],
    spec: &LossSpec,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let losses: Vec<Result<f64>> = batch
        .par_iter()
        .map(|ex| {
            check_example(config, ex)?;
            let input = ex.input()?;
            let outputs = forward(params, config, &input)?;
            Ok(example_loss_and_output_grads(ex, &outputs, spec)?.0)
        })
        .collect();
    let mut total = 0.0;
    for (index, l) in losses.into_iter().enumerate() {
        let l = l?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { index });
        }
        total += l;
    }
    Ok(total / batch.len() as f64)
}
