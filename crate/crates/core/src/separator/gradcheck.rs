use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MaskActivation, Separator, SeparatorConfig, TrainingExample};
use crate::error::Result;
use crate::losses::LossSpec;
use crate::signal::{SourceStack, Waveform};

/// Agreement between analytic and central-difference gradients on sampled
/// parameter coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// Fraction of coordinates with relative error at most `1e-4`.
    pub frac_within_1e4: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares gradients on `coordinates` randomly chosen parameters.
pub fn check_gradients(
    separator: &Separator,
    batch: &[TrainingExample],
    spec: &LossSpec,
    coordinates: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = separator.loss_and_grad(batch, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = separator.params.num_values();
    let mut probe = separator.clone();
    let mut errors = Vec::with_capacity(coordinates);
    for _ in 0..coordinates {
        let idx = rng.gen_range(0..total);
        let x = separator.params.get(idx);
        probe.params.set(idx, x + h);
        let plus = probe.loss(batch, spec)?;
        probe.params.set(idx, x - h);
        let minus = probe.loss(batch, spec)?;
        probe.params.set(idx, x);
        errors.push(relative_error(grads.get(idx), (plus - minus) / (2.0 * h)));
    }
    let max_rel_err = errors.iter().cloned().fold(0.0, f64::max);
    let within = errors.iter().filter(|&&e| e <= 1e-4).count();
    Ok(GradCheckReport {
        label: String::new(),
        coordinates,
        max_rel_err,
        frac_within_1e4: within as f64 / coordinates.max(1) as f64,
    })
}

fn random_wave(rng: &mut ChaCha8Rng, len: usize) -> Waveform {
    Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 8000).expect("finite samples")
}

/// Three random small networks on 128-sample inputs: MixIT with
/// consistency, PIT without, and PIT with consistency.
pub fn gradcheck_suite(seed: u64, coordinates: usize) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = LossSpec::default();
    let cases = [(8, 4, true, true), (16, 2, false, false), (16, 2, false, true)];
    let mut reports = Vec::with_capacity(cases.len());
    for (n, m, mixit, consistency) in cases {
        let config = SeparatorConfig {
            num_filters: n,
            kernel_len: 8,
            stride: 4,
            hidden_dim: 16,
            num_hidden_layers: 2,
            num_outputs: m,
            mixture_consistency: consistency,
            mask_activation: MaskActivation::Sigmoid,
            seed: Some(rng.gen()),
        };
        let example = if mixit {
            TrainingExample::Mixit {
                x1: random_wave(&mut rng, 128),
                x2: random_wave(&mut rng, 128),
            }
        } else {
            let refs = SourceStack::new(vec![random_wave(&mut rng, 128), random_wave(&mut rng, 128)])?;
            TrainingExample::Pit {
                mixture: crate::signal::mix(&refs),
                refs,
            }
        };
        let separator = Separator::new(config.clone())?;
        let mut report = check_gradients(&separator, &[example], &spec, coordinates, 1e-5, rng.gen())?;
        report.label = format!(
            "{} N={} M={} consistency={}",
            if mixit { "mixit" } else { "pit" },
            config.num_filters,
            config.num_outputs,
            config.mixture_consistency
        );
        reports.push(report);
    }
    Ok(reports)
}
