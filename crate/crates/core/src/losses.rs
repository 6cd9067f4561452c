//! Signal-level training losses and evaluation metrics.
//!
//! Training uses the negative thresholded SNR
//!
//! ```text
//! L(y, ŷ) = 10·log10(‖y − ŷ‖² + τ‖y‖² + ε) − 10·log10(‖y‖² + ε),  τ = 10^(−SNR_max/10)
//! ```
//!
//! whose infimum is `−SNR_max`. Evaluation uses SI-SNR and its improvement
//! over the unprocessed mixture.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{dot, sum_sq, SourceStack, Waveform};

pub const DEFAULT_SNR_MAX_DB: f64 = 30.0;
pub const DEFAULT_EPSILON: f64 = 1e-12;

const DB_PER_NEPER_POWER: f64 = 10.0 / std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ThresholdedSnr,
    SiSnrNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    pub snr_max_db: f64,
    pub epsilon: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::ThresholdedSnr,
            snr_max_db: DEFAULT_SNR_MAX_DB,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LossSpec {
    pub fn thresholded(snr_max_db: f64) -> Self {
        Self {
            snr_max_db,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_max_db.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "snr_max_db must be finite, got {}",
                self.snr_max_db
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Soft threshold `10^(−SNR_max/10)`.
    pub fn tau(&self) -> f64 {
        10f64.powf(-self.snr_max_db / 10.0)
    }

    /// Loss on raw sample slices of equal length. Lower is better.
    pub fn eval(&self, y: &[f64], yhat: &[f64]) -> f64 {
        match self.kind {
            LossKind::ThresholdedSnr => thresh_snr_raw(y, yhat, self.tau(), self.epsilon),
            LossKind::SiSnrNegative => -si_snr_raw(y, yhat, self.epsilon),
        }
    }

    /// Loss and its gradient with respect to `yhat`.
    pub fn eval_with_grad(&self, y: &[f64], yhat: &[f64]) -> (f64, Vec<f64>) {
        match self.kind {
            LossKind::ThresholdedSnr => thresh_snr_grad(y, yhat, self.tau(), self.epsilon),
            LossKind::SiSnrNegative => {
                let (v, mut g) = si_snr_grad(y, yhat, self.epsilon);
                g.iter_mut().for_each(|x| *x = -*x);
                (-v, g)
            }
        }
    }
}

fn check_lengths(y: &Waveform, yhat: &Waveform) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            index: 1,
            expected: y.len(),
            found: yhat.len(),
        });
    }
    Ok(())
}

fn thresh_snr_raw(y: &[f64], yhat: &[f64], tau: f64, eps: f64) -> f64 {
    let ref_energy = sum_sq(y);
    let err: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (err + tau * ref_energy + eps).log10() - 10.0 * (ref_energy + eps).log10()
}

fn thresh_snr_grad(y: &[f64], yhat: &[f64], tau: f64, eps: f64) -> (f64, Vec<f64>) {
    let ref_energy = sum_sq(y);
    let residual: Vec<f64> = yhat.iter().zip(y).map(|(b, a)| b - a).collect();
    let denom = sum_sq(&residual) + tau * ref_energy + eps;
    let value = 10.0 * denom.log10() - 10.0 * (ref_energy + eps).log10();
    let scale = 2.0 * DB_PER_NEPER_POWER / denom;
    (value, residual.into_iter().map(|r| r * scale).collect())
}

/// Negative thresholded SNR in dB.
pub fn neg_thresh_snr(y: &Waveform, yhat: &Waveform, spec: &LossSpec) -> Result<f64> {
    check_lengths(y, yhat)?;
    Ok(thresh_snr_raw(
        y.samples(),
        yhat.samples(),
        spec.tau(),
        spec.epsilon,
    ))
}

fn si_snr_raw(y: &[f64], yhat: &[f64], eps: f64) -> f64 {
    let ref_energy = sum_sq(y);
    let alpha = dot(yhat, y) / (ref_energy + eps);
    let target_energy = alpha * alpha * ref_energy;
    let noise: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let e = alpha * a - b;
            e * e
        })
        .sum();
    10.0 * ((target_energy + eps) / (noise + eps)).log10()
}

fn si_snr_grad(y: &[f64], yhat: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let ref_energy = sum_sq(y);
    let q = ref_energy + eps;
    let alpha = dot(yhat, y) / q;
    let signal = alpha * alpha * ref_energy + eps;
    let e: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| alpha * a - b).collect();
    let noise = sum_sq(&e) + eps;
    let e_dot_y = dot(&e, y);
    let value = 10.0 * (signal / noise).log10();
    let grad = y
        .iter()
        .zip(&e)
        .map(|(&yt, &et)| {
            let d_signal = 2.0 * alpha * ref_energy * yt / q;
            let d_noise = 2.0 * (e_dot_y * yt / q - et);
            DB_PER_NEPER_POWER * (d_signal / signal - d_noise / noise)
        })
        .collect();
    (value, grad)
}

fn remove_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Scale-invariant SNR of `yhat` against `y`, projection form, no mean removal.
pub fn si_snr(y: &Waveform, yhat: &Waveform, epsilon: f64) -> Result<f64> {
    si_snr_with(y, yhat, epsilon, false)
}

/// SI-SNR with optional zero-mean preprocessing of both signals.
pub fn si_snr_with(y: &Waveform, yhat: &Waveform, epsilon: f64, zero_mean: bool) -> Result<f64> {
    check_lengths(y, yhat)?;
    if zero_mean {
        let (y, yhat) = (remove_mean(y.samples()), remove_mean(yhat.samples()));
        if sum_sq(&y) == 0.0 {
            return Err(Error::InvalidArgument("zero-energy reference".into()));
        }
        return Ok(si_snr_raw(&y, &yhat, epsilon));
    }
    if sum_sq(y.samples()) == 0.0 {
        return Err(Error::InvalidArgument("zero-energy reference".into()));
    }
    Ok(si_snr_raw(y.samples(), yhat.samples(), epsilon))
}

/// `si_snr(reference, estimate) − si_snr(reference, mixture)`.
pub fn si_snr_improvement(
    mixture: &Waveform,
    estimate: &Waveform,
    reference: &Waveform,
) -> Result<f64> {
    si_snr_improvement_with(mixture, estimate, reference, DEFAULT_EPSILON, false)
}

pub fn si_snr_improvement_with(
    mixture: &Waveform,
    estimate: &Waveform,
    reference: &Waveform,
    epsilon: f64,
    zero_mean: bool,
) -> Result<f64> {
    Ok(si_snr_with(reference, estimate, epsilon, zero_mean)?
        - si_snr_with(reference, mixture, epsilon, zero_mean)?)
}

/// Entry `(i, j)` is `loss(refs[i], ests[j])`.
pub fn loss_matrix(refs: &SourceStack, ests: &SourceStack, spec: &LossSpec) -> Result<Array2<f64>> {
    if refs.num_samples() != ests.num_samples() {
        return Err(Error::LengthMismatch {
            index: 0,
            expected: refs.num_samples(),
            found: ests.num_samples(),
        });
    }
    Ok(Array2::from_shape_fn((refs.len(), ests.len()), |(i, j)| {
        spec.eval(refs[i].samples(), ests[j].samples())
    }))
}
