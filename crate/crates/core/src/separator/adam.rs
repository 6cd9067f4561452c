use super::params::SeparatorParams;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-3;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: SeparatorParams,
    pub second_moment: SeparatorParams,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &SeparatorParams, lr: f64) -> Self {
        Self {
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut SeparatorParams, grads: &SeparatorParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first_moment) {
            return Err(Error::Shape(
                "gradient / optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powf(self.step as f64);
        let bc2 = 1.0 - b2.powf(self.step as f64);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first_moment.tensors_mut())
            .zip(self.second_moment.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(
    params: &SeparatorParams,
    grads: &SeparatorParams,
    state: &AdamState,
) -> Result<(SeparatorParams, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.update(&mut p, grads)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separator::params::{init_params, SeparatorConfig};

    fn small() -> SeparatorConfig {
        let mut c = SeparatorConfig::new(2, false, 5);
        c.num_filters = 4;
        c.kernel_len = 4;
        c.stride = 2;
        c.hidden_dim = 3;
        c.num_hidden_layers = 1;
        c
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let p = init_params(&small());
        let mut state = AdamState::new(&p, 1e-3);
        state.first_moment.encoder.fill(1.0);
        state.second_moment.encoder.fill(1.0);
        let (p2, s2) = adam_step(&p, &p.zeros_like(), &state).unwrap();
        // first moment decays to 0.9, second to 0.999; the update is nonzero
        // only where the carried moment is.
        assert_eq!(p2.masker, p.masker);
        assert!(s2.first_moment.encoder.iter().all(|&v| (v - 0.9).abs() < 1e-15));
        assert!(s2.second_moment.encoder.iter().all(|&v| (v - 0.999).abs() < 1e-15));
        assert_eq!(s2.step, 1);

        let fresh = AdamState::new(&p, 1e-3);
        let (p3, _) = adam_step(&p, &p.zeros_like(), &fresh).unwrap();
        assert_eq!(p3, p);
    }

    #[test]
    fn first_step_matches_scalar_oracle() {
        let p = init_params(&small());
        let mut g = p.zeros_like();
        for (i, v) in g.encoder.iter_mut().enumerate() {
            *v = (i as f64 - 7.5) * 0.013;
        }
        let state = AdamState::new(&p, 1e-3);
        let (p2, s2) = adam_step(&p, &g, &state).unwrap();
        for ((&w0, &w1), &gi) in p.encoder.iter().zip(&p2.encoder).zip(&g.encoder) {
            // scalar recomputation of one Adam step from zero moments
            let m = 0.1 * gi;
            let v = 0.001 * gi * gi;
            let m_hat = m / (1.0 - 0.9);
            let v_hat = v / (1.0 - 0.999);
            let expected = w0 - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((w1 - expected).abs() <= 1e-15, "{w1} vs {expected}");
        }
        // two more steps follow the same recurrence
        let (p3, s3) = adam_step(&p2, &g, &s2).unwrap();
        let gi = g.encoder[[0, 0]];
        let m = 0.9 * (0.1 * gi) + 0.1 * gi;
        let v = 0.999 * (0.001 * gi * gi) + 0.001 * gi * gi;
        let expected = p2.encoder[[0, 0]]
            - 1e-3 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p3.encoder[[0, 0]] - expected).abs() <= 1e-15);
        assert_eq!(s3.step, 2);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let p = init_params(&small());
        let mut g = p.zeros_like();
        g.decoder.fill(0.5);
        let s = AdamState::new(&p, 1e-3);
        assert_eq!(adam_step(&p, &g, &s).unwrap(), adam_step(&p, &g, &s).unwrap());

        let mut other = small();
        other.num_outputs = 3;
        let wrong = init_params(&other);
        assert!(adam_step(&p, &wrong, &s).is_err());
    }
}
