use serde::{Deserialize, Serialize};

use super::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub base_lr: f64,
    /// Per-epoch multiplicative learning-rate factor.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            decay: 0.1f64.powf(1.0 / 500.0),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments, shaped like the parameters they track.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub settings: AdamSettings,
    pub step_count: u64,
    /// Epoch index used for the learning-rate schedule.
    pub epoch: u32,
    pub first_moment: NetworkParams,
    pub second_moment: NetworkParams,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, settings: AdamSettings) -> Self {
        Self {
            settings,
            step_count: 0,
            epoch: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// Adds zeroed moments for a freshly grown block.
    pub fn grow(&mut self) {
        for m in [&mut self.first_moment, &mut self.second_moment] {
            m.blocks.push(super::PtaBlock {
                weights: vec![0.0; m.nvars()],
            });
            m.output_weights.push(0.0);
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.settings.base_lr * self.settings.decay.powi(self.epoch as i32)
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
pub fn adam_step(params: &mut NetworkParams, grads: &NetworkParams, state: &mut OptimizerState) {
    state.step_count += 1;
    let AdamSettings {
        beta1, beta2, eps, ..
    } = state.settings;
    let lr = state.learning_rate();
    let t = state.step_count as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);

    let moments = state
        .first_moment
        .values_mut()
        .zip(state.second_moment.values_mut());
    for ((p, &g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(w: f64) -> NetworkParams {
        NetworkParams::from_parts(vec![vec![w]], vec![1.0], 0.0, 1).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_net(0.3);
        let before = p.clone();
        let mut state = OptimizerState::new(&p, AdamSettings::default());
        let zeros = p.zeros_like();
        adam_step(&mut p, &zeros, &mut state);
        assert_eq!(p, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for &g in &[3.0, -0.02, 1e-3] {
            let mut p = scalar_net(0.0);
            let mut grads = p.zeros_like();
            grads.blocks[0].weights[0] = g;
            let mut state = OptimizerState::new(&p, AdamSettings::default());
            adam_step(&mut p, &grads, &mut state);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.blocks[0].weights[0] - expected).abs() < 1e-15);
            assert!((p.blocks[0].weights[0] + 0.01 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn learning_rate_decays_tenfold_per_500_epochs() {
        let p = scalar_net(0.0);
        let mut state = OptimizerState::new(&p, AdamSettings::default());
        assert_eq!(state.learning_rate(), 0.01);
        state.epoch = 500;
        assert!((state.learning_rate() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn grow_extends_moments() {
        let mut p = scalar_net(0.0);
        let mut state = OptimizerState::new(&p, AdamSettings::default());
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        p.grow(0.5, &mut rng);
        state.grow();
        assert_eq!(state.first_moment.values().count(), p.values().count());
        assert!(state.second_moment.values().all(|&v| v == 0.0));
    }
}
