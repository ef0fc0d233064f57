//! Adam with weight decay folded into the gradient as an L2 term.

use super::net::FcnParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.delta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: FcnParams,
    pub v: FcnParams,
}

impl AdamState {
    pub fn new(params: &FcnParams) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One Adam update of a flat parameter block. `step` counts from 1.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, cfg: &AdamConfig) {
    assert!(step >= 1);
    assert!(
        param.len() == grad.len() && param.len() == m.len() && param.len() == v.len(),
        "block sizes differ"
    );
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i] + cfg.weight_decay * param[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.delta);
    }
}

/// Returns the updated parameters; `state` advances by one step.
pub fn adam_step(params: &FcnParams, grads: &FcnParams, state: &mut AdamState, cfg: &AdamConfig) -> FcnParams {
    let mut next = params.clone();
    state.step += 1;
    let step = state.step;
    let blocks = next
        .blocks_mut()
        .zip(grads.blocks())
        .zip(state.m.blocks_mut().zip(state.v.blocks_mut()));
    for ((p, g), (m, v)) in blocks {
        adam_update(p, g, m, v, step, cfg);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::net::Widths;

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let p = FcnParams::init(1, 2, Widths::default(), 1);
        let mut state = AdamState::new(&p);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let next = adam_step(&p, &p.zeros_like(), &mut state, &cfg);
        assert_eq!(next, p);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let grad = [2.0, -0.5, 1e-3];
        let mut p = [0.0; 3];
        let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
        adam_update(&mut p, &grad, &mut m, &mut v, 1, &cfg);
        for (x, g) in p.iter().zip(grad) {
            // m_hat = g, v_hat = g^2
            let expected = -0.1 * g / (g.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-12, "{x} vs {expected}");
        }
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // f(x) = (x - 3)^2 starting from 0
        let cfg = AdamConfig {
            learning_rate: 0.05,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut x = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let mut last = 9.0;
        for step in 1..=20 {
            let g = [2.0 * (x[0] - 3.0)];
            adam_update(&mut x, &g, &mut m, &mut v, step, &cfg);
            let f = (x[0] - 3.0f64).powi(2);
            assert!(f < last, "step {step}: {f} >= {last}");
            last = f;
        }
    }

    #[test]
    fn weight_decay_pulls_towards_zero() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            weight_decay: 1.0,
            ..AdamConfig::default()
        };
        let mut p = [2.0, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &cfg);
        assert!(p[0] < 2.0 && p[1] > -2.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        }
        .validate()
        .is_err());
    }
}
