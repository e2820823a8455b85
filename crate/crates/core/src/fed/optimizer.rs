//! Client-side optimizers: SGD, Adam and RMSprop.

use serde::{Deserialize, Serialize};

use crate::error::{QflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epsilon: f64,
    pub rmsprop_decay: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerConfig {
            kind,
            learning_rate,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epsilon: 1e-7,
            rmsprop_decay: 0.9,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Rmsprop, learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        // A zero rate is allowed: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(QflError::config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) || !unit(self.rmsprop_decay) {
            return Err(QflError::config("decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(QflError::config("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(n_params: usize) -> Self {
        OptimizerState {
            step: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }
}

/// One in-place update of `params` from `grads`.
///
/// SGD: `θ ← θ − η·g`. Adam: bias-corrected moments,
/// `θ ← θ − η·m̂/(√v̂ + ε)`. RMSprop: `v ← ρv + (1−ρ)g²`,
/// `θ ← θ − η·g/√(v + ε)`.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    grads: &[f64],
    config: &OptimizerConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(QflError::training(format!(
            "optimizer length mismatch: {n} params, {} grads, {}/{} moments",
            grads.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    state.step += 1;
    let lr = config.learning_rate;
    match config.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (config.adam_beta1, config.adam_beta2);
            let t = state.step as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for i in 0..n {
                let g = grads[i];
                let m = &mut state.first_moment[i];
                let v = &mut state.second_moment[i];
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
        OptimizerKind::Rmsprop => {
            let rho = config.rmsprop_decay;
            for i in 0..n {
                let g = grads[i];
                let v = &mut state.second_moment[i];
                *v = rho * *v + (1.0 - rho) * g * g;
                params[i] -= lr * g / (*v + config.epsilon).sqrt();
            }
        }
    }
    Ok(())
}
