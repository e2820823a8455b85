//! Federated averaging of client parameter vectors.
//!
//! A server step of size 1 toward the weighted mean of the client
//! parameters lands exactly on that mean, so no separate server optimizer
//! exists.

use super::client::ClientUpdate;
use crate::error::{QflError, Result};
use crate::qcnn::ParamVector;

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub fn uniform_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Rescales nonnegative weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(QflError::config("client weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(QflError::config("client weights sum to zero"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(QflError::config("client weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(QflError::config(format!(
            "client weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// `θ ← Σ_k w_k·θ_k`, coordinate-wise, accumulated in update order.
pub fn federated_average(updates: &[ClientUpdate], weights: &[f64]) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| QflError::training("no client updates to aggregate"))?;
    if weights.len() != updates.len() {
        return Err(QflError::config(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    check_weights(weights)?;
    let n = first.params.len();
    let mut acc = vec![0.0; n];
    for (update, &w) in updates.iter().zip(weights) {
        if update.params.names() != first.params.names() {
            return Err(QflError::training(format!(
                "update from `{}` has a different parameter layout",
                update.client_id
            )));
        }
        for (a, v) in acc.iter_mut().zip(update.params.values()) {
            *a += w * v;
        }
    }
    first.params.with_values(acc)
}
