use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const RMS_DECAY: f64 = 0.95;
/// Weight of the new squared gradient, `1 - RMS_DECAY` written exactly.
pub const SQ_WEIGHT: f64 = 0.05;
pub const MOMENTUM: f64 = 0.9;
pub const EPSILON: f64 = 1e-8;

/// Learning rate after `step` updates: `base` halved every `halve_every`.
pub fn lr_at(step: u64, base: f64, halve_every: u64) -> f64 {
    let halvings = step / halve_every.max(1);
    base * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
}

/// RMSProp accumulators with momentum, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub sq: IndexMap<String, Vec<f64>>,
    pub mom: IndexMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(k, v)| (k.to_string(), vec![0.0; v.len()])).collect();
        Self {
            step: 0,
            sq: zeros(),
            mom: zeros(),
        }
    }
}

/// One update: `s = 0.95 s + 0.05 g^2`, `m = 0.9 m + lr g / sqrt(s + 1e-8)`,
/// `p = p - m`. Parameters without a gradient entry see a zero gradient.
/// Nothing is modified when any gradient is non-finite.
pub fn rmsprop_step(params: &mut ParamStore, grads: &IndexMap<String, Vec<f64>>, state: &mut OptimizerState, lr: f64) -> Result<()> {
    for (name, g) in grads {
        let p = params.get(name)?;
        if g.len() != p.len() {
            return Err(Error::Shape {
                op: "rmsprop_step",
                lhs: p.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} at index {i} is {}", g[i])));
        }
    }
    for (name, p) in params.iter_mut() {
        let (Some(s), Some(m)) = (state.sq.get_mut(name), state.mom.get_mut(name)) else {
            return Err(Error::Config(format!("optimizer has no state for {name}")));
        };
        let g = grads.get(name);
        for (i, pv) in p.data_mut().iter_mut().enumerate() {
            let gv = g.map_or(0.0, |g| g[i]);
            s[i] = RMS_DECAY * s[i] + SQ_WEIGHT * gv * gv;
            m[i] = MOMENTUM * m[i] + lr * gv / (s[i] + EPSILON).sqrt();
            *pv -= m[i];
        }
    }
    state.step += 1;
    Ok(())
}
