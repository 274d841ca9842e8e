use ndarray::Zip;

use crate::error::{Error, Result};
use crate::gnn::{GnnParams, MultiGnn};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter set of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<GnnParams>,
    pub v: Vec<GnnParams>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MultiGnn) -> Self {
        let zeros: Vec<GnnParams> = model.sets.iter().map(GnnParams::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .chain(&self.v)
            .all(|p| p.layers.iter().all(|l| l.is_finite()))
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    model: &mut MultiGnn,
    grads: &[GnnParams],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != model.sets.len() || state.m.len() != model.sets.len() {
        return Err(Error::invalid(format!(
            "model has {} parameter sets, gradients {} and optimizer state {}",
            model.sets.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
    for (s, params) in model.sets.iter_mut().enumerate() {
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let g = &grads[s].layers[l];
            let m = &mut state.m[s].layers[l];
            let v = &mut state.v[s].layers[l];
            if g.weight.dim() != layer.weight.dim() || m.weight.dim() != layer.weight.dim() {
                return Err(Error::invalid(format!("shape mismatch in layer {l}")));
            }
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
    }
    Ok(())
}
