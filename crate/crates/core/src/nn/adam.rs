use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{LayerGrads, Mlp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid Adam configuration {self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grads.len())?;
        self.t += 1;
        let c = self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one_b1 = T::of(1.0 - c.beta1);
        let one_b2 = T::of(1.0 - c.beta2);
        let inv_bc1 = T::of(1.0 / (1.0 - c.beta1.powi(self.t as i32)));
        let inv_bc2 = T::of(1.0 / (1.0 - c.beta2.powi(self.t as i32)));
        let lr = T::of(c.lr);
        let eps = T::of(c.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m * inv_bc1;
            let v_hat = *v * inv_bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// One Adam update of `params` in place.
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &mut [T], grads: &[T]) -> Result<()> {
    state.step(params, grads)
}

/// Per-tensor Adam states for every layer of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpOptimizer<T> {
    states: Vec<(AdamState<T>, AdamState<T>)>,
}

impl<T: Scalar> MlpOptimizer<T> {
    pub fn new(config: AdamConfig, mlp: &Mlp<T>) -> Self {
        let states = mlp
            .layers
            .iter()
            .map(|l| (AdamState::new(config, l.weight.len()), AdamState::new(config, l.bias.len())))
            .collect();
        Self { states }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.0.t)
    }

    pub fn step(&mut self, mlp: &mut Mlp<T>, grads: &[LayerGrads<T>]) -> Result<()> {
        check_len(self.states.len(), grads.len())?;
        for ((layer, g), (sw, sb)) in mlp.layers.iter_mut().zip(grads).zip(self.states.iter_mut()) {
            let w = layer.weight.as_slice_mut().expect("standard layout weights");
            let gw = g.weight.as_standard_layout();
            sw.step(w, gw.as_slice().expect("standard layout"))?;
            let b = layer.bias.as_slice_mut().expect("contiguous bias");
            sb.step(b, g.bias.as_slice().expect("contiguous bias grad"))?;
        }
        Ok(())
    }
}
