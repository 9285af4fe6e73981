//! Bias-corrected Adam.

use super::layers::ParamStore;
use super::{NnError, Scalar};
use ndarray::ArrayD;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

pub struct Adam<F: Scalar> {
    pub cfg: AdamConfig,
    step: u64,
    m: HashMap<String, ArrayD<F>>,
    v: HashMap<String, ArrayD<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter that has a gradient.
    pub fn step(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &HashMap<String, ArrayD<F>>,
    ) -> Result<(), NnError> {
        self.step += 1;
        let t = self.step;
        let b1 = F::cast_from(self.cfg.beta1);
        let b2 = F::cast_from(self.cfg.beta2);
        let lr = F::cast_from(self.cfg.lr);
        let eps = F::cast_from(self.cfg.eps);
        let corr1 = F::cast_from(1.0 - self.cfg.beta1.powi(t as i32));
        let corr2 = F::cast_from(1.0 - self.cfg.beta2.powi(t as i32));
        let mut names: Vec<&String> = grads.keys().collect();
        names.sort(); // deterministic update order
        for name in names {
            if !params.is_trainable(name) {
                continue;
            }
            let grad = &grads[name.as_str()];
            let value = params
                .get(name)
                .ok_or_else(|| NnError::MissingParam(name.clone()))?;
            if value.shape() != grad.shape() {
                return Err(NnError::ParamShape {
                    name: name.clone(),
                    expected: value.shape().to_vec(),
                    got: grad.shape().to_vec(),
                });
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            ndarray::Zip::from(&mut *m).and(grad).for_each(|mi, &gi| {
                *mi = b1 * *mi + (F::one() - b1) * gi;
            });
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            ndarray::Zip::from(&mut *v).and(grad).for_each(|vi, &gi| {
                *vi = b2 * *vi + (F::one() - b2) * gi * gi;
            });
            let value = params.get_mut(name).unwrap();
            ndarray::Zip::from(value)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &mi, &vi| {
                    let mhat = mi / corr1;
                    let vhat = vi / corr2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
