use std::collections::BTreeMap;

use crate::{GradStore, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    step: u64,
    first: BTreeMap<String, Tensor<F>>,
    second: BTreeMap<String, Tensor<F>>,
}

impl<F: Real> AdamW<F> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &GradStore<F>) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (F::from_f64(c.beta1), F::from_f64(c.beta2));
        let lr = F::from_f64(c.lr);
        let decay = F::from_f64(1.0 - c.lr * c.weight_decay);
        let (inv_bc1, inv_bc2) = (F::from_f64(1.0 / bc1), F::from_f64(1.0 / bc2));
        let eps = F::from_f64(c.eps);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = b1 * md[i] + (F::one() - b1) * gi;
                vd[i] = b2 * vd[i] + (F::one() - b2) * gi * gi;
                let mhat = md[i] * inv_bc1;
                let vhat = vd[i] * inv_bc2;
                pd[i] = pd[i] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment tensors, for checkpointing: `(name, first, second)`.
    pub fn state(&self) -> impl Iterator<Item = (&str, &Tensor<F>, &Tensor<F>)> {
        self.first
            .iter()
            .map(|(k, m)| (k.as_str(), m, &self.second[k]))
    }

    pub fn restore(
        config: AdamWConfig,
        step: u64,
        moments: impl IntoIterator<Item = (String, Tensor<F>, Tensor<F>)>,
    ) -> Self {
        let mut opt = Self::new(config);
        opt.step = step;
        for (name, m, v) in moments {
            opt.first.insert(name.clone(), m);
            opt.second.insert(name, v);
        }
        opt
    }
}
