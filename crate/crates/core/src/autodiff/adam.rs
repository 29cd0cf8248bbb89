use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay, applied to the weights directly rather than
    /// folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0005,
        }
    }
}

/// Moment estimates for every parameter of one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |p: &super::Parameter| Tensor::zeros(p.value.rows(), p.value.cols());
        Self {
            config,
            first: store.iter().map(|(_, p)| zeros(p)).collect(),
            second: store.iter().map(|(_, p)| zeros(p)).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update using the configured learning rate.
    pub fn step(&mut self, store: &mut ParamStore) {
        let lr = self.config.learning_rate;
        self.step_with_lr(store, lr);
    }

    /// One update with an explicit learning rate (for schedules). Gradients are
    /// zeroed afterwards.
    pub fn step_with_lr(&mut self, store: &mut ParamStore, lr: f64) {
        assert_eq!(
            self.first.len(),
            store.len(),
            "optimizer state built for a different store"
        );
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);

        for (k, p) in store.params_mut().iter_mut().enumerate() {
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for idx in 0..w.len() {
                m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
                v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
                let m_hat = m[idx] / bias1;
                let v_hat = v[idx] / bias2;
                w[idx] -= lr * weight_decay * w[idx];
                w[idx] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            p.grad.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn quadratic_grad(store: &mut ParamStore) -> f64 {
        let id = store.id("x").unwrap();
        let mut tape = Tape::new();
        let x = tape.param(store, id);
        let sq = tape.square(x).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward_into(loss, store).unwrap();
        tape.value(loss).item().unwrap()
    }

    #[test]
    fn one_step_descends() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(1.0)).unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::default());
        quadratic_grad(&mut store);
        adam.step(&mut store);
        let x = store.by_name("x").unwrap().value.data()[0];
        assert!(x < 1.0);
        assert_eq!(store.by_name("x").unwrap().grad.data(), &[0.0]);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::row_vector(&[0.3, -2.0])).unwrap();
        let mut adam = AdamState::new(
            &store,
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        adam.step(&mut store);
        assert_eq!(store.by_name("x").unwrap().value.data(), &[0.3, -2.0]);
    }

    #[test]
    fn converges_on_seeded_quadratic() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::row_vector(&[0.8, -0.6, 0.25])).unwrap();
        let mut adam = AdamState::new(
            &store,
            AdamConfig {
                learning_rate: 0.05,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        let initial = quadratic_grad(&mut store);
        store.zero_grad();
        let mut last = initial;
        for _ in 0..200 {
            last = quadratic_grad(&mut store);
            adam.step(&mut store);
        }
        assert!(last < 1e-3 * initial, "loss {last} vs initial {initial}");
    }
}
