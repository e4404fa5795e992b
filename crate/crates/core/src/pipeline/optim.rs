//! Decoupled-weight-decay adaptive moment optimizer and the warmup+cosine
//! learning-rate schedule.

use std::collections::BTreeMap;

use crate::array::Array;
use crate::model::WeightStore;

pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: BTreeMap<String, u64>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> AdamW {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter present in `grads`. Parameters
    /// without a gradient this step (untouched subgraphs) are left bitwise
    /// unchanged — no moment update and no decay — so unused groups stay at
    /// their initialization. Frozen parameters are never updated. Moment
    /// timesteps are tracked per parameter so bias correction stays exact
    /// for late-appearing gradients.
    pub fn step(&mut self, store: &mut WeightStore, grads: &BTreeMap<String, Array>, lr: f64) {
        for (name, grad) in grads {
            let param = match store.get(name) {
                Some(p) if !p.frozen => p.value.clone(),
                _ => continue,
            };
            let n = param.len();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let t = self.t.entry(name.clone()).or_insert(0);
            *t += 1;
            let bc1 = 1.0 - self.beta1.powi(*t as i32);
            let bc2 = 1.0 - self.beta2.powi(*t as i32);
            let g = grad.data();
            let mut out = param.data().to_vec();
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                out[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * out[i]);
            }
            store.set_value(name, Array::new(param.shape(), out));
        }
    }
}

/// Linear warmup to `lr`, then cosine decay to zero over the remaining
/// steps. `step` counts from 0.
pub fn lr_at(step: usize, total: usize, lr: f64, warmup_frac: f64) -> f64 {
    assert!(total > 0, "lr_at: empty schedule");
    let warmup = ((total as f64) * warmup_frac).floor() as usize;
    if step < warmup {
        return lr * (step + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let progress = (step - warmup) as f64 / span;
    lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, ModelConfig};

    #[test]
    fn schedule_warms_up_then_decays_to_zero() {
        let lr = 1e-3;
        let vals: Vec<f64> = (0..100).map(|t| lr_at(t, 100, lr, 0.1)).collect();
        for t in 0..9 {
            assert!(vals[t + 1] > vals[t], "warmup not increasing at {t}");
        }
        assert_eq!(vals[9], lr);
        for t in 10..99 {
            assert!(vals[t + 1] < vals[t], "cosine not decreasing at {t}");
        }
        assert!(vals[99] < 0.01 * lr);
        assert!(lr_at(0, 100, lr, 0.0) == lr, "no warmup starts at peak");
    }

    #[test]
    fn step_moves_only_gradated_trainable_parameters() {
        let cfg = ModelConfig::default();
        let mut store = init_weights(&cfg, 0);
        store.freeze("enc.c2.w");
        let before_c1 = store.value("enc.c1.w").clone();
        let before_c2 = store.value("enc.c2.w").clone();
        let before_c3 = store.value("enc.c3.w").clone();

        let mut grads = BTreeMap::new();
        let ones = Array::full(store.value("enc.c1.w").shape(), 1.0);
        grads.insert("enc.c1.w".to_string(), ones.clone());
        grads.insert("enc.c2.w".to_string(), Array::full(store.value("enc.c2.w").shape(), 1.0));

        let mut opt = AdamW::new(0.0);
        opt.step(&mut store, &grads, 1e-2);
        assert_ne!(store.value("enc.c1.w"), &before_c1);
        assert_eq!(store.value("enc.c2.w"), &before_c2, "frozen parameter moved");
        assert_eq!(store.value("enc.c3.w"), &before_c3, "gradient-free parameter moved");

        // With unit gradients the very first Adam update is exactly −lr
        // per coordinate (m̂/√v̂ = 1), up to the eps guard.
        let after = store.value("enc.c1.w");
        for (a, b) in before_c1.data().iter().zip(after.data()) {
            assert!((a - b - 1e-2).abs() < 1e-9);
        }
    }

    #[test]
    fn decay_shrinks_parameters_without_gradient_signal() {
        let cfg = ModelConfig::default();
        let mut store = init_weights(&cfg, 1);
        let before = store.value("enc.c1.w").clone();
        let mut grads = BTreeMap::new();
        grads.insert("enc.c1.w".to_string(), Array::zeros(before.shape()));
        let mut opt = AdamW::new(0.1);
        opt.step(&mut store, &grads, 1e-1);
        let after = store.value("enc.c1.w");
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((b - a * (1.0 - 1e-1 * 0.1)).abs() < 1e-12);
        }
    }
}
