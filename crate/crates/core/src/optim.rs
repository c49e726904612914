//! Named parameter storage and the Adam update.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Adam hyperparameters. Defaults: lr 2e-4, beta1 0.5, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// One trainable tensor with its first/second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// Trainable tensors keyed by layer path, plus the shared step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

/// Gradients keyed identically to a [`ParamStore`].
pub type GradStore = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let m = Tensor::zeros(&value.dims);
        let v = Tensor::zeros(&value.dims);
        self.entries.insert(name.into(), ParamEntry { value, m, v });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::InvalidState(format!("unknown parameter {name}")))
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Zero-filled gradient store with matching keys.
    pub fn zero_grads(&self) -> GradStore {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), Tensor::zeros(&e.value.dims)))
            .collect()
    }
}

/// Adds `grad` into the named slot of `grads`.
pub fn accumulate_grad(grads: &mut GradStore, name: &str, grad: &Tensor) {
    match grads.get_mut(name) {
        Some(t) => {
            debug_assert_eq!(t.dims, grad.dims, "gradient dims for {name}");
            for (a, b) in t.data.iter_mut().zip(grad.data.iter()) {
                *a += b;
            }
        }
        None => {
            grads.insert(name.to_string(), grad.clone());
        }
    }
}

pub fn scale_grads(grads: &mut GradStore, factor: f64) {
    for t in grads.values_mut() {
        for v in t.data.iter_mut() {
            *v *= factor;
        }
    }
}

/// One Adam update with bias correction over every parameter.
///
/// `grads` must carry exactly the same keys as `params`.
pub fn adam_step(params: &mut ParamStore, grads: &GradStore, hyper: &AdamHyper) -> Result<()> {
    if grads.len() != params.entries.len()
        || !grads.keys().zip(params.entries.keys()).all(|(a, b)| a == b)
    {
        let missing: Vec<_> = params
            .entries
            .keys()
            .filter(|k| !grads.contains_key(*k))
            .take(3)
            .cloned()
            .collect();
        let extra: Vec<_> = grads
            .keys()
            .filter(|k| !params.entries.contains_key(*k))
            .take(3)
            .cloned()
            .collect();
        return Err(Error::invalid_argument(format!(
            "gradient keys do not match parameters (missing: {missing:?}, extra: {extra:?})"
        )));
    }
    params.step += 1;
    let t = params.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for (name, entry) in params.entries.iter_mut() {
        let g = &grads[name];
        if g.dims != entry.value.dims {
            return Err(Error::invalid_argument(format!(
                "gradient dims {:?} for {name} do not match parameter dims {:?}",
                g.dims, entry.value.dims
            )));
        }
        for i in 0..entry.value.data.len() {
            let gv = g.data[i];
            entry.m.data[i] = hyper.beta1 * entry.m.data[i] + (1.0 - hyper.beta1) * gv;
            entry.v.data[i] = hyper.beta2 * entry.v.data[i] + (1.0 - hyper.beta2) * gv * gv;
            let m_hat = entry.m.data[i] / bias1;
            let v_hat = entry.v.data[i] / bias2;
            entry.value.data[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::from_data(&[1], vec![value]).unwrap());
        store
    }

    fn scalar_grads(g: f64) -> GradStore {
        let mut grads = GradStore::new();
        grads.insert("p".to_string(), Tensor::from_data(&[1], vec![g]).unwrap());
        grads
    }

    /// Scalar reference implementation of Adam with bias correction.
    struct AdamOracle {
        m: f64,
        v: f64,
        t: i32,
    }

    impl AdamOracle {
        fn new() -> Self {
            AdamOracle { m: 0.0, v: 0.0, t: 0 }
        }

        fn step(&mut self, p: f64, g: f64, h: &AdamHyper) -> f64 {
            self.t += 1;
            self.m = h.beta1 * self.m + (1.0 - h.beta1) * g;
            self.v = h.beta2 * self.v + (1.0 - h.beta2) * g * g;
            let m_hat = self.m / (1.0 - h.beta1.powi(self.t));
            let v_hat = self.v / (1.0 - h.beta2.powi(self.t));
            p - h.lr * m_hat / (v_hat.sqrt() + h.eps)
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = scalar_store(0.75);
        adam_step(&mut store, &scalar_grads(0.0), &AdamHyper::default()).unwrap();
        assert_eq!(store.get("p").unwrap().data[0], 0.75);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn single_step_matches_oracle() {
        let h = AdamHyper::default();
        let mut store = scalar_store(1.0);
        adam_step(&mut store, &scalar_grads(0.3), &h).unwrap();
        let mut oracle = AdamOracle::new();
        let want = oracle.step(1.0, 0.3, &h);
        let got = store.get("p").unwrap().data[0];
        assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        // first step moves against the gradient by roughly lr
        assert!(got < 1.0);
    }

    #[test]
    fn alternating_gradients_match_oracle_moments() {
        let h = AdamHyper::default();
        let mut store = scalar_store(0.2);
        let mut oracle = AdamOracle::new();
        let mut p = 0.2;
        for g in [0.5, -0.5] {
            adam_step(&mut store, &scalar_grads(g), &h).unwrap();
            p = oracle.step(p, g, &h);
        }
        let entry = store.entry("p").unwrap();
        assert!((entry.value.data[0] - p).abs() < 1e-12);
        assert!((entry.m.data[0] - oracle.m).abs() < 1e-12);
        assert!((entry.v.data[0] - oracle.v).abs() < 1e-12);
    }

    #[test]
    fn key_mismatch_is_rejected() {
        let mut store = scalar_store(0.0);
        let mut grads = GradStore::new();
        grads.insert("q".to_string(), Tensor::zeros(&[1]));
        assert!(adam_step(&mut store, &grads, &AdamHyper::default()).is_err());
        // extra key on top of the right one also fails
        let mut grads = scalar_grads(0.1);
        grads.insert("q".to_string(), Tensor::zeros(&[1]));
        assert!(adam_step(&mut store, &grads, &AdamHyper::default()).is_err());
    }
}
