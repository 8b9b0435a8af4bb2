//! Named parameters, Adam, and a finite-difference gradient checker.

use crate::scalar::Real;
use crate::tape::{Gradients, Graph, Var};
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("parameter `{0}` already registered")]
    Duplicate(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("adam_step called with no accumulated gradients")]
    MissingGrads,
    #[error("non-finite value in parameter or gradient `{0}`")]
    NonFinite(String),
}

struct Param<T> {
    value: Tensor<T>,
    grad: Tensor<T>,
    m: Tensor<T>,
    v: Tensor<T>,
    trainable: bool,
    lr_scale: T,
}

/// Adam hyperparameters; defaults are the standard (0.9, 0.999, 1e-8).
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamConfig<T> {
    pub fn with_lr(lr: T) -> Self {
        AdamConfig {
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
        }
    }
}

/// Named trainable tensors with per-parameter Adam state.
///
/// Names are unique and shapes immutable after registration. Iteration is
/// name-ordered, so update order (and therefore floating-point results) is
/// independent of registration order.
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
    grads_accumulated: bool,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            step: 0,
            grads_accumulated: false,
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor<T>) -> Result<(), OptimError> {
        if self.params.contains_key(name) {
            return Err(OptimError::Duplicate(name.to_string()));
        }
        let (r, c) = value.shape();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(r, c),
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
                trainable: true,
                lr_scale: T::one(),
            },
        );
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Tensor<T> {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
            .value
    }

    pub fn grad(&self, name: &str) -> &Tensor<T> {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
            .grad
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<(), OptimError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| OptimError::Unknown(name.to_string()))?;
        assert_eq!(
            p.value.shape(),
            value.shape(),
            "parameter shapes are immutable"
        );
        p.value = value;
        Ok(())
    }

    /// Mark every parameter whose name starts with `prefix` (non-)trainable.
    /// Frozen parameters keep their values through `adam_step`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) {
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.trainable = trainable;
            }
        }
    }

    /// Scale the learning rate of every parameter under `prefix`. Adam
    /// steps are gradient-scale invariant, so damping a component has to
    /// happen here rather than through a loss weight.
    pub fn set_lr_scale_prefix(&mut self, prefix: &str, scale: T) {
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.lr_scale = scale;
            }
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Add a backward pass's gradients into the store.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (name, g) in &grads.dense {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("unknown param `{name}`"));
            p.grad.add_assign(g);
        }
        for (name, rows, g) in &grads.rows {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("unknown param `{name}`"));
            for (i, &r) in rows.iter().enumerate() {
                p.grad.add_assign_row(r, g.row_slice(i));
            }
        }
        self.grads_accumulated = true;
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
        }
        self.grads_accumulated = false;
    }

    /// Bias-corrected Adam update over all trainable parameters; gradients
    /// are zeroed afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig<T>) -> Result<(), OptimError> {
        if !self.grads_accumulated {
            return Err(OptimError::MissingGrads);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - cfg.beta1.powi(t);
        let bc2 = T::one() - cfg.beta2.powi(t);
        for (name, p) in self.params.iter_mut() {
            if !p.trainable {
                p.grad.fill(T::zero());
                continue;
            }
            for i in 0..p.value.len() {
                let g = p.grad.data()[i];
                let m = cfg.beta1 * p.m.data()[i] + (T::one() - cfg.beta1) * g;
                let v = cfg.beta2 * p.v.data()[i] + (T::one() - cfg.beta2) * g * g;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                let upd = cfg.lr * p.lr_scale * m_hat / (v_hat.sqrt() + cfg.eps);
                p.value.data_mut()[i] = p.value.data()[i] - upd;
                p.grad.data_mut()[i] = T::zero();
            }
            if !p.value.all_finite() {
                return Err(OptimError::NonFinite(name.clone()));
            }
        }
        self.grads_accumulated = false;
        Ok(())
    }

    /// Snapshot of all parameter values (used for best-epoch restore).
    pub fn snapshot_values(&self) -> Vec<(String, Tensor<T>)> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    pub fn restore_values(&mut self, snapshot: &[(String, Tensor<T>)]) {
        for (name, value) in snapshot {
            self.set_value(name, value.clone())
                .expect("snapshot key must exist");
        }
    }
}

/// Convenience: insert a parameter leaf for `name` into a graph.
pub fn leaf<T: Real>(g: &mut Graph<T>, store: &ParamStore<T>, name: &str) -> Var {
    g.param_leaf(name, store.value(name))
}

/// Max relative error between analytic and central finite-difference
/// gradients of a scalar-valued builder, over every trainable parameter
/// element: `|analytic - fd| / max(1, |analytic|)`.
///
/// The builder must be deterministic; it is re-run twice per element.
pub fn grad_check<T, F>(store: &mut ParamStore<T>, build: F, h: T) -> T
where
    T: Real,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Var,
{
    let eval = |store: &ParamStore<T>| -> T {
        let mut g = Graph::new();
        let out = build(&mut g, store);
        assert_eq!(g.value(out).len(), 1, "grad_check needs a scalar output");
        g.value(out).item()
    };

    // Analytic pass.
    let mut g = Graph::new();
    let out = build(&mut g, store);
    let grads = g.backward(out);
    let mut analytic: BTreeMap<String, Tensor<T>> = BTreeMap::new();
    for (name, grad) in &grads.dense {
        let (r, c) = store.value(name).shape();
        analytic
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(r, c))
            .add_assign(grad);
    }
    for (name, rows, grad) in &grads.rows {
        let (r, c) = store.value(name).shape();
        let entry = analytic
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(r, c));
        for (i, &row) in rows.iter().enumerate() {
            entry.add_assign_row(row, grad.row_slice(i));
        }
    }

    let names: Vec<String> = analytic.keys().cloned().collect();
    let two_h = h + h;
    let mut worst = T::zero();
    for name in names {
        for i in 0..store.value(&name).len() {
            let orig = store.value(&name).data()[i];

            let mut bumped = store.value(&name).clone();
            bumped.data_mut()[i] = orig + h;
            store.set_value(&name, bumped).unwrap();
            let up = eval(store);

            let mut bumped = store.value(&name).clone();
            bumped.data_mut()[i] = orig - h;
            store.set_value(&name, bumped).unwrap();
            let down = eval(store);

            let mut restored = store.value(&name).clone();
            restored.data_mut()[i] = orig;
            store.set_value(&name, restored).unwrap();

            let fd = (up - down) / two_h;
            let an = analytic[&name].data()[i];
            assert!(
                fd.is_finite() && an.is_finite(),
                "non-finite gradient in `{name}`"
            );
            let rel = (an - fd).abs() / T::one().max(an.abs());
            worst = worst.max(rel);
        }
    }
    worst
}
