use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Slot {
    value: Tensor,
    m: Tensor,
    v: Tensor,
    step: u64,
    frozen: bool,
}

/// Named trainable tensors with their adaptive-moment state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
}

/// Tape handles for the parameters of a [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter `{name}` is not bound on this tape"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.slots.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        let (r, c) = value.shape();
        self.slots.insert(
            name,
            Slot {
                value,
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
                step: 0,
                frozen: false,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn value(&self, name: &str) -> &Tensor {
        match self.get(name) {
            Some(t) => t,
            None => panic!("unknown parameter `{name}`"),
        }
    }

    /// Replaces a parameter value, keeping its optimizer state.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if slot.value.shape() != value.shape() {
            return Err(Error::shape("ParamStore::set", format!("{name}: {:?} vs {:?}", slot.value.shape(), value.shape())));
        }
        slot.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Excludes every parameter whose name starts with `prefix` from updates.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        for (name, slot) in self.slots.iter_mut() {
            if name.starts_with(prefix) {
                slot.frozen = true;
            }
        }
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.slots.get(name).is_some_and(|s| s.frozen)
    }

    pub fn step_count(&self, name: &str) -> u64 {
        self.slots.get(name).map_or(0, |s| s.step)
    }

    /// Records each parameter on `tape` as a named leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .slots
            .iter()
            .map(|(name, slot)| (name.clone(), tape.param(name.clone(), slot.value.clone())))
            .collect();
        Bound { vars }
    }

    /// Like [`ParamStore::bind`] but as constants, for evaluation passes.
    pub fn bind_constant(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .slots
            .iter()
            .map(|(name, slot)| (name.clone(), tape.constant(slot.value.clone())))
            .collect();
        Bound { vars }
    }
}

/// One bias-corrected adaptive-moment step with decoupled weight decay.
///
/// Decay multiplies the parameter by `1 - lr * wd` before the moment step.
/// A parameter absent from `grads` is stepped with a zero gradient; frozen
/// parameters are left untouched.
pub fn adam_update(store: &mut ParamStore, grads: &BTreeMap<String, Tensor>, cfg: &AdamConfig) -> Result<()> {
    for (name, slot) in store.slots.iter_mut() {
        if slot.frozen {
            continue;
        }
        let zero;
        let g = match grads.get(name) {
            Some(g) => {
                if g.shape() != slot.value.shape() {
                    return Err(Error::shape("adam_update", format!("{name}: gradient {:?} vs parameter {:?}", g.shape(), slot.value.shape())));
                }
                g
            }
            None => {
                zero = Tensor::zeros(slot.value.rows(), slot.value.cols());
                &zero
            }
        };
        slot.step += 1;
        let t = slot.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        let p = slot.value.data_mut();
        let m = slot.m.data_mut();
        let v = slot.v.data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            p[k] *= decay;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        slot.value.check_finite("adam_update")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(p)).unwrap();
        s
    }

    fn grads(g: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("p".to_string(), Tensor::scalar(g))])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = single(1.0);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
        adam_update(&mut s, &grads(1.0), &cfg).unwrap();
        // m̂ = v̂ = 1 after bias correction.
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.value("p").item() - expected).abs() < 1e-15);
        assert!((s.value("p").item() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut s = single(1.0);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
        adam_update(&mut s, &grads(0.0), &cfg).unwrap();
        assert_eq!(s.value("p").item(), 1.0);
    }

    #[test]
    fn decay_only_step() {
        let mut s = single(1.0);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.01, ..AdamConfig::default() };
        adam_update(&mut s, &BTreeMap::new(), &cfg).unwrap();
        assert!((s.value("p").item() - 0.999).abs() < 1e-15);
    }

    #[test]
    fn frozen_is_untouched() {
        let mut s = single(1.0);
        s.freeze_prefix("p");
        adam_update(&mut s, &grads(3.0), &AdamConfig::default()).unwrap();
        assert_eq!(s.value("p").item(), 1.0);
        assert_eq!(s.step_count("p"), 0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = single(1.0);
        assert!(s.insert("p", Tensor::scalar(2.0)).is_err());
    }
}
