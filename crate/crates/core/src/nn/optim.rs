use std::collections::BTreeMap;

use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Adaptive-moment optimizer over a fixed subset of parameters, with optional
/// global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub max_grad_norm: Option<T>,
    params: Vec<ParamId>,
    steps: BTreeMap<ParamId, i32>,
    m: BTreeMap<ParamId, Vec<T>>,
    v: BTreeMap<ParamId, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: Vec<ParamId>, lr: f64, max_grad_norm: Option<f64>) -> Self {
        Adam {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-5),
            max_grad_norm: max_grad_norm.map(T::lit),
            params,
            steps: BTreeMap::new(),
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Applies one update to every managed parameter that has a gradient.
    /// Returns the gradient norm before clipping.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> T {
        let norm = grads.global_norm(Some(&self.params));
        let clip = match self.max_grad_norm {
            Some(max) if norm > max => max / (norm + T::lit(1e-6)),
            _ => T::one(),
        };
        for &id in &self.params {
            let Some(g) = grads.get(id) else { continue };
            let n = g.numel();
            let t = {
                let s = self.steps.entry(id).or_insert(0);
                *s += 1;
                *s
            };
            let m = self.m.entry(id).or_insert_with(|| vec![T::zero(); n]);
            let v = self.v.entry(id).or_insert_with(|| vec![T::zero(); n]);
            let bc1 = T::one() - self.beta1.powi(t);
            let bc2 = T::one() - self.beta2.powi(t);
            let p = store.get_mut(id).data_mut();
            for i in 0..n {
                let gi = g.data()[i] * clip;
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        norm
    }
}
