#![allow(dead_code)]

use imagenav_core::nn::gradcheck::{compare, numeric_gradients, worst};
use imagenav_core::nn::{ParamId, ParamStore, Tape, Tensor, Var};
use imagenav_core::policy::{NavPolicy, PolicyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A policy small enough for finite differences over every parameter.
pub fn tiny_config() -> PolicyConfig {
    PolicyConfig {
        image_channels: 3,
        image_height: 4,
        image_width: 8,
        conv_channels: vec![4, 4],
        feature_dim: 8,
        hidden_dim: 6,
        predictor_hidden: 8,
        reward_bins: 5,
        log_std_init: -0.3,
        ..PolicyConfig::default()
    }
}

pub fn tiny_policy(seed: u64) -> NavPolicy<f64> {
    let mut p = NavPolicy::new(tiny_config(), seed).unwrap();
    // nonzero biases and a less trivial actor so no gradient vanishes by symmetry
    let mut r = rng(seed + 100);
    let ids: Vec<ParamId> = p.store.ids().collect();
    for id in ids {
        for v in p.store.get_mut(id).data_mut() {
            *v += r.random_range(-0.2..0.2);
        }
    }
    p
}

pub fn random_frames(policy: &NavPolicy<f64>, n: usize, r: &mut impl Rng) -> Tensor<f64> {
    let c = &policy.config;
    let data = (0..n * c.input_len()).map(|_| r.random_range(0.0..1.0)).collect();
    Tensor::new(&[n, c.input_channels(), c.image_height, c.image_width], data).unwrap()
}

pub fn random_rows(n: usize, cols: usize, lo: f64, hi: f64, r: &mut impl Rng) -> Tensor<f64> {
    Tensor::new(&[n, cols], (0..n * cols).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Worst per-parameter relative error between tape gradients and central
/// differences of the same loss.
pub fn grad_check<F>(store: &ParamStore<f64>, ids: &[ParamId], build: F) -> (String, f64)
where
    F: for<'a, 's> Fn(&'a mut Tape<'s, f64>) -> Var,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape);
        tape.backward(loss).unwrap().into_params()
    };
    let numeric = numeric_gradients(store, ids, 1e-6, |s| {
        let mut tape = Tape::new(s);
        let loss = build(&mut tape);
        tape.item(loss)
    });
    worst(&compare(store, &analytic, &numeric))
}

pub fn all_ids(store: &ParamStore<f64>) -> Vec<ParamId> {
    store.ids().collect()
}

/// Largest absolute numeric derivative over `ids`.
pub fn numeric_max_abs<F>(store: &ParamStore<f64>, ids: &[ParamId], mut f: F) -> f64
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let g = numeric_gradients(store, ids, 1e-6, &mut f);
    g.iter()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}
