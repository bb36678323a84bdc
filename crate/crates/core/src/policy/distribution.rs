//! Tanh-squashed diagonal Gaussian over normalized actions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

pub fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

/// Density of `a = tanh(u)` by change of variables, evaluated at the
/// pre-squash sample `u`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    gaussian_log_prob(u, mean, log_std) - u.iter().map(|&x| log_one_minus_tanh_sq(x)).sum::<f64>()
}

/// Draws `u ~ N(mean, exp(log_std)^2)`; returns `u` and `tanh(u)`.
pub fn sample_squashed<R: Rng + ?Sized>(mean: &[f64; 2], log_std: &[f64; 2], rng: &mut R) -> ([f64; 2], [f64; 2]) {
    let mut u = [0.0; 2];
    for i in 0..2 {
        let eps: f64 = StandardNormal.sample(rng);
        u[i] = mean[i] + log_std[i].exp() * eps;
    }
    (u, u.map(f64::tanh))
}

/// `KL(p || q)` between diagonal Gaussians.
pub fn gaussian_kl(mean_p: &[f64], log_std_p: &[f64], mean_q: &[f64], log_std_q: &[f64]) -> f64 {
    (0..mean_p.len())
        .map(|i| {
            let (sp, sq) = (log_std_p[i].exp(), log_std_q[i].exp());
            let d = mean_p[i] - mean_q[i];
            log_std_q[i] - log_std_p[i] + (sp * sp + d * d) / (2.0 * sq * sq) - 0.5
        })
        .sum()
}
