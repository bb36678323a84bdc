//! Loss terms built on the tape. Every function returns a scalar node
//! averaged over rows.

use crate::nn::{Tape, Tensor, Var};
use crate::policy::distribution::{log_one_minus_tanh_sq, HALF_LOG_2PI};
use crate::policy::Heads;
use crate::scalar::Scalar;

/// Row-wise log-density `[n, 1]` of stored pre-squash samples `u` under the
/// squashed Gaussian `(mean, log_std)`.
pub fn squashed_log_prob<T: Scalar>(tape: &mut Tape<'_, T>, u: &[[f64; 2]], mean: Var, log_std: Var) -> Var {
    let n = u.len();
    let uv = tape.constant(Tensor::new(&[n, 2], u.iter().flat_map(|r| r.map(T::lit)).collect()).expect("u shape"));
    let diff = tape.sub(uv, mean);
    let neg_ls = tape.neg(log_std);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.square(z);
    let half = tape.scale(z2, T::lit(-0.5));
    let per = tape.sub(half, log_std);
    let corr: Vec<T> = u
        .iter()
        .flat_map(|r| r.map(|x| T::lit(-HALF_LOG_2PI - log_one_minus_tanh_sq(x))))
        .collect();
    let corr = tape.constant(Tensor::new(&[n, 2], corr).expect("corr shape"));
    let per = tape.add(per, corr);
    tape.row_sum(per)
}

/// Negated clipped surrogate: `-mean(min(r A, clip(r, 1-eps, 1+eps) A))`
/// with `r = exp(logp - logp_old)`.
pub fn ppo_clip_loss<T: Scalar>(tape: &mut Tape<'_, T>, log_prob: Var, old_log_prob: &[f64], adv: &[f64], eps: f64) -> Var {
    let n = adv.len();
    let old = tape.constant(Tensor::new(&[n, 1], old_log_prob.iter().map(|&v| T::lit(v)).collect()).expect("shape"));
    let a = tape.constant(Tensor::new(&[n, 1], adv.iter().map(|&v| T::lit(v)).collect()).expect("shape"));
    let d = tape.sub(log_prob, old);
    let ratio = tape.exp(d);
    let surr1 = tape.mul(ratio, a);
    let clipped = tape.clamp(ratio, T::lit(1.0 - eps), T::lit(1.0 + eps));
    let surr2 = tape.mul(clipped, a);
    let m = tape.minimum(surr1, surr2);
    let mean = tape.mean(m);
    tape.neg(mean)
}

/// Per-sample clipped surrogate, for reference checks.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// `mean(0.5 (v - target)^2)`.
pub fn value_loss<T: Scalar>(tape: &mut Tape<'_, T>, value: Var, targets: &[f64]) -> Var {
    let n = targets.len();
    let t = tape.constant(Tensor::new(&[n, 1], targets.iter().map(|&v| T::lit(v)).collect()).expect("shape"));
    let d = tape.sub(value, t);
    let sq = tape.square(d);
    let m = tape.mean(sq);
    tape.scale(m, T::lit(0.5))
}

/// `mean((a - b)^2)` over all elements.
pub fn mse<T: Scalar>(tape: &mut Tape<'_, T>, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let sq = tape.square(d);
    tape.mean(sq)
}

/// Closed-form `KL(p || q)` of diagonal Gaussians, summed over action
/// dimensions and averaged over rows.
pub fn gaussian_kl<T: Scalar>(tape: &mut Tape<'_, T>, mean_p: Var, log_std_p: Var, mean_q: Var, log_std_q: Var) -> Var {
    let n = tape.shape(mean_p)[0] as f64;
    let two_p = tape.scale(log_std_p, T::lit(2.0));
    let var_p = tape.exp(two_p);
    let d = tape.sub(mean_p, mean_q);
    let d2 = tape.square(d);
    let num = tape.add(var_p, d2);
    let neg_two_q = tape.scale(log_std_q, T::lit(-2.0));
    let inv_var_q = tape.exp(neg_two_q);
    let ratio = tape.mul(num, inv_var_q);
    let half_ratio = tape.scale(ratio, T::lit(0.5));
    let ls_diff = tape.sub(log_std_q, log_std_p);
    let kl = tape.add(ls_diff, half_ratio);
    let kl = tape.add_scalar(kl, T::lit(-0.5));
    let total = tape.sum(kl);
    tape.scale(total, T::lit(1.0 / n))
}

/// RandomShift consistency: the clean branch is detached, so gradients
/// reach parameters only through the augmented branch.
pub fn rs_loss<T: Scalar>(tape: &mut Tape<'_, T>, clean: &Heads, augmented: &Heads) -> Var {
    let mp = tape.detach(clean.mean);
    let lp = tape.detach(clean.log_std);
    let vp = tape.detach(clean.value);
    let kl = gaussian_kl(tape, mp, lp, augmented.mean, augmented.log_std);
    let v = mse(tape, vp, augmented.value);
    tape.add(kl, v)
}

/// `-mean(sum_k y_k log softmax(x)_k)`.
pub fn soft_cross_entropy<T: Scalar>(tape: &mut Tape<'_, T>, logits: Var, targets: Var) -> Var {
    let n = tape.shape(logits)[0] as f64;
    let ls = tape.log_softmax(logits);
    let prod = tape.mul(targets, ls);
    let total = tape.sum(prod);
    tape.scale(total, T::lit(-1.0 / n))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpWeights {
    pub reward: f64,
    pub dynamics: f64,
    pub termination: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FpTerms {
    pub total: Var,
    pub reward: Var,
    pub dynamics: Var,
    pub termination: Var,
}

/// Future-prediction loss. `next_latent_target` must already be detached.
pub fn fp_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    pred: &crate::policy::Prediction,
    reward_target: Var,
    next_latent_target: Var,
    done_target: Var,
    w: &FpWeights,
) -> FpTerms {
    let reward = soft_cross_entropy(tape, pred.reward_logits, reward_target);
    let dynamics = mse(tape, pred.next_latent, next_latent_target);
    let p_done = tape.sigmoid(pred.done_logit);
    let termination = mse(tape, p_done, done_target);
    let a = tape.scale(reward, T::lit(w.reward));
    let b = tape.scale(dynamics, T::lit(w.dynamics));
    let c = tape.scale(termination, T::lit(w.termination));
    let ab = tape.add(a, b);
    let total = tape.add(ab, c);
    FpTerms {
        total,
        reward,
        dynamics,
        termination,
    }
}

/// Mean differential entropy of the pre-squash Gaussian.
pub fn gaussian_entropy<T: Scalar>(tape: &mut Tape<'_, T>, log_std: Var) -> Var {
    let n = tape.shape(log_std)[0] as f64;
    let e = tape.add_scalar(log_std, T::lit(0.5 + HALF_LOG_2PI));
    let s = tape.sum(e);
    tape.scale(s, T::lit(1.0 / n))
}
