use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Adam, Tape, Tensor, Var};
use crate::policy::{Heads, NavPolicy};
use crate::scalar::Scalar;
use crate::shield::CollisionPredictor;
use crate::train::augment::shift_current;
use crate::train::config::TrainConfig;
use crate::train::losses::{
    fp_loss, gaussian_entropy, ppo_clip_loss, rs_loss, squashed_log_prob, value_loss, FpWeights,
};
use crate::train::rollout::RolloutBatch;
use crate::train::twohot::TwoHotCoder;

/// The two optimizers of the update: the future-prediction pass owns the
/// encoder and predictor, the reinforcement pass owns encoder, core and
/// heads. Each keeps its own moment estimates.
#[derive(Clone, Debug)]
pub struct Optimizers<T> {
    pub rl: Adam<T>,
    pub fp: Adam<T>,
}

impl<T: Scalar> Optimizers<T> {
    pub fn new(policy: &NavPolicy<T>, cfg: &TrainConfig) -> Self {
        let mut fp_ids = policy.encoder_params();
        fp_ids.extend(policy.predictor_params());
        Optimizers {
            rl: Adam::new(policy.rl_params(), cfg.learning_rate, Some(cfg.max_grad_norm)),
            fp: Adam::new(fp_ids, cfg.learning_rate, Some(cfg.max_grad_norm)),
        }
    }
}

/// Averages of every loss term over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct UpdateTerms {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub rs_loss: f64,
    pub entropy: f64,
    pub fp_loss: f64,
    pub fp_reward: f64,
    pub fp_dynamics: f64,
    pub fp_termination: f64,
    pub qc_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub rl_grad_norm: f64,
    pub fp_grad_norm: f64,
}

fn finite<T: Scalar>(tape: &Tape<'_, T>, v: Var, term: &str) -> Result<f64> {
    let x = tape.item(v).as_f64();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(term.to_string()))
    }
}

fn rows<T: Scalar>(n: usize, cols: usize, values: impl Iterator<Item = f64>) -> Tensor<T> {
    Tensor::new(&[n, cols], values.map(T::lit).collect()).expect("row tensor shape")
}

/// Future-prediction pass over shuffled transitions. Returns the mean
/// of each term and of the pre-clip gradient norm.
pub fn fp_pass<T: Scalar, R: Rng + ?Sized>(
    policy: &mut NavPolicy<T>,
    opt: &mut Adam<T>,
    batch: &RolloutBatch<T>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateTerms> {
    let coder = TwoHotCoder::uniform(cfg.reward_bins, cfg.reward_min, cfg.reward_max)?;
    let weights = FpWeights {
        reward: cfg.lambda_r,
        dynamics: cfg.lambda_d,
        termination: cfg.lambda_t,
    };
    let mut order: Vec<usize> = (0..batch.size()).collect();
    order.shuffle(rng);
    let per = batch.size().div_ceil(cfg.minibatches);
    let mut acc = UpdateTerms::default();
    let mut count = 0.0;
    for mb in order.chunks(per) {
        let m = mb.len();
        let cur: Vec<&[T]> = mb.iter().map(|&i| batch.frames[i].as_slice()).collect();
        let next: Vec<&[T]> = mb.iter().map(|&i| batch.next_frame(i)).collect();
        let x = policy.batch_tensor(&cur)?;
        let xn = policy.batch_tensor(&next)?;
        let actions = rows::<T>(m, 2, mb.iter().flat_map(|&i| batch.actions[i]));
        let two_hot = rows::<T>(m, coder.len(), mb.iter().flat_map(|&i| coder.encode(batch.rewards[i])));
        let done = rows::<T>(m, 1, mb.iter().map(|&i| batch.dones[i] as u8 as f64));

        let grads = {
            let mut tape = Tape::new(&policy.store);
            let x = tape.constant(x);
            let h = policy.encode(&mut tape, x);
            let xn = tape.constant(xn);
            let hn = policy.encode(&mut tape, xn);
            let target = tape.detach(hn);
            let a = tape.constant(actions);
            let pred = policy.predict_transition(&mut tape, h, a);
            let r = tape.constant(two_hot);
            let d = tape.constant(done);
            let terms = fp_loss(&mut tape, &pred, r, target, d, &weights);
            acc.fp_reward += finite(&tape, terms.reward, "fp_reward")?;
            acc.fp_dynamics += finite(&tape, terms.dynamics, "fp_dynamics")?;
            acc.fp_termination += finite(&tape, terms.termination, "fp_termination")?;
            acc.fp_loss += finite(&tape, terms.total, "fp_loss")?;
            tape.backward(terms.total)?.into_params()
        };
        grads.check_finite(&policy.store)?;
        acc.fp_grad_norm += opt.step(&mut policy.store, &grads).as_f64();
        count += 1.0;
    }
    for v in [
        &mut acc.fp_loss,
        &mut acc.fp_reward,
        &mut acc.fp_dynamics,
        &mut acc.fp_termination,
        &mut acc.fp_grad_norm,
    ] {
        *v /= count;
    }
    Ok(acc)
}

/// Sequence chunks `(env, first step)` of length `chunk_len`.
pub fn sequence_chunks(num_envs: usize, len: usize, chunk_len: usize) -> Vec<(usize, usize)> {
    (0..num_envs)
        .flat_map(|i| (0..len).step_by(chunk_len).map(move |t| (i, t)))
        .collect()
}

/// Batch entries of a chunk set in time-major row order: row `s * k + j`
/// is step `s` of chunk `j`.
pub fn chunk_rows(chunks: &[(usize, usize)], num_envs: usize, chunk_len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(chunks.len() * chunk_len);
    for s in 0..chunk_len {
        for &(i, t0) in chunks {
            out.push((t0 + s) * num_envs + i);
        }
    }
    out
}

fn forward_chunks<'s, T: Scalar>(
    policy: &NavPolicy<T>,
    tape: &mut Tape<'s, T>,
    frames: Tensor<T>,
    batch: &RolloutBatch<T>,
    chunks: &[(usize, usize)],
    idx: &[usize],
) -> Result<Heads> {
    let k = chunks.len();
    let m = idx.len();
    let hd = policy.config.hidden_dim;
    let x = tape.constant(frames);
    let h = policy.encode(tape, x);
    let pa = tape.constant(rows(m, 2, idx.iter().flat_map(|&i| batch.prev_actions[i])));
    let z0: Vec<T> = chunks
        .iter()
        .flat_map(|&(i, t0)| batch.hidden_in[t0 * batch.num_envs + i].iter().copied())
        .collect();
    let z0 = Tensor::new(&[k, hd], z0)?;
    let starts: Vec<bool> = idx.iter().map(|&i| batch.starts[i]).collect();
    let z = policy.unroll(tape, h, pa, z0, &starts, k);
    Ok(policy.heads(tape, z))
}

/// PPO epochs over shuffled sequence chunks with the RandomShift term,
/// training `Q_c` once per minibatch.
pub fn ppo_pass<T: Scalar, R: Rng + ?Sized>(
    policy: &mut NavPolicy<T>,
    mut qc: Option<&mut CollisionPredictor<T>>,
    opt: &mut Adam<T>,
    batch: &RolloutBatch<T>,
    cfg: &TrainConfig,
    beta: f64,
    rng: &mut R,
) -> Result<UpdateTerms> {
    let mut chunks = sequence_chunks(batch.num_envs, batch.len, cfg.chunk_len);
    let per = chunks.len().div_ceil(cfg.minibatches);
    let (c, h, w) = (
        policy.config.image_channels,
        policy.config.image_height,
        policy.config.image_width,
    );
    let use_rs = cfg.use_rs && cfg.lambda_rs > 0.0;
    let mut acc = UpdateTerms::default();
    let mut count = 0.0f64;
    let mut qc_count = 0.0f64;
    for _ in 0..cfg.epochs {
        chunks.shuffle(rng);
        for mb in chunks.chunks(per) {
            let idx = chunk_rows(mb, batch.num_envs, cfg.chunk_len);
            let m = idx.len();
            let clean: Vec<&[T]> = idx.iter().map(|&i| batch.frames[i].as_slice()).collect();
            let x = policy.batch_tensor(&clean)?;
            let x_aug = if use_rs {
                let shifted: Vec<Vec<T>> = clean
                    .iter()
                    .map(|f| shift_current(f, c, h, w, cfg.shift_max, rng))
                    .collect();
                let refs: Vec<&[T]> = shifted.iter().map(|f| f.as_slice()).collect();
                Some(policy.batch_tensor(&refs)?)
            } else {
                None
            };
            let u: Vec<[f64; 2]> = idx.iter().map(|&i| batch.u[i]).collect();
            let old: Vec<f64> = idx.iter().map(|&i| batch.log_probs[i]).collect();
            let adv: Vec<f64> = idx.iter().map(|&i| batch.advantages[i]).collect();
            let ret: Vec<f64> = idx.iter().map(|&i| batch.returns[i]).collect();

            let grads = {
                let mut tape = Tape::new(&policy.store);
                let f = forward_chunks(policy, &mut tape, x, batch, mb, &idx)?;
                let lp = squashed_log_prob(&mut tape, &u, f.mean, f.log_std);
                let pl = ppo_clip_loss(&mut tape, lp, &old, &adv, cfg.clip_eps);
                let vl = value_loss(&mut tape, f.value, &ret);
                let vl_w = tape.scale(vl, T::lit(cfg.value_coef));
                let mut total = tape.add(pl, vl_w);
                acc.policy_loss += finite(&tape, pl, "policy_loss")?;
                acc.value_loss += finite(&tape, vl, "value_loss")?;
                if let Some(xa) = x_aug {
                    let fa = forward_chunks(policy, &mut tape, xa, batch, mb, &idx)?;
                    let rs = rs_loss(&mut tape, &f, &fa);
                    acc.rs_loss += finite(&tape, rs, "rs_loss")?;
                    let rs_w = tape.scale(rs, T::lit(cfg.lambda_rs));
                    total = tape.add(total, rs_w);
                }
                let ent = gaussian_entropy(&mut tape, f.log_std);
                acc.entropy += finite(&tape, ent, "entropy")?;
                if cfg.entropy_coef > 0.0 {
                    let e_w = tape.scale(ent, T::lit(-cfg.entropy_coef));
                    total = tape.add(total, e_w);
                }
                finite(&tape, total, "total_loss")?;
                let new = tape.value(lp).to_f64_vec();
                let mut kl = 0.0;
                let mut clipped = 0usize;
                for (n, o) in new.iter().zip(&old) {
                    kl += o - n;
                    if ((n - o).exp() - 1.0).abs() > cfg.clip_eps {
                        clipped += 1;
                    }
                }
                acc.approx_kl += kl / m as f64;
                acc.clip_fraction += clipped as f64 / m as f64;
                tape.backward(total)?.into_params()
            };
            grads.check_finite(&policy.store)?;
            acc.rl_grad_norm += opt.step(&mut policy.store, &grads).as_f64();
            count += 1.0;

            if let Some(q) = qc.as_deref_mut() {
                let samples = batch.collision_samples(&idx, beta);
                let l = q.train_step(&samples)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite("qc_loss".into()));
                }
                acc.qc_loss += l;
                qc_count += 1.0;
            }
        }
    }
    for v in [
        &mut acc.policy_loss,
        &mut acc.value_loss,
        &mut acc.rs_loss,
        &mut acc.entropy,
        &mut acc.approx_kl,
        &mut acc.clip_fraction,
        &mut acc.rl_grad_norm,
    ] {
        *v /= count.max(1.0);
    }
    acc.qc_loss /= qc_count.max(1.0);
    Ok(acc)
}

/// One full update on a batch whose advantages are already computed:
/// the future-prediction pass, then the PPO epochs.
pub fn ppo_update<T: Scalar, R: Rng + ?Sized>(
    policy: &mut NavPolicy<T>,
    qc: Option<&mut CollisionPredictor<T>>,
    opt: &mut Optimizers<T>,
    batch: &RolloutBatch<T>,
    cfg: &TrainConfig,
    beta: f64,
    rng: &mut R,
) -> Result<UpdateTerms> {
    if batch.advantages.len() != batch.size() || batch.returns.len() != batch.size() {
        return Err(Error::Shape("advantages must be computed before the update".into()));
    }
    let fp = if cfg.use_fp {
        fp_pass(policy, &mut opt.fp, batch, cfg, rng)?
    } else {
        UpdateTerms::default()
    };
    let mut terms = ppo_pass(policy, qc, &mut opt.rl, batch, cfg, beta, rng)?;
    terms.fp_loss = fp.fp_loss;
    terms.fp_reward = fp.fp_reward;
    terms.fp_dynamics = fp.fp_dynamics;
    terms.fp_termination = fp.fp_termination;
    terms.fp_grad_norm = fp.fp_grad_norm;
    Ok(terms)
}
