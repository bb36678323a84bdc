mod common;

use common::*;
use imagenav_core::nn::{ParamStore, Tape, Tensor};
use imagenav_core::policy::Heads;
use imagenav_core::train::losses::{clipped_surrogate, fp_loss, rs_loss, FpWeights};
use imagenav_core::train::{
    compute_gae, ppo_update, random_shift, shift_current, training_worlds, Optimizers, RolloutCollector,
    TrainConfig, Trainer, TwoHotCoder,
};
use imagenav_core::sim::Image;
use proptest::prelude::*;
use rand::Rng;

/// `A_t = sum_k (gamma lambda)^k delta_{t+k}`, truncated at the first done.
fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                let next = if d[k] { 0.0 } else if k + 1 < n { v[k + 1] } else { boot };
                sum += w * (r[k] + g * next - v[k]);
                if d[k] {
                    break;
                }
                w *= g * l;
            }
            sum
        })
        .collect()
}

proptest! {
    #[test]
    fn gae_matches_the_direct_sum(
        steps in prop::collection::vec((-1.0f64..3.0, -2.0f64..2.0, prop::bool::weighted(0.1)), 1..64),
        boot in -2.0f64..2.0,
        g in 0.8f64..1.0,
        l in 0.0f64..1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, targets) = compute_gae(&r, &v, &d, boot, g, l);
        let oracle = brute_force_gae(&r, &v, &d, boot, g, l);
        for t in 0..r.len() {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-10);
            prop_assert!((targets[t] - (adv[t] + v[t])).abs() < 1e-12);
        }
    }
}

#[test]
fn gae_base_cases() {
    let (a, _) = compute_gae(&[1.5], &[0.4], &[true], 9.0, 0.99, 0.95);
    assert!((a[0] - 1.1).abs() < 1e-12);
    let (a, t) = compute_gae(&[0.0; 10], &[0.0; 10], &[false; 10], 0.0, 0.99, 0.95);
    assert!(a.iter().chain(&t).all(|&x| x == 0.0));
}

#[test]
fn two_hot_examples() {
    let c = TwoHotCoder::new(vec![0.0, 1.0]).unwrap();
    let e = c.encode(0.3);
    assert!((e[0] - 0.7).abs() < 1e-15 && (e[1] - 0.3).abs() < 1e-15);

    let c = TwoHotCoder::uniform(41, -1.0, 3.0).unwrap();
    let at_bin = c.encode(c.bins()[17]);
    assert_eq!(at_bin.iter().filter(|&&w| w != 0.0).count(), 1);
    assert_eq!(at_bin[17], 1.0);
    let mid = c.encode(0.5 * (c.bins()[4] + c.bins()[5]));
    assert!((mid[4] - 0.5).abs() < 1e-12 && (mid[5] - 0.5).abs() < 1e-12);
}

#[test]
fn two_hot_expectation_identity() {
    let c = TwoHotCoder::uniform(41, -1.0, 3.0).unwrap();
    let mut r = rng(1);
    for _ in 0..10_000 {
        let x = r.random_range(-3.0..5.0);
        let e = c.encode(x);
        assert!(e.iter().filter(|&&w| w != 0.0).count() <= 2);
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((c.expectation(&e) - x.clamp(-1.0, 3.0)).abs() < 1e-6);
    }
}

#[test]
fn clipped_surrogate_examples() {
    assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
    assert_eq!(clipped_surrogate(1.0, -0.4, 0.2), -0.4);
    assert!((clipped_surrogate(1.5, 2.0, 0.2) - 2.4).abs() < 1e-12);
    let grid = [0.3, 0.8, 1.0, 1.1, 1.5, 2.5];
    for &ratio in &grid {
        for &adv in &[-2.0, -0.5, 0.0, 0.5, 2.0] {
            for &eps in &[0.1, 0.2, 0.3] {
                let s = clipped_surrogate(ratio, adv, eps);
                assert!(s <= ratio * adv + 1e-15);
                assert!(s <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv + 1e-15);
            }
        }
    }
}

#[test]
fn shift_examples() {
    let mut r = rng(2);
    let img = Image {
        channels: 3,
        height: 16,
        width: 64,
        data: (0..3 * 16 * 64).map(|_| r.random_range(0.0..1.0)).collect(),
    };
    assert_eq!(random_shift(&img, 0, &mut r), img);
    for _ in 0..20 {
        let s = random_shift(&img, 4, &mut r);
        assert_eq!((s.channels, s.height, s.width, s.data.len()), (3, 16, 64, img.data.len()));
    }
    let flat = Image::filled(3, 16, 64, 0.42);
    assert_eq!(random_shift(&flat, 4, &mut r), flat);

    // the goal half of a stacked frame is never touched
    let frame: Vec<f32> = (0..6 * 16 * 64).map(|i| i as f32).collect();
    let out = shift_current(&frame, 3, 16, 64, 4, &mut r);
    assert_eq!(&out[3 * 16 * 64..], &frame[3 * 16 * 64..]);
}

#[test]
fn identity_augmentation_gives_zero_consistency_loss() {
    let p = tiny_policy(3);
    let mut r = rng(4);
    let x = random_frames(&p, 4, &mut r);
    let prev = random_rows(4, 2, -1.0, 1.0, &mut r);
    let same: Vec<f64> = {
        let c = &p.config;
        let per = c.input_len();
        (0..4)
            .flat_map(|i| shift_current(&x.data()[i * per..(i + 1) * per], c.image_channels, c.image_height, c.image_width, 0, &mut r))
            .collect()
    };
    let x_aug = Tensor::new(x.shape(), same).unwrap();
    let mut tape = Tape::new(&p.store);
    let heads = |tape: &mut Tape<'_, f64>, x: &Tensor<f64>| -> Heads {
        let xv = tape.constant(x.clone());
        let h = p.encode(tape, xv);
        let pa = tape.constant(prev.clone());
        let z0 = tape.constant(Tensor::zeros(&[4, p.config.hidden_dim]));
        let z = p.core_step(tape, h, pa, z0);
        p.heads(tape, z)
    };
    let a = heads(&mut tape, &x);
    let b = heads(&mut tape, &x_aug);
    let l = rs_loss(&mut tape, &a, &b);
    assert!(tape.item(l).abs() < 1e-15);
}

#[test]
fn perfect_prediction_costs_the_reward_entropy() {
    let p = tiny_policy(5);
    let coder = TwoHotCoder::uniform(p.config.reward_bins, -1.0, 3.0).unwrap();
    let rewards = [-0.3, 0.0, 1.7, 2.9];
    let targets: Vec<f64> = rewards.iter().flat_map(|&r| coder.encode(r)).collect();
    let entropy: f64 = targets.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum::<f64>() / 4.0;
    let f = p.config.feature_dim;
    let mut r = rng(6);
    let latent = random_rows(4, f, -1.0, 1.0, &mut r);
    let dones = [0.0, 1.0, 0.0, 1.0];
    let w = FpWeights {
        reward: 0.1,
        dynamics: 1.0,
        termination: 0.1,
    };

    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let logits = tape.constant(Tensor::new(&[4, p.config.reward_bins], targets.iter().map(|q| q.max(1e-300).ln()).collect()).unwrap());
    let pred = imagenav_core::policy::Prediction {
        reward_logits: logits,
        next_latent: tape.constant(latent.clone()),
        done_logit: tape.constant(Tensor::new(&[4, 1], dones.iter().map(|&d| if d > 0.5 { 60.0 } else { -60.0 }).collect()).unwrap()),
    };
    let rt = tape.constant(Tensor::new(&[4, p.config.reward_bins], targets.clone()).unwrap());
    let lt = tape.constant(latent);
    let dt = tape.constant(Tensor::new(&[4, 1], dones.to_vec()).unwrap());
    let l = fp_loss(&mut tape, &pred, rt, lt, dt, &w);
    assert!((tape.item(l.total) - 0.1 * entropy).abs() < 1e-12);
}

#[test]
fn zero_fp_weights_give_zero_loss_and_gradient() {
    let p = tiny_policy(7);
    let mut r = rng(8);
    let w = FpWeights {
        reward: 0.0,
        dynamics: 0.0,
        termination: 0.0,
    };
    let coder = TwoHotCoder::uniform(p.config.reward_bins, -1.0, 3.0).unwrap();
    let mut tape = Tape::new(&p.store);
    let x = tape.constant(random_frames(&p, 3, &mut r));
    let h = p.encode(&mut tape, x);
    let a = tape.constant(random_rows(3, 2, -1.0, 1.0, &mut r));
    let pred = p.predict_transition(&mut tape, h, a);
    let rt = tape.constant(Tensor::new(&[3, p.config.reward_bins], [0.2, 1.0, -0.5].iter().flat_map(|&v| coder.encode(v)).collect()).unwrap());
    let lt = tape.constant(random_rows(3, p.config.feature_dim, -1.0, 1.0, &mut r));
    let dt = tape.constant(Tensor::new(&[3, 1], vec![0.0, 1.0, 0.0]).unwrap());
    let l = fp_loss(&mut tape, &pred, rt, lt, dt, &w).total;
    assert_eq!(tape.item(l), 0.0);
    let g = tape.backward(l).unwrap().into_params();
    assert!(g.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
}

fn small_config() -> TrainConfig {
    TrainConfig {
        total_steps: 64,
        num_envs: 2,
        rollout_len: 16,
        chunk_len: 8,
        minibatches: 2,
        world_count: 2,
        feature_dim: 16,
        hidden_dim: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn all_zero_weights_and_advantages_leave_parameters_unchanged() {
    let cfg = TrainConfig {
        value_coef: 0.0,
        entropy_coef: 0.0,
        lambda_r: 0.0,
        lambda_d: 0.0,
        lambda_t: 0.0,
        lambda_rs: 0.0,
        train_qc: false,
        ..small_config()
    };
    let mut policy = imagenav_core::policy::NavPolicy::<f64>::new(cfg.policy_config(), 0).unwrap();
    let mut collector = RolloutCollector::<f64>::new(
        training_worlds(&cfg).unwrap(),
        cfg.num_envs,
        cfg.env_config(),
        cfg.difficulty,
        cfg.hidden_dim,
        10,
        1,
    )
    .unwrap();
    let (mut batch, _) = collector.collect(&policy, cfg.rollout_len).unwrap();
    batch.compute_advantages(cfg.discount, cfg.gae_lambda);
    batch.advantages.iter_mut().for_each(|a| *a = 0.0);
    let before = policy.store.clone();
    let mut opt = Optimizers::new(&policy, &cfg);
    ppo_update(&mut policy, None, &mut opt, &batch, &cfg, 0.3, &mut rng(2)).unwrap();
    for id in before.ids() {
        assert_eq!(before.get(id), policy.store.get(id), "{} moved", before.name(id));
    }
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut t = Trainer::<f32>::new(small_config(), 0.3).unwrap();
        let mut rows = Vec::new();
        t.run(|row, _| {
            rows.push(row.clone());
            Ok(())
        })
        .unwrap();
        (rows, t.policy.store, t.qc.store)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    for id in a.1.ids() {
        assert_eq!(a.1.get(id), b.1.get(id));
    }
    for id in a.2.ids() {
        assert_eq!(a.2.get(id), b.2.get(id));
    }
}
