mod common;

use common::rng;
use imagenav_core::eval::{fit_trial_model, EvalConfig};
use imagenav_core::nn::{Tape, Tensor};
use imagenav_core::shield::{
    bce_with_logits, compute_direction, correct_fixed, correct_gradient, gradient_step, preprocess_depth,
    soft_label, CollisionModel, CollisionSample, DepthVector, ShieldConfig, ShieldMode, DEPTH_BLOCKS,
};
use imagenav_core::sim::NormalizedAction;
use imagenav_core::CollisionPredictor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sigmoid(w . a + b)`, independent of depth.
struct Linear {
    w: [f64; 2],
    b: f64,
}

impl CollisionModel for Linear {
    fn probability(&self, _: &DepthVector, a: [f64; 2]) -> f64 {
        sigmoid(self.w[0] * a[0] + self.w[1] * a[1] + self.b)
    }
    fn probability_and_grad(&self, sd: &DepthVector, a: [f64; 2]) -> (f64, [f64; 2]) {
        let p = self.probability(sd, a);
        (p, [p * (1.0 - p) * self.w[0], p * (1.0 - p) * self.w[1]])
    }
}

struct Always(f64);

impl CollisionModel for Always {
    fn probability(&self, _: &DepthVector, _: [f64; 2]) -> f64 {
        self.0
    }
    fn probability_and_grad(&self, _: &DepthVector, _: [f64; 2]) -> (f64, [f64; 2]) {
        (self.0, [0.0; 2])
    }
}

#[test]
fn soft_label_examples() {
    let at = |m: f64| {
        let mut sd = [1.0; 16];
        sd[5] = m;
        soft_label(&sd, 0.3)
    };
    assert!((at(0.3) - 0.5).abs() < 1e-15);
    assert!((at(0.0) - 0.952_574_126_822_433_4).abs() < 1e-12);
    assert!((at(1.0) - 9.110_511_944_006_454e-4).abs() < 1e-15);
}

proptest! {
    #[test]
    fn soft_label_strictly_decreases(mut m in prop::collection::vec(0.0f64..=1.0, 2..20)) {
        m.sort_by(f64::total_cmp);
        m.dedup();
        let labels: Vec<f64> = m.iter().map(|&v| soft_label(&[v; 16], 0.3)).collect();
        for w in labels.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        for l in labels {
            prop_assert!(l > 0.0 && l < 1.0);
        }
    }

    #[test]
    fn direction_matches_the_mean_comparison(sd in prop::array::uniform16(0.0f64..=1.0)) {
        let left = sd[..8].iter().sum::<f64>() / 8.0;
        let right = sd[8..].iter().sum::<f64>() / 8.0;
        let want = if left > right { -1.0 } else { 1.0 };
        prop_assert_eq!(compute_direction(&sd), want);
    }

    #[test]
    fn depth_vector_shape(width in 16usize..200, seed in 0u64..1000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rays: Vec<f64> = (0..width).map(|_| r.random_range(0.0..=3.0)).collect();
        let sd = preprocess_depth(&rays, 3.0).unwrap();
        prop_assert_eq!(sd.len(), DEPTH_BLOCKS);
        prop_assert!(sd.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn direction_examples() {
    let mut sd = [1.0; 16];
    sd[8..].fill(0.1);
    let d = compute_direction(&sd);
    // subtracting D * delta must raise the yaw rate, i.e. turn left
    assert_eq!(d, -1.0);
    assert_eq!(compute_direction(&[0.5; 16]), 1.0);
}

#[test]
fn fixed_interval_single_correction() {
    let cfg = ShieldConfig::default();
    let mut sd = [1.0; 16];
    sd[..8].fill(0.2);
    assert_eq!(compute_direction(&sd), 1.0);
    // unsafe only while forward speed exceeds 0.6
    let q = Linear { w: [50.0, 0.0], b: -30.0 };
    let c = correct_fixed(NormalizedAction::new(0.8, 0.1), &sd, &q, &cfg);
    assert_eq!(c.iterations, 1);
    assert!((c.action.lin - 0.5).abs() < 1e-12 && (c.action.ang + 0.2).abs() < 1e-12);
    assert!(c.corrected && !c.fallback);
}

#[test]
fn safe_action_is_untouched() {
    let q = Always(0.1);
    for mode in [ShieldMode::FixedInterval, ShieldMode::Gradient] {
        let cfg = ShieldConfig { mode, ..ShieldConfig::default() };
        let a = NormalizedAction::new(0.4, -0.3);
        let c = match mode {
            ShieldMode::FixedInterval => correct_fixed(a, &[1.0; 16], &q, &cfg),
            ShieldMode::Gradient => correct_gradient(a, &[1.0; 16], &q, &cfg),
        };
        assert_eq!((c.action, c.iterations, c.corrected, c.fallback), (a, 0, false, false));
    }
}

#[test]
fn certain_collision_falls_back_to_rotation() {
    let cfg = ShieldConfig::default();
    let mut sd = [1.0; 16];
    sd[8..].fill(0.1);
    for c in [
        correct_fixed(NormalizedAction::new(1.0, 0.0), &sd, &Always(1.0), &cfg),
        correct_gradient(NormalizedAction::new(1.0, 0.0), &sd, &Always(1.0), &cfg),
    ] {
        assert!(c.fallback);
        assert_eq!(c.iterations, 5);
        assert_eq!(c.action.physical().v_lin, 0.0);
        assert_eq!(c.action.ang, 1.0);
    }
}

#[test]
fn gradient_step_matches_closed_form() {
    let q = Linear { w: [2.0, -1.5], b: 0.7 };
    let cfg = ShieldConfig {
        mode: ShieldMode::Gradient,
        max_corrections: 1,
        ..ShieldConfig::default()
    };
    let a = [0.3, 0.2];
    let p = q.probability(&[1.0; 16], a);
    assert!(p >= cfg.d_c);
    let want = [a[0] - 0.1 * p * (1.0 - p) * 2.0, a[1] + 0.1 * p * (1.0 - p) * 1.5];
    let c = correct_gradient(NormalizedAction::new(a[0], a[1]), &[1.0; 16], &q, &cfg);
    assert_eq!(c.iterations, 1);
    if !c.fallback {
        assert!((c.action.lin - want[0]).abs() < 1e-15 && (c.action.ang - want[1]).abs() < 1e-15);
    }
    let got = gradient_step(a, q.probability_and_grad(&[1.0; 16], a).1, 0.1);
    assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
}

fn synthetic(n: usize, seed: u64, only_far: bool) -> Vec<CollisionSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let floor = if only_far { 0.95 } else { 0.0 };
            let m = r.random_range(floor..=1.0);
            let mut depth: DepthVector = std::array::from_fn(|_| r.random_range(m..=1.0));
            depth[r.random_range(0..DEPTH_BLOCKS)] = m;
            CollisionSample {
                depth,
                action: [r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)],
                hard: m < 0.3,
                soft: soft_label(&depth, 0.3),
            }
        })
        .collect()
}

fn auc(scores: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn predictor_separates_near_from_far() {
    let train = synthetic(4000, 1, false);
    let test = synthetic(1000, 2, false);
    let mut q = CollisionPredictor::new(3).unwrap();
    q.fit(&train, 15, 128, &mut rng(4)).unwrap();
    let scores: Vec<(f64, bool)> = test.iter().map(|s| (q.probability(&s.depth, s.action), s.hard)).collect();
    let a = auc(&scores);
    assert!(a > 0.95, "AUC {a}");
}

#[test]
fn predictor_learns_an_all_safe_dataset() {
    let data = synthetic(2000, 5, true);
    assert!(data.iter().all(|s| !s.hard && s.soft < 0.01));
    let mut q = CollisionPredictor::new(6).unwrap();
    q.fit(&data, 10, 128, &mut rng(7)).unwrap();
    for s in synthetic(200, 8, true) {
        assert!(q.probability(&s.depth, s.action) < 0.1);
    }
}

#[test]
fn cross_entropy_floor_is_the_label_entropy() {
    let p: [f64; 5] = [0.05, 0.3, 0.5, 0.77, 0.99];
    let store = imagenav_core::nn::ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let logits = tape.constant(Tensor::new(&[5, 1], p.iter().map(|p| (p / (1.0 - p)).ln()).collect()).unwrap());
    let y = tape.constant(Tensor::new(&[5, 1], p.to_vec()).unwrap());
    let l = bce_with_logits(&mut tape, logits, y);
    let h: f64 = p.iter().map(|p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())).sum::<f64>() / 5.0;
    assert!((tape.item(l) - h).abs() < 1e-12);
}

fn unsafe_states(q: &dyn CollisionModel, d_c: f64, n: usize, seed: u64) -> Vec<(DepthVector, [f64; 2])> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let m = r.random_range(0.0..0.6);
        let mut sd: DepthVector = std::array::from_fn(|_| r.random_range(m..=1.0));
        let lo = r.random_range(0..DEPTH_BLOCKS - 3);
        sd[lo..lo + 3].fill(m);
        let a = [r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)];
        if q.probability(&sd, a) >= d_c {
            out.push((sd, a));
        }
    }
    out
}

#[test]
fn correction_contract_and_descent_with_the_trained_model() {
    let q: CollisionPredictor = fit_trial_model(&EvalConfig::default(), 0.3).unwrap();
    let cfg = ShieldConfig::default();
    let mut r = rng(20);
    for _ in 0..10_000 {
        let sd: DepthVector = std::array::from_fn(|_| r.random_range(0.0..=1.0));
        let a = NormalizedAction::new(r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0));
        for mode in [ShieldMode::FixedInterval, ShieldMode::Gradient] {
            let c = match mode {
                ShieldMode::FixedInterval => correct_fixed(a, &sd, &q, &cfg),
                ShieldMode::Gradient => correct_gradient(a, &sd, &q, &cfg),
            };
            assert!(c.is_accounted(&cfg), "{mode}: {c:?}");
            assert!(c.q < cfg.d_c || c.fallback || c.iterations == cfg.max_corrections);
            assert!(c.action.lin.abs() <= 1.0 && c.action.ang.abs() <= 1.0);
        }
    }

    let states = unsafe_states(&q, cfg.d_c, 10_000, 21);
    let ok = states
        .iter()
        .filter(|(sd, a)| {
            let (p, g) = q.probability_and_grad(sd, *a);
            q.probability(sd, gradient_step(*a, g, cfg.eta)) <= p
        })
        .count();
    assert!(ok as f64 >= 0.95 * states.len() as f64, "{ok} of {}", states.len());
}
