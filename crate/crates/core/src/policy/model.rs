use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, GruCell, Linear, ParamId, ParamStore, Tape, Tensor, Var};
use crate::policy::distribution::{sample_squashed, squashed_log_prob};
use crate::scalar::Scalar;
use crate::sim::{Image, NormalizedAction, Observation};

/// Architecture hyperparameters. Defaults match the 3x16x64 camera.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub image_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub conv_channels: Vec<usize>,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub predictor_hidden: usize,
    pub reward_bins: usize,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            image_channels: 3,
            image_height: 16,
            image_width: 64,
            conv_channels: vec![16, 32, 32],
            feature_dim: 256,
            hidden_dim: 128,
            predictor_hidden: 256,
            reward_bins: 41,
            log_std_init: -0.5,
            log_std_min: -5.0,
            log_std_max: 1.0,
        }
    }
}

impl PolicyConfig {
    /// Stacked current + goal channels.
    pub fn input_channels(&self) -> usize {
        2 * self.image_channels
    }

    pub fn input_len(&self) -> usize {
        self.input_channels() * self.image_height * self.image_width
    }
}

/// Recurrent state carried between steps of one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState<T> {
    pub hidden: Vec<T>,
    pub prev_action: NormalizedAction,
}

impl<T: Scalar> PolicyState<T> {
    pub fn new(hidden_dim: usize) -> Self {
        PolicyState {
            hidden: vec![T::zero(); hidden_dim],
            prev_action: NormalizedAction::default(),
        }
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = T::zero());
        self.prev_action = NormalizedAction::default();
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Heads {
    pub mean: Var,
    pub log_std: Var,
    pub value: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub reward_logits: Var,
    pub next_latent: Var,
    pub done_logit: Var,
}

/// One acting step for one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput<T> {
    /// Pre-squash Gaussian sample.
    pub u: [f64; 2],
    pub action: NormalizedAction,
    pub log_prob: f64,
    pub value: f64,
    pub mean: [f64; 2],
    /// Recurrent state before this step.
    pub hidden_in: Vec<T>,
}

/// Encoder, recurrent core, actor/critic heads and transition predictor.
#[derive(Clone, Debug)]
pub struct NavPolicy<T: Scalar> {
    pub config: PolicyConfig,
    pub store: ParamStore<T>,
    convs: Vec<Conv2d>,
    feature: Linear,
    gru: GruCell,
    actor: Linear,
    critic: Linear,
    log_std: ParamId,
    predictor: [Linear; 3],
    conv_out: usize,
}

impl<T: Scalar> NavPolicy<T> {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        if config.conv_channels.is_empty() {
            return Err(Error::invalid("conv_channels", "need at least one conv layer"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let relu_gain = std::f64::consts::SQRT_2;

        let mut convs = Vec::new();
        let (mut c, mut h, mut w) = (config.input_channels(), config.image_height, config.image_width);
        for (i, &out) in config.conv_channels.iter().enumerate() {
            let conv = Conv2d::new(&mut store, &format!("encoder/conv{i}"), c, out, 3, 2, 1, &mut rng)?;
            (h, w) = conv.output_hw(h, w);
            c = out;
            convs.push(conv);
        }
        let conv_out = c * h * w;
        let feature = Linear::new(&mut store, "encoder/feature", conv_out, config.feature_dim, relu_gain, &mut rng)?;
        let gru = GruCell::new(&mut store, "gru", config.feature_dim + 2, config.hidden_dim, &mut rng)?;
        let actor = Linear::new(&mut store, "actor", config.hidden_dim, 2, 0.01, &mut rng)?;
        let critic = Linear::new(&mut store, "critic", config.hidden_dim, 1, 1.0, &mut rng)?;
        let log_std = store.add("log_std", Tensor::full(&[2], T::lit(config.log_std_init)))?;
        let ph = config.predictor_hidden;
        let predictor = [
            Linear::new(&mut store, "predictor/fc0", config.feature_dim + 2, ph, relu_gain, &mut rng)?,
            Linear::new(&mut store, "predictor/fc1", ph, ph, relu_gain, &mut rng)?,
            Linear::new(
                &mut store,
                "predictor/out",
                ph,
                config.reward_bins + config.feature_dim + 1,
                1.0,
                &mut rng,
            )?,
        ];
        Ok(NavPolicy {
            config,
            store,
            convs,
            feature,
            gru,
            actor,
            critic,
            log_std,
            predictor,
            conv_out,
        })
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("encoder/")
    }

    pub fn predictor_params(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("predictor/")
    }

    /// Everything the reinforcement objective updates: encoder, core, heads.
    pub fn rl_params(&self) -> Vec<ParamId> {
        let mut ids = self.encoder_params();
        ids.extend(self.store.ids_with_prefix("gru/"));
        ids.extend(self.store.ids_with_prefix("actor/"));
        ids.extend(self.store.ids_with_prefix("critic/"));
        ids.push(self.log_std);
        ids
    }

    /// Channel-wise `O_c (+) O_g` as a flat `[6, H, W]` buffer.
    pub fn stack(&self, current: &Image, goal: &Image) -> Result<Vec<T>> {
        let cfg = &self.config;
        for (name, img) in [("current", current), ("goal", goal)] {
            if img.channels != cfg.image_channels || img.height != cfg.image_height || img.width != cfg.image_width {
                return Err(Error::Shape(format!(
                    "{name} image is {}x{}x{}, expected {}x{}x{}",
                    img.channels, img.height, img.width, cfg.image_channels, cfg.image_height, cfg.image_width
                )));
            }
        }
        Ok(current
            .data
            .iter()
            .chain(&goal.data)
            .map(|&v| T::lit(v as f64))
            .collect())
    }

    /// `[n, 6, H, W]` tensor from flat stacked frames.
    pub fn batch_tensor(&self, frames: &[&[T]]) -> Result<Tensor<T>> {
        let cfg = &self.config;
        let mut data = Vec::with_capacity(frames.len() * cfg.input_len());
        for f in frames {
            if f.len() != cfg.input_len() {
                return Err(Error::Shape(format!("frame has {} values, expected {}", f.len(), cfg.input_len())));
            }
            data.extend_from_slice(f);
        }
        Tensor::new(
            &[frames.len(), cfg.input_channels(), cfg.image_height, cfg.image_width],
            data,
        )
    }

    /// Encoder `f_w`: `[n, 6, H, W] -> [n, feature_dim]`.
    pub fn encode(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let n = tape.shape(x)[0];
        let mut y = x;
        for conv in &self.convs {
            y = conv.forward(tape, y);
            y = tape.relu(y);
        }
        let flat = tape.reshape(y, &[n, self.conv_out]);
        let f = self.feature.forward(tape, flat);
        tape.relu(f)
    }

    /// Recurrent core `g_xi` on `h (+) a_{t-1}`.
    pub fn core_step(&self, tape: &mut Tape<'_, T>, h: Var, prev_action: Var, z_prev: Var) -> Var {
        let x = tape.concat_cols(&[h, prev_action]);
        self.gru.forward(tape, x, z_prev)
    }

    /// Runs the core over `steps` time-major frames of `n` parallel
    /// sequences. `starts[t * n + i]` zeroes the carried state of sequence
    /// `i` before step `t`.
    pub fn unroll(
        &self,
        tape: &mut Tape<'_, T>,
        h: Var,
        prev_actions: Var,
        z0: Tensor<T>,
        starts: &[bool],
        n: usize,
    ) -> Var {
        let steps = starts.len() / n;
        let hd = self.config.hidden_dim;
        let mut z = tape.constant(z0);
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mask = &starts[t * n..(t + 1) * n];
            if mask.iter().any(|&s| s) {
                let keep: Vec<T> = mask
                    .iter()
                    .flat_map(|&s| std::iter::repeat_n(if s { T::zero() } else { T::one() }, hd))
                    .collect();
                let keep = tape.constant(Tensor::new(&[n, hd], keep).expect("mask shape"));
                z = tape.mul(z, keep);
            }
            let ht = tape.slice_rows(h, t * n, n);
            let at = tape.slice_rows(prev_actions, t * n, n);
            z = self.core_step(tape, ht, at, z);
            outs.push(z);
        }
        tape.concat_rows(&outs)
    }

    /// Actor mean, clamped log standard deviation (broadcast to rows) and value.
    pub fn heads(&self, tape: &mut Tape<'_, T>, z: Var) -> Heads {
        let n = tape.shape(z)[0];
        let mean = self.actor.forward(tape, z);
        let ls = tape.param(self.log_std);
        let ls = tape.clamp(ls, T::lit(self.config.log_std_min), T::lit(self.config.log_std_max));
        let zeros = tape.constant(Tensor::zeros(&[n, 2]));
        let log_std = tape.add_bias(zeros, ls);
        let value = self.critic.forward(tape, z);
        Heads { mean, log_std, value }
    }

    /// Transition predictor `P_psi(h_t, a_t)`.
    pub fn predict_transition(&self, tape: &mut Tape<'_, T>, h: Var, a: Var) -> Prediction {
        let x = tape.concat_cols(&[h, a]);
        let y = self.predictor[0].forward(tape, x);
        let y = tape.relu(y);
        let y = self.predictor[1].forward(tape, y);
        let y = tape.relu(y);
        let out = self.predictor[2].forward(tape, y);
        let (bins, f) = (self.config.reward_bins, self.config.feature_dim);
        Prediction {
            reward_logits: tape.slice_cols(out, 0, bins),
            next_latent: tape.slice_cols(out, bins, f),
            done_logit: tape.slice_cols(out, bins + f, 1),
        }
    }

    /// Current clamped log standard deviation.
    pub fn log_std(&self) -> [f64; 2] {
        let d = self.store.get(self.log_std).data();
        [0, 1].map(|i| d[i].as_f64().clamp(self.config.log_std_min, self.config.log_std_max))
    }

    /// One step for a batch of environments. Updates each state's hidden
    /// vector; `prev_action` is left to the caller, which knows the action
    /// that was finally executed.
    pub fn act<R: Rng + ?Sized>(
        &self,
        observations: &[&Observation],
        states: &mut [PolicyState<T>],
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Vec<ActOutput<T>>> {
        let n = observations.len();
        let frames = observations
            .iter()
            .map(|o| self.stack(&o.current, &o.goal))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[T]> = frames.iter().map(|f| f.as_slice()).collect();
        let x = self.batch_tensor(&refs)?;
        let hd = self.config.hidden_dim;
        let z_prev: Vec<T> = states.iter().flat_map(|s| s.hidden.iter().copied()).collect();
        let prev_a: Vec<T> = states
            .iter()
            .flat_map(|s| s.prev_action.to_array().map(T::lit))
            .collect();

        let mut tape = Tape::new(&self.store);
        let x = tape.constant(x);
        let h = self.encode(&mut tape, x);
        let pa = tape.constant(Tensor::new(&[n, 2], prev_a)?);
        let zp = tape.constant(Tensor::new(&[n, hd], z_prev)?);
        let z = self.core_step(&mut tape, h, pa, zp);
        let heads = self.heads(&mut tape, z);
        let log_std = self.log_std();
        let mut out = Vec::with_capacity(n);
        for (i, state) in states.iter_mut().enumerate() {
            let md = tape.value(heads.mean).data();
            let mean = [md[2 * i].as_f64(), md[2 * i + 1].as_f64()];
            let (u, a) = if stochastic {
                sample_squashed(&mean, &log_std, rng)
            } else {
                (mean, mean.map(f64::tanh))
            };
            let hidden_in = std::mem::replace(
                &mut state.hidden,
                tape.value(z).data()[i * hd..(i + 1) * hd].to_vec(),
            );
            out.push(ActOutput {
                u,
                action: NormalizedAction::new(a[0], a[1]),
                log_prob: squashed_log_prob(&u, &mean, &log_std),
                value: tape.value(heads.value).data()[i].as_f64(),
                mean,
                hidden_in,
            });
        }
        Ok(out)
    }

    /// Architecture summary written next to checkpoints.
    pub fn card(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "dtype = {}", T::DTYPE);
        let _ = writeln!(s, "input = {}x{}x{}", c.input_channels(), c.image_height, c.image_width);
        let chans: Vec<String> = c.conv_channels.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "conv_channels = {}", chans.join(","));
        let _ = writeln!(s, "conv = kernel 3, stride 2, pad 1, relu");
        let _ = writeln!(s, "feature_dim = {}", c.feature_dim);
        let _ = writeln!(s, "gru_hidden = {}", c.hidden_dim);
        let _ = writeln!(s, "actor = linear {} -> 2, tanh-squashed gaussian", c.hidden_dim);
        let _ = writeln!(s, "log_std = state-independent, init {}, clamp [{}, {}]", c.log_std_init, c.log_std_min, c.log_std_max);
        let _ = writeln!(s, "critic = linear {} -> 1", c.hidden_dim);
        let _ = writeln!(
            s,
            "predictor = {} -> {} -> {} -> {} + {} + 1",
            c.feature_dim + 2,
            c.predictor_hidden,
            c.predictor_hidden,
            c.reward_bins,
            c.feature_dim
        );
        let _ = writeln!(s, "parameters = {}", self.store.num_scalars());
        for (_, p) in self.store.iter() {
            let shape: Vec<String> = p.tensor.shape().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "param {} [{}]", p.name, shape.join(", "));
        }
        s
    }
}
