use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Adam, Linear, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::shield::depth::{mixed_label, DepthVector, DEPTH_BLOCKS};

/// Anything that maps `(s^d, a)` to a collision probability and its
/// gradient with respect to the normalized action.
pub trait CollisionModel {
    fn probability(&self, sd: &DepthVector, a: [f64; 2]) -> f64;
    fn probability_and_grad(&self, sd: &DepthVector, a: [f64; 2]) -> (f64, [f64; 2]);
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionSample {
    pub depth: DepthVector,
    /// Normalized action actually executed.
    pub action: [f64; 2],
    pub hard: bool,
    pub soft: f64,
}

/// `Q_c`: dense net on `s^d (+) a` with two tanh hidden layers and a
/// sigmoid output.
#[derive(Clone, Debug)]
pub struct CollisionPredictor<T: Scalar> {
    pub store: ParamStore<T>,
    layers: [Linear; 3],
    optimizer: Adam<T>,
}

pub const QC_HIDDEN: usize = 64;
pub const QC_LEARNING_RATE: f64 = 1e-3;

impl<T: Scalar> CollisionPredictor<T> {
    pub fn new(seed: u64) -> Result<Self> {
        Self::with_hidden(seed, QC_HIDDEN)
    }

    pub fn with_hidden(seed: u64, hidden: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gain = 5.0 / 3.0;
        let layers = [
            Linear::new(&mut store, "qc/fc0", DEPTH_BLOCKS + 2, hidden, gain, &mut rng)?,
            Linear::new(&mut store, "qc/fc1", hidden, hidden, gain, &mut rng)?,
            Linear::new(&mut store, "qc/out", hidden, 1, 1.0, &mut rng)?,
        ];
        let optimizer = Adam::new(store.ids().collect(), QC_LEARNING_RATE, Some(0.5));
        Ok(CollisionPredictor {
            store,
            layers,
            optimizer,
        })
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.optimizer.lr = T::lit(lr);
    }

    /// Pre-sigmoid output `[n, 1]`.
    pub fn logit(&self, tape: &mut Tape<'_, T>, sd: Var, a: Var) -> Var {
        let x = tape.concat_cols(&[sd, a]);
        let y = self.layers[0].forward(tape, x);
        let y = tape.tanh(y);
        let y = self.layers[1].forward(tape, y);
        let y = tape.tanh(y);
        self.layers[2].forward(tape, y)
    }

    fn inputs(samples: &[CollisionSample]) -> (Tensor<T>, Tensor<T>) {
        let n = samples.len();
        let sd: Vec<T> = samples.iter().flat_map(|s| s.depth.map(T::lit)).collect();
        let a: Vec<T> = samples.iter().flat_map(|s| s.action.map(T::lit)).collect();
        (
            Tensor::new(&[n, DEPTH_BLOCKS], sd).expect("depth shape"),
            Tensor::new(&[n, 2], a).expect("action shape"),
        )
    }

    /// Mean binary cross-entropy against mixed labels on one batch.
    pub fn bce<'s>(&'s self, tape: &mut Tape<'s, T>, samples: &[CollisionSample]) -> Var {
        let (sd, a) = Self::inputs(samples);
        let labels: Vec<T> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| T::lit(mixed_label(i, s.hard, s.soft)))
            .collect();
        let sd = tape.constant(sd);
        let a = tape.constant(a);
        let logit = self.logit(tape, sd, a);
        let y = tape.constant(Tensor::new(&[samples.len(), 1], labels).expect("label shape"));
        bce_with_logits(tape, logit, y)
    }

    /// One optimizer step on `samples`; returns the loss before the step.
    pub fn train_step(&mut self, samples: &[CollisionSample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let (loss, grads) = {
            let mut tape = Tape::new(&self.store);
            let l = self.bce(&mut tape, samples);
            (tape.item(l).as_f64(), tape.backward(l)?.into_params())
        };
        self.optimizer.step(&mut self.store, &grads);
        Ok(loss)
    }

    /// Shuffled minibatch epochs over a fixed dataset; returns per-epoch
    /// mean losses.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        samples: &[CollisionSample],
        epochs: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut count = 0;
            for chunk in order.chunks(batch.max(1)) {
                let mb: Vec<CollisionSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                total += self.train_step(&mb)?;
                count += 1;
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }
}

impl<T: Scalar> CollisionModel for CollisionPredictor<T> {
    fn probability(&self, sd: &DepthVector, a: [f64; 2]) -> f64 {
        let mut tape = Tape::new(&self.store);
        let s = tape.constant(Tensor::new(&[1, DEPTH_BLOCKS], sd.map(T::lit).to_vec()).expect("shape"));
        let av = tape.constant(Tensor::new(&[1, 2], a.map(T::lit).to_vec()).expect("shape"));
        let l = self.logit(&mut tape, s, av);
        let p = tape.sigmoid(l);
        tape.item(p).as_f64()
    }

    fn probability_and_grad(&self, sd: &DepthVector, a: [f64; 2]) -> (f64, [f64; 2]) {
        let mut tape = Tape::new(&self.store);
        let s = tape.constant(Tensor::new(&[1, DEPTH_BLOCKS], sd.map(T::lit).to_vec()).expect("shape"));
        let av = tape.input(Tensor::new(&[1, 2], a.map(T::lit).to_vec()).expect("shape"));
        let l = self.logit(&mut tape, s, av);
        let p = tape.sigmoid(l);
        let q = tape.item(p).as_f64();
        let g = tape
            .backward(p)
            .ok()
            .and_then(|g| g.wrt(av))
            .map_or([0.0; 2], |t| [t.data()[0].as_f64(), t.data()[1].as_f64()]);
        (q, g)
    }
}

/// `mean(softplus(x) - y x)`, the cross-entropy of `sigmoid(x)` against `y`.
pub fn bce_with_logits<T: Scalar>(tape: &mut Tape<'_, T>, logit: Var, target: Var) -> Var {
    let sp = tape.softplus(logit);
    let yx = tape.mul(target, logit);
    let per = tape.sub(sp, yx);
    tape.mean(per)
}
