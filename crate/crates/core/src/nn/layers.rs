use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::Result;
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// `rows x cols` matrix with orthonormal columns (or rows, whichever is the
/// smaller set), scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let transpose = rows < cols;
    let (n_vec, dim) = if transpose { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while vecs.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(u) {
                *a -= d * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for a in &mut v {
            *a /= norm;
        }
        vecs.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            let (r, c) = if transpose { (i, j) } else { (j, i) };
            out[r * cols + c] = gain * x;
        }
    }
    out
}

pub fn fan_in_uniform<R: Rng + ?Sized>(numel: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    (0..numel).map(|_| dist.sample(rng)).collect()
}

/// Dense layer `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = orthogonal(in_dim, out_dim, gain, rng);
        let weight = store.add(&format!("{name}/weight"), Tensor::from_f64(&[in_dim, out_dim], &w)?)?;
        let bias = store.add(&format!("{name}/bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w);
        tape.add_bias(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let w = fan_in_uniform(out_channels * fan_in, fan_in, rng);
        let b = fan_in_uniform(out_channels, fan_in, rng);
        let weight = store.add(
            &format!("{name}/weight"),
            Tensor::from_f64(&[out_channels, in_channels, kernel, kernel], &w)?,
        )?;
        let bias = store.add(&format!("{name}/bias"), Tensor::from_f64(&[out_channels], &b)?)?;
        Ok(Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// Gated recurrent unit with reset gate applied after the hidden projection:
///
/// ```text
/// r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
/// z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
/// n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = n + z * (h - n)
/// ```
///
/// Gate blocks are packed `[r | z | n]` along the output axis.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden_dim;
        let mut wi = vec![0.0; input_dim * 3 * h];
        let mut wh = vec![0.0; h * 3 * h];
        for gate in 0..3 {
            let bi = orthogonal(input_dim, h, 1.0, rng);
            let bh = orthogonal(h, h, 1.0, rng);
            for r in 0..input_dim {
                wi[r * 3 * h + gate * h..r * 3 * h + (gate + 1) * h]
                    .copy_from_slice(&bi[r * h..(r + 1) * h]);
            }
            for r in 0..h {
                wh[r * 3 * h + gate * h..r * 3 * h + (gate + 1) * h]
                    .copy_from_slice(&bh[r * h..(r + 1) * h]);
            }
        }
        Ok(GruCell {
            w_input: store.add(&format!("{name}/w_input"), Tensor::from_f64(&[input_dim, 3 * h], &wi)?)?,
            w_hidden: store.add(&format!("{name}/w_hidden"), Tensor::from_f64(&[h, 3 * h], &wh)?)?,
            b_input: store.add(&format!("{name}/b_input"), Tensor::zeros(&[3 * h]))?,
            b_hidden: store.add(&format!("{name}/b_hidden"), Tensor::zeros(&[3 * h]))?,
            input_dim,
            hidden_dim,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, h_prev: Var) -> Var {
        let h = self.hidden_dim;
        let wi = tape.param(self.w_input);
        let wh = tape.param(self.w_hidden);
        let bi = tape.param(self.b_input);
        let bh = tape.param(self.b_hidden);
        let gi = tape.matmul(x, wi);
        let gi = tape.add_bias(gi, bi);
        let gh = tape.matmul(h_prev, wh);
        let gh = tape.add_bias(gh, bh);

        let gi_rz = tape.slice_cols(gi, 0, 2 * h);
        let gh_rz = tape.slice_cols(gh, 0, 2 * h);
        let rz = tape.add(gi_rz, gh_rz);
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, h);
        let z = tape.slice_cols(rz, h, h);

        let gi_n = tape.slice_cols(gi, 2 * h, h);
        let gh_n = tape.slice_cols(gh, 2 * h, h);
        let rn = tape.mul(r, gh_n);
        let n = tape.add(gi_n, rn);
        let n = tape.tanh(n);

        let diff = tape.sub(h_prev, n);
        let zd = tape.mul(z, diff);
        tape.add(n, zd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, cols) = (6, 4);
        let w = orthogonal(rows, cols, 1.0, &mut rng);
        for a in 0..cols {
            for b in 0..cols {
                let d: f64 = (0..rows).map(|r| w[r * cols + a] * w[r * cols + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
        let wide = orthogonal(3, 5, 2.0, &mut rng);
        for a in 0..3 {
            let d: f64 = (0..5).map(|c| wide[a * 5 + c] * wide[a * 5 + c]).sum();
            assert!((d - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gru_with_zero_params_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v = 0.0;
            }
        }
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_f64(&[1, 3], &[0.3, -0.7, 1.2]).unwrap());
        let h = tape.constant(Tensor::zeros(&[1, 4]));
        let y = cell.forward(&mut tape, x, h);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_keeps_hidden_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng).unwrap();
        let bias = store.get_mut(cell.b_input).data_mut();
        for v in &mut bias[4..8] {
            *v = 20.0;
        }
        let h_prev = [0.5, -0.25, 0.9, -0.8];
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_f64(&[1, 3], &[0.3, -0.7, 1.2]).unwrap());
        let h = tape.constant(Tensor::from_f64(&[1, 4], &h_prev).unwrap());
        let y = cell.forward(&mut tape, x, h);
        for (a, b) in tape.value(y).data().iter().zip(&h_prev) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
