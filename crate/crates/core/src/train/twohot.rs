use crate::error::{Error, Result};

/// Scalar-to-distribution coder over a fixed increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoHotCoder {
    bins: Vec<f64>,
}

impl TwoHotCoder {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.len() < 2 {
            return Err(Error::invalid("reward_bins", "need at least two bins"));
        }
        if bins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("reward_bins", "bin values must be strictly increasing"));
        }
        Ok(TwoHotCoder { bins })
    }

    /// `n` evenly spaced bins on `[lo, hi]`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("reward_bins", "need at least two bins"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut bins: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        bins[n - 1] = hi;
        Self::new(bins)
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.bins[0], self.bins[self.bins.len() - 1])
    }

    /// Lower bracketing bin index and the weight on the upper bin.
    pub fn bracket(&self, r: f64) -> (usize, f64) {
        let r = self.clamp(r);
        let hi = self.bins.partition_point(|&b| b <= r);
        if hi >= self.bins.len() {
            return (self.bins.len() - 1, 0.0);
        }
        let lo = hi - 1;
        let w = (r - self.bins[lo]) / (self.bins[hi] - self.bins[lo]);
        (lo, w)
    }

    pub fn encode_into(&self, r: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (lo, w) = self.bracket(r);
        if w == 0.0 {
            out[lo] = 1.0;
        } else {
            out[lo] = 1.0 - w;
            out[lo + 1] = w;
        }
    }

    pub fn encode(&self, r: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bins.len()];
        self.encode_into(r, &mut out);
        out
    }

    pub fn expectation(&self, probs: &[f64]) -> f64 {
        probs.iter().zip(&self.bins).map(|(p, b)| p * b).sum()
    }
}
