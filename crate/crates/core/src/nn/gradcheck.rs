//! Central finite-difference gradients, used to validate the tape.

use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::nn::tensor::Tensor;

/// Central differences `(L(p + eps) - L(p - eps)) / 2 eps` for every scalar of
/// every listed parameter. `loss` only ever sees forward evaluations.
pub fn numeric_gradients<F>(
    store: &ParamStore<f64>,
    ids: &[ParamId],
    eps: f64,
    mut loss: F,
) -> Gradients<f64>
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let mut work = store.clone();
    let mut out = Gradients::new();
    for &id in ids {
        let n = work.get(id).numel();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + eps;
            let plus = loss(&work);
            work.get_mut(id).data_mut()[i] = orig - eps;
            let minus = loss(&work);
            work.get_mut(id).data_mut()[i] = orig;
            *gi = (plus - minus) / (2.0 * eps);
        }
        out.insert(id, Tensor::new(work.get(id).shape(), g).expect("shape"));
    }
    out
}

/// `|a - n| / max(|a|, |n|)` in the L2 sense; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Per-parameter relative error between analytic and numeric gradients.
/// A parameter missing from `analytic` is compared as all zeros.
pub fn compare(
    store: &ParamStore<f64>,
    analytic: &Gradients<f64>,
    numeric: &Gradients<f64>,
) -> Vec<(String, f64)> {
    numeric
        .iter()
        .map(|(id, n)| {
            let zeros = vec![0.0; n.numel()];
            let a = analytic.get(id).map_or(zeros.as_slice(), |t| t.data());
            (store.name(id).to_string(), relative_error(a, n.data()))
        })
        .collect()
}

/// Largest entry of [`compare`], with its parameter path.
pub fn worst(errors: &[(String, f64)]) -> (String, f64) {
    errors
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, e| if e.1 > acc.1 { e } else { acc })
}
