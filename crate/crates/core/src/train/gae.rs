/// Generalized advantage estimation over one sequence.
///
/// `dones[t]` marks that the episode ended after step `t`, which cuts both
/// the bootstrap and the advantage recursion. `bootstrap` is the value of
/// the state following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    discount: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n, "values length");
    assert_eq!(dones.len(), n, "dones length");
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * live * next_value - values[t];
        next_adv = delta + discount * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// In-place standardization to zero mean and unit variance.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_step() {
        let (a, t) = compute_gae(&[1.5], &[0.4], &[true], 9.0, 0.99, 0.95);
        assert!((a[0] - 1.1).abs() < 1e-15);
        assert!((t[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let (a, _) = compute_gae(&[0.0; 5], &[0.0; 5], &[false; 5], 0.0, 0.99, 0.95);
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalized_moments() {
        let mut xs = vec![1.0, 2.0, 3.0, 4.0];
        normalize(&mut xs);
        assert!(xs.iter().sum::<f64>().abs() < 1e-12);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-6);
    }
}
