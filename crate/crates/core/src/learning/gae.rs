//! Generalized advantage estimation.

/// Advantages and returns for one sequence. `dones[t]` marks an episode ending
/// after step `t`; `last_value` bootstraps the state after the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Time-major `T x N` version; returns `(advantages, returns)` in the same layout.
pub fn compute_gae_batch(
    rewards: &[Vec<f64>],
    values: &[Vec<f64>],
    dones: &[Vec<bool>],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t_len = rewards.len();
    let n = last_values.len();
    let mut adv = vec![vec![0.0; n]; t_len];
    let mut ret = vec![vec![0.0; n]; t_len];
    for e in 0..n {
        let r: Vec<f64> = rewards.iter().map(|row| row[e]).collect();
        let v: Vec<f64> = values.iter().map(|row| row[e]).collect();
        let d: Vec<bool> = dones.iter().map(|row| row[e]).collect();
        let (a, g) = compute_gae(&r, &v, &d, last_values[e], gamma, lambda);
        for t in 0..t_len {
            adv[t][e] = a[t];
            ret[t][e] = g[t];
        }
    }
    (adv, ret)
}

/// Shifts and scales to mean 0, std 1 (population std, floored at 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sum over future TD errors with explicit weights, cut at the first done.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        let value_after = |t: usize| if t + 1 < n { v[t + 1] } else { last };
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    let live = if d[k] { 0.0 } else { 1.0 };
                    total += w * (r[k] + gamma * live * value_after(k) - v[k]);
                    if d[k] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn terminal_single_step() {
        let (a, g) = compute_gae(&[2.0], &[0.5], &[true], 100.0, 0.99, 0.95);
        assert_eq!(a, vec![1.5]);
        assert_eq!(g, vec![2.0]);
    }

    #[test]
    fn two_step_worked_example() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[false, false], 0.0, 0.99, 0.95);
        assert_eq!(a[1], 1.0);
        assert!((a[0] - 1.9405).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_is_monte_carlo() {
        let r = [0.3, -1.0, 2.0, 0.5, 1.5];
        let v = [0.1, 0.2, -0.3, 0.4, 0.0];
        let last = 0.7;
        let (a, _) = compute_gae(&r, &v, &[false; 5], last, 0.9, 1.0);
        for t in 0..5 {
            let mut g = 0.9f64.powi((5 - t) as i32) * last;
            for (k, rk) in r.iter().enumerate().skip(t) {
                g += 0.9f64.powi((k - t) as i32) * rk;
            }
            assert!((a[t] - (g - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_has_zero_mean_unit_std() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let m: f64 = a.iter().sum::<f64>() / 4.0;
        let s: f64 = (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            r in prop::collection::vec(-5.0..5.0f64, 10),
            v in prop::collection::vec(-5.0..5.0f64, 10),
            d in prop::collection::vec(prop::bool::weighted(0.2), 10),
            last in -5.0..5.0f64,
        ) {
            let (a, g) = compute_gae(&r, &v, &d, last, 0.99, 0.95);
            let b = brute_force(&r, &v, &d, last, 0.99, 0.95);
            for t in 0..10 {
                prop_assert!((a[t] - b[t]).abs() <= 1e-10 * b[t].abs().max(1.0));
                prop_assert!((g[t] - (a[t] + v[t])).abs() < 1e-12);
            }
        }
    }
}
