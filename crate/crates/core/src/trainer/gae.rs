//! Generalised advantage estimation.

use crate::error::{Error, Result};

/// Advantages and value targets for one contiguous trajectory segment.
///
/// `dones[t]` cuts credit flow after step `t`. `bootstrap` is `V` of the state
/// following the last step and is ignored when that step is terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    for (context, actual) in [("gae values", values.len()), ("gae dones", dones.len())] {
        if actual != t_len {
            return Err(Error::Dimension {
                context,
                expected: t_len,
                actual,
            });
        }
    }
    let mut advantages = vec![0.0; t_len];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_recursion() {
        let (adv, ret) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 5.0, 0.99, 0.95).unwrap();
        assert!((adv[1] - 1.0).abs() < 1e-15);
        assert!((adv[0] - 1.9405).abs() < 1e-12);
        assert_eq!(adv, ret);
    }

    #[test]
    fn lambda_zero_is_td() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (adv, _) = compute_gae(&r, &v, &[false, false, false], 0.7, 0.9, 0.0).unwrap();
        assert_eq!(adv[0], r[0] + 0.9 * v[1] - v[0]);
        assert_eq!(adv[1], r[1] + 0.9 * v[2] - v[1]);
        assert_eq!(adv[2], r[2] + 0.9 * 0.7 - v[2]);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0], &[], &[true], 0.0, 0.9, 0.9).is_err());
    }

    #[test]
    fn normalised_moments() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }
}
