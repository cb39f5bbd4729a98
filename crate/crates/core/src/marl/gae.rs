use crate::error::{Error, Result};

/// Generalized advantage estimation over one trajectory.
///
/// `values` has one more entry than `rewards` (the bootstrap value). Step `t`
/// is discounted by `gamma * continuation[t]`.
pub fn gae(rewards: &[f64], values: &[f64], continuation: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if values.len() != t + 1 || continuation.len() != t {
        return Err(Error::Contract(format!(
            "gae: {} rewards need {} values and {} continuations, got {} and {}",
            t,
            t + 1,
            t,
            values.len(),
            continuation.len()
        )));
    }
    let mut adv = vec![0.0; t];
    let mut next = 0.0;
    for k in (0..t).rev() {
        let discount = gamma * continuation[k];
        let delta = rewards[k] + discount * values[k + 1] - values[k];
        next = delta + discount * lambda * next;
        adv[k] = next;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Shift to zero mean and scale to unit standard deviation in place.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
