//! Joint water-filling over a pool of parallel streams.

use crate::{Error, Result};

/// Powers `p_i = max(0, μ − σ²/g_i²)` with `Σ p_i = P_t`, where `g_i` are
/// amplitude gains. Streams with zero gain get zero power.
pub fn waterfilling(gains: &[f64], total_power: f64, noise_power: f64) -> Result<Vec<f64>> {
    if !(total_power > 0.0) {
        return Err(Error::config(format!(
            "total_power must be positive for water-filling, got {total_power}"
        )));
    }
    if !(noise_power > 0.0) {
        return Err(Error::config(
            "noise_power must be positive for water-filling",
        ));
    }
    // floors σ²/g², ascending; non-positive gains never become active
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::config(
            "water-filling needs at least one positive gain",
        ));
    }
    let floor = |i: usize| noise_power / (gains[i] * gains[i]);
    order.sort_by(|&a, &b| floor(a).total_cmp(&floor(b)).then(a.cmp(&b)));

    // The active set is a prefix of `order`; prefix sums taken from the
    // strongest stream up never subtract a large floor from a small budget.
    let mut level = total_power + floor(order[0]);
    let mut active = 1;
    let mut sum_floor = floor(order[0]);
    for (k, &i) in order.iter().enumerate().skip(1) {
        let f = floor(i);
        if !(f.is_finite() && f < level) {
            break;
        }
        sum_floor += f;
        active = k + 1;
        level = (total_power + sum_floor) / active as f64;
    }
    let mut p = vec![0.0; gains.len()];
    for &i in &order[..active] {
        p[i] = (level - floor(i)).max(0.0);
    }
    // remove rounding drift so the budget holds to the last bit that matters
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        let scale = total_power / total;
        p.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(p)
}
