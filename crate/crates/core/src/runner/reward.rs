use crate::features::clamp_cost;

/// Reward for one decision step from the global best before and after it.
pub fn compute_reward(c_prev: f64, c_now: f64, c0: f64) -> f64 {
    let log_c0 = clamp_cost(c0).log10();
    let gain = clamp_cost(c_prev).log10() - clamp_cost(c_now).log10();
    reward_from_gain(gain, log_c0)
}

/// Same reward expressed through `gain = log10 c_prev - log10 c_now`.
pub fn reward_from_gain(gain: f64, log_c0: f64) -> f64 {
    let offset = (1.5 - gain).max(1.5 - log_c0).max(0.0);
    ((gain + offset) / (log_c0 + offset)).max(0.0).sqrt()
}
