//! Partial credit model: adjacent-category logits with item step difficulties.
//!
//! For an item with `m` categories and steps `delta[0..m-1]` (the step into
//! category `j` is `delta[j-1]`), the unnormalised log-probability of category
//! `j` is the cumulative sum `sum_{k<=j} (theta - delta_k)` with the empty sum
//! for `j = 0`. Normalisation is done with a max-subtracted log-sum-exp so
//! that large `|theta|` does not overflow.

use crate::error::{Error, Result};

fn check_steps(delta: &[f64]) -> Result<()> {
    if delta.is_empty() {
        return Err(Error::invalid(
            "partial credit item needs at least 2 categories (1 step difficulty)",
        ));
    }
    Ok(())
}

/// Category probabilities `p_0..p_{m-1}` at trait value `theta`.
pub fn pcm_category_probs(theta: f64, delta: &[f64]) -> Result<Vec<f64>> {
    check_steps(delta)?;
    if !theta.is_finite() || delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite theta or step difficulty"));
    }
    let logits = cumulative_logits(theta, delta);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Log-probability of observing `response` (0-based category).
pub fn pcm_log_likelihood(response: usize, theta: f64, delta: &[f64]) -> Result<f64> {
    check_steps(delta)?;
    if response > delta.len() {
        return Err(Error::invalid(format!(
            "response {response} outside categories 0..={}",
            delta.len()
        )));
    }
    if !theta.is_finite() || delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite theta or step difficulty"));
    }
    Ok(log_prob(response, theta, delta))
}

/// Unnormalised cumulative logits, length `delta.len() + 1`.
pub fn cumulative_logits(theta: f64, delta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(delta.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for d in delta {
        acc += theta - d;
        out.push(acc);
    }
    out
}

/// Allocation-free log-probability; callers guarantee `response <= delta.len()`.
#[inline]
pub(crate) fn log_prob(response: usize, theta: f64, delta: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut max = 0.0f64;
    let mut at_response = 0.0;
    for (k, d) in delta.iter().enumerate() {
        acc += theta - d;
        if acc > max {
            max = acc;
        }
        if k + 1 == response {
            at_response = acc;
        }
    }
    let mut sum = (-max).exp();
    let mut acc = 0.0;
    for d in delta {
        acc += theta - d;
        sum += (acc - max).exp();
    }
    at_response - max - sum.ln()
}

/// Log-probability together with its derivatives with respect to `theta` and
/// each step difficulty. `d_delta` must have length `delta.len()`.
pub(crate) fn log_prob_with_gradient(
    response: usize,
    theta: f64,
    delta: &[f64],
    d_delta: &mut [f64],
) -> (f64, f64) {
    let logits = cumulative_logits(theta, delta);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let lp = logits[response] - max - total.ln();

    // d/dtheta = y - E[j]; d/ddelta_k = P(Y >= k) - 1[k <= y]
    let mut expected = 0.0;
    let mut tail = 0.0;
    for j in (1..weights.len()).rev() {
        let p = weights[j] / total;
        expected += j as f64 * p;
        tail += p;
        d_delta[j - 1] = tail - if j <= response { 1.0 } else { 0.0 };
    }
    (lp, response as f64 - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_when_theta_matches_all_steps() {
        let p = pcm_category_probs(0.0, &[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let p = pcm_category_probs(0.7, &[0.7]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_category_direct_evaluation() {
        // cumulative sums (0, 0.5, 1.7)
        let p = pcm_category_probs(1.0, &[0.5, -0.2]).unwrap();
        let e = [1.0f64, 0.5f64.exp(), 1.7f64.exp()];
        let z: f64 = e.iter().sum();
        for (pj, ej) in p.iter().zip(e) {
            assert!((pj - ej / z).abs() < 1e-15);
        }
        assert!((p[0] - 0.12311).abs() < 5e-6);
        assert!((p[1] - 0.20298).abs() < 5e-6);
        assert!((p[2] - 0.67391).abs() < 5e-6);
    }

    #[test]
    fn log_likelihood_examples() {
        let l = pcm_log_likelihood(0, 0.0, &[0.0]).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-15);
        let l = pcm_log_likelihood(1, 0.0, &[0.0, 0.0, 0.0]).unwrap();
        assert!((l - 0.25f64.ln()).abs() < 1e-15);
        let l = pcm_log_likelihood(2, 1.0, &[0.5, -0.2]).unwrap();
        assert!((l - 0.67391f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn rejects_degenerate_items_and_bad_responses() {
        assert!(matches!(pcm_category_probs(0.0, &[]), Err(Error::InvalidArgument(_))));
        assert!(pcm_log_likelihood(3, 0.0, &[0.0, 0.0]).is_err());
        assert!(pcm_category_probs(f64::NAN, &[0.0]).is_err());
    }

    #[test]
    fn extreme_theta_does_not_overflow() {
        let p = pcm_category_probs(800.0, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((p[4] - 1.0).abs() < 1e-12);
        let l = pcm_log_likelihood(0, -800.0, &[0.0, 1.0]).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-12);
    }

    #[test]
    fn fast_path_matches_checked_path() {
        let delta = [-1.3, 0.2, 0.9, 2.4];
        for y in 0..5 {
            for &t in &[-3.0, -0.4, 0.0, 1.1, 5.0] {
                let a = pcm_log_likelihood(y, t, &delta).unwrap();
                let mut g = [0.0; 4];
                let (b, _) = log_prob_with_gradient(y, t, &delta, &mut g);
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}
