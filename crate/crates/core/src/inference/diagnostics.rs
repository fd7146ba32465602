use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PosteriorDraws;

/// Potential scale reduction factor, or a marker when it cannot be formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rhat {
    Value(f64),
    /// Zero within-chain variance, duplicated chains, or too few draws.
    Indeterminate,
}

impl Rhat {
    pub fn value(self) -> Option<f64> {
        match self {
            Rhat::Value(v) => Some(v),
            Rhat::Indeterminate => None,
        }
    }

    /// True when the value is known and below `threshold`.
    pub fn below(self, threshold: f64) -> bool {
        self.value().is_some_and(|v| v < threshold)
    }
}

impl fmt::Display for Rhat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhat::Value(v) => write!(f, "{v:.4}"),
            Rhat::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

/// Sum of values in ascending order, so that the result does not depend on
/// the order in which they were collected.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Gelman-Rubin statistic of per-chain series. With `split`, every chain is
/// halved first (an odd middle draw is discarded).
pub fn rhat_of_chains(chains: &[Vec<f64>], split: bool) -> Rhat {
    let parts: Vec<&[f64]> = if split {
        chains
            .iter()
            .flat_map(|c| {
                let h = c.len() / 2;
                [&c[..h], &c[c.len() - h..]]
            })
            .collect()
    } else {
        chains.iter().map(|c| c.as_slice()).collect()
    };
    let m = parts.len();
    let n = parts.first().map_or(0, |c| c.len());
    if m < 2 || n < 2 || parts.iter().any(|c| c.len() != n) {
        return Rhat::Indeterminate;
    }
    for i in 0..m {
        for j in i + 1..m {
            if parts[i] == parts[j] {
                return Rhat::Indeterminate;
            }
        }
    }
    let mut stats: Vec<(f64, f64)> = parts.iter().map(|c| mean_var(c)).collect();
    stats.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut vars: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let w = ordered_sum(&mut vars) / m as f64;
    if !(w > 0.0) || !w.is_finite() {
        return Rhat::Indeterminate;
    }
    let mut means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let grand = ordered_sum(&mut means) / m as f64;
    let mut dev: Vec<f64> = stats.iter().map(|s| (s.0 - grand) * (s.0 - grand)).collect();
    let b = n as f64 * ordered_sum(&mut dev) / (m as f64 - 1.0);
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Rhat::Value((var_plus / w).sqrt())
}

/// R-hat of a named parameter over the retained draws.
pub fn rhat(draws: &PosteriorDraws, parameter: &str) -> Result<Rhat> {
    let p = draws
        .parameter_index(parameter)
        .ok_or_else(|| Error::invalid(format!("unknown parameter {parameter}")))?;
    if draws.chains < 2 || draws.draws_per_chain < 2 {
        return Err(Error::invalid("R-hat needs at least 2 chains with 2 draws each"));
    }
    Ok(rhat_of_chains(&draws.chain_series(p), draws.config.split_rhat))
}

/// Empirical quantile of sorted data with linear interpolation between order
/// statistics (Hyndman-Fan type 7): `h = (N - 1) p`, interpolate between
/// `x[floor(h)]` and `x[floor(h) + 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    /// Posterior mean (EAP).
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: Rhat,
}

impl SummaryRow {
    pub fn contains(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub rows: Vec<SummaryRow>,
}

impl PosteriorSummary {
    pub fn get(&self, parameter: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }

    /// Rows whose R-hat is not below `threshold`, excluding parameters held
    /// constant (indeterminate R-hat with zero SD).
    pub fn unconverged(&self, threshold: f64) -> Vec<&SummaryRow> {
        self.rows
            .iter()
            .filter(|r| !(r.rhat.below(threshold) || (r.rhat == Rhat::Indeterminate && r.sd == 0.0)))
            .collect()
    }

    /// Shares of the composite variance from the posterior means of the
    /// three SDs.
    pub fn variance_partition(&self) -> Option<[f64; 3]> {
        let s = |n: &str| self.get(n).map(|r| r.mean);
        Some(crate::model::variance_partition(
            s("sigma_alpha")?,
            s("sigma_beta")?,
            s("sigma_gamma")?,
        ))
    }
}

/// Mean, SD, 2.5% and 97.5% quantiles (type 7) and R-hat of every parameter
/// over all retained draws. Results do not depend on chain order.
pub fn summarize(draws: &PosteriorDraws) -> Result<PosteriorSummary> {
    if draws.chains == 0 || draws.draws_per_chain == 0 {
        return Err(Error::invalid("no retained draws to summarize"));
    }
    let mut rows = Vec::with_capacity(draws.names.len());
    for (p, name) in draws.names.iter().enumerate() {
        let series = draws.chain_series(p);
        let mut all: Vec<f64> = series.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mean = ordered_sum(&mut all) / n;
        let mut dev: Vec<f64> = all.iter().map(|v| (v - mean) * (v - mean)).collect();
        let sd = if all.len() > 1 {
            (ordered_sum(&mut dev) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(SummaryRow {
            parameter: name.clone(),
            mean,
            sd,
            q025: quantile_sorted(&all, 0.025),
            q975: quantile_sorted(&all, 0.975),
            rhat: rhat_of_chains(&series, draws.config.split_rhat),
        });
    }
    Ok(PosteriorSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_of_integers() {
        let x: Vec<f64> = (1..=4000).map(f64::from).collect();
        assert!((quantile_sorted(&x, 0.025) - 100.975).abs() < 1e-9);
        assert!((quantile_sorted(&x, 0.975) - 3900.025).abs() < 1e-9);
        assert_eq!(quantile_sorted(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn rhat_edge_cases() {
        assert_eq!(rhat_of_chains(&[vec![1.0; 10], vec![1.0; 10]], false), Rhat::Indeterminate);
        let c: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(rhat_of_chains(&[c.clone(), c.clone()], false), Rhat::Indeterminate);
        let far = rhat_of_chains(
            &[
                vec![0.0, 0.1, 0.0, 0.1],
                vec![10.0, 10.1, 10.0, 10.1],
            ],
            false,
        );
        assert!(far.value().unwrap() > 10.0);
        assert_eq!(rhat_of_chains(&[c], false), Rhat::Indeterminate);
    }
}
