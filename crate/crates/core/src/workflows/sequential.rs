//! Sequential estimation of the distal regression by multiple imputation.
//!
//! The measurement model is fitted first without the distal outcomes. `M`
//! latent snapshots, equally spaced over the retained draws of all chains,
//! serve as imputations: for each one the logistic regression of the
//! outcomes on the traits is fitted by maximum likelihood with the traits
//! treated as observed, and the `M` fits are pooled with Rubin's rules:
//!
//! ```text
//! Q = mean(q_m)        W = mean(var_m)        B = var(q_m)   (n - 1 denominator)
//! T = W + (1 + 1/M) B
//! df = (M - 1) (1 + W / ((1 + 1/M) B))^2
//! interval = Q -+ t_{df, 0.975} sqrt(T)
//! ```
//!
//! An imputation whose outcomes are separated by the traits has no finite
//! maximum likelihood estimate. It is dropped with a warning; pooling needs
//! at least half of the `M` fits to succeed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, DistalSet};
use crate::design::DyadDesign;
use crate::error::{Error, Result};
use crate::inference::{fit, McmcConfig, PosteriorDraws};
use crate::model::{distal_traits, inv_logit, softplus, DistalForm, DistalMode, LatentState, ModelSpec};

pub const DEFAULT_IMPUTATIONS: usize = 20;

const MAX_IRLS_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 40;
/// Fitted probabilities closer than this to 0 or 1 count as separation.
const SATURATION: f64 = 1e-10;
/// Columns whose largest absolute value is below this carry no information.
const NULL_COLUMN: f64 = 1e-12;

/// Maximum likelihood logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate. Columns that are zero
    /// for every row get coefficient 0 and variance 0.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
}

fn log_likelihood(x: &DMatrix<f64>, y: &[bool], b: &DVector<f64>) -> f64 {
    let eta = x * b;
    eta.iter()
        .zip(y)
        .map(|(e, yi)| if *yi { -softplus(-e) } else { -softplus(*e) })
        .sum()
}

/// Fits `P(y = 1) = logistic(x b)` by iteratively reweighted least squares
/// with step halving.
///
/// Returns [`Error::Domain`] when the outcomes are (quasi-)separated: the
/// iteration does not converge, the information matrix is singular, or some
/// fitted probability saturates at 0 or 1.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool]) -> Result<LogisticFit> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(Error::invalid("logistic regression needs one outcome per design row"));
    }
    let active: Vec<usize> = (0..x.ncols())
        .filter(|&j| x.column(j).amax() >= NULL_COLUMN)
        .collect();
    if active.is_empty() {
        return Err(Error::invalid("every column of the logistic design is zero"));
    }
    let xa = x.select_columns(&active);
    let k = xa.ncols();
    let mut b = DVector::zeros(k);
    let mut ll = log_likelihood(&xa, y, &b);
    let mut converged = None;
    for it in 1..=MAX_IRLS_ITERATIONS {
        let p = (&xa * &b).map(inv_logit);
        let resid = DVector::from_iterator(y.len(), y.iter().zip(p.iter()).map(|(yi, pi)| f64::from(u8::from(*yi)) - pi));
        let w = p.map(|pi| pi * (1.0 - pi));
        let info = xa.tr_mul(&DMatrix::from_fn(xa.nrows(), k, |i, j| xa[(i, j)] * w[i]));
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Domain("logistic information matrix is singular (separation)".into()))?
            .solve(&xa.tr_mul(&resid));
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &b + &step * scale;
            let cand_ll = log_likelihood(&xa, y, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                let change = cand_ll - ll;
                b = cand;
                ll = cand_ll;
                accepted = true;
                if step.amax() * scale < 1e-10 || change.abs() < 1e-14 * ll.abs().max(1.0) {
                    converged = Some(it);
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            converged = Some(it);
        }
        if converged.is_some() {
            break;
        }
    }
    let iterations = converged.ok_or_else(|| {
        Error::Domain(format!(
            "logistic regression did not converge in {MAX_IRLS_ITERATIONS} iterations (separation)"
        ))
    })?;
    let p = (&xa * &b).map(inv_logit);
    if p.iter().any(|pi| *pi < SATURATION || *pi > 1.0 - SATURATION) {
        return Err(Error::Domain("fitted probabilities saturate at 0 or 1 (separation)".into()));
    }
    let w = p.map(|pi| pi * (1.0 - pi));
    let info = xa.tr_mul(&DMatrix::from_fn(xa.nrows(), k, |i, j| xa[(i, j)] * w[i]));
    let inv = info
        .cholesky()
        .ok_or_else(|| Error::Domain("logistic information matrix is singular (separation)".into()))?
        .inverse();
    let mut coefficients = vec![0.0; x.ncols()];
    let mut covariance = DMatrix::zeros(x.ncols(), x.ncols());
    for (a, &i) in active.iter().enumerate() {
        coefficients[i] = b[a];
        for (c, &j) in active.iter().enumerate() {
            covariance[(i, j)] = inv[(a, c)];
        }
    }
    Ok(LogisticFit {
        coefficients,
        covariance,
        iterations,
    })
}

/// Rubin-pooled estimate of one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCoefficient {
    pub name: String,
    pub estimate: f64,
    /// Mean within-imputation variance.
    pub within: f64,
    /// Between-imputation variance.
    pub between: f64,
    /// `within + (1 + 1/M) between`.
    pub total: f64,
    /// Degrees of freedom of the reference t distribution (infinite when
    /// `between` is 0).
    pub df: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimates {
    pub coefficients: Vec<PooledCoefficient>,
    /// Imputations that entered the pooling.
    pub imputations: usize,
    /// Imputations dropped because their outcomes were separated.
    pub dropped: usize,
}

impl PooledEstimates {
    pub fn get(&self, name: &str) -> Option<&PooledCoefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Pools per-imputation estimates and variances with Rubin's rules.
pub fn pool_rubin(names: &[String], fits: &[LogisticFit], dropped: usize) -> Result<PooledEstimates> {
    let m = fits.len();
    if m < 2 {
        return Err(Error::invalid(format!("Rubin pooling needs at least 2 imputations, got {m}")));
    }
    let mf = m as f64;
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let q: Vec<f64> = fits.iter().map(|f| f.coefficients[j]).collect();
            let estimate = q.iter().sum::<f64>() / mf;
            let within = fits.iter().map(|f| f.covariance[(j, j)]).sum::<f64>() / mf;
            let between = q.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (mf - 1.0);
            let inflated = (1.0 + 1.0 / mf) * between;
            let total = within + inflated;
            let df = if inflated > 0.0 {
                (mf - 1.0) * (1.0 + within / inflated).powi(2)
            } else {
                f64::INFINITY
            };
            let t = if df.is_finite() {
                StudentsT::new(0.0, 1.0, df)
                    .map(|d| d.inverse_cdf(0.975))
                    .unwrap_or(1.959963984540054)
            } else {
                1.959963984540054
            };
            let half = t * total.sqrt();
            PooledCoefficient {
                name: name.clone(),
                estimate,
                within,
                between,
                total,
                df,
                lower: estimate - half,
                upper: estimate + half,
            }
        })
        .collect();
    Ok(PooledEstimates {
        coefficients,
        imputations: m,
        dropped,
    })
}

/// Indices of `m` snapshots equally spaced over `available`.
pub fn select_imputations(available: usize, m: usize) -> Result<Vec<usize>> {
    if m > available {
        return Err(Error::invalid(format!(
            "{m} imputations requested but only {available} latent snapshots retained"
        )));
    }
    Ok((0..m).map(|k| k * available / m).collect())
}

fn distal_design(design: &DyadDesign, latents: &LatentState, set: &DistalSet, form: DistalForm) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = set
        .records
        .iter()
        .map(|r| form.reduce_features(&distal_traits(design, latents, r.dyad).features()))
        .collect();
    DMatrix::from_fn(rows.len(), form.num_free(), |i, j| rows[i][j])
}

/// Measurement fit plus the pooled distal regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialFit {
    pub measurement: PosteriorDraws,
    pub pooled: PooledEstimates,
}

/// Sequential estimator: measurement model first, then `m` logistic fits on
/// imputed traits pooled with Rubin's rules.
///
/// The distal form (interactions, exchangeability) is taken from `spec`; its
/// `distal` mode is ignored for the measurement fit. `config.latent_draws_every`
/// is overridden so that at least `m` snapshots are retained.
pub fn fit_sequential_mi(spec: &ModelSpec, data: &Dataset, config: &McmcConfig, m: usize) -> Result<SequentialFit> {
    if m < 2 {
        return Err(Error::invalid(format!("multiple imputation needs M >= 2, got {m}")));
    }
    let set = data
        .distal
        .as_ref()
        .filter(|d| !d.is_empty())
        .ok_or_else(|| Error::invalid("sequential estimation needs distal outcomes"))?;
    config.validate()?;
    let retained = config.retained();
    let per_chain = m.div_ceil(config.chains);
    if per_chain > retained {
        return Err(Error::invalid(format!(
            "{m} imputations need {per_chain} snapshots per chain but only {retained} draws are retained"
        )));
    }
    let measurement_spec = ModelSpec {
        distal: DistalMode::None,
        ..spec.clone()
    };
    let mcmc = McmcConfig {
        latent_draws_every: Some(retained / per_chain),
        ..config.clone()
    };
    let measurement = fit(&measurement_spec, data, &mcmc)?;
    let chosen = select_imputations(measurement.latent_draws.len(), m)?;
    let form = spec.distal_form();
    let y: Vec<bool> = set.records.iter().map(|r| r.outcome).collect();
    let fits: Vec<Result<LogisticFit>> = chosen
        .par_iter()
        .map(|&s| fit_logistic(&distal_design(&data.design, &measurement.latent_draws[s], set, form), &y))
        .collect();
    let mut ok = Vec::with_capacity(m);
    let mut dropped = 0;
    for (k, f) in fits.into_iter().enumerate() {
        match f {
            Ok(f) => ok.push(f),
            Err(Error::Domain(msg)) => {
                log::warn!("imputation {} dropped: {msg}", k + 1);
                dropped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if ok.len() < m.div_ceil(2) || ok.len() < 2 {
        return Err(Error::Diagnostic(format!(
            "only {} of {m} imputations could be fitted; the outcomes are separated by the traits",
            ok.len()
        )));
    }
    let pooled = pool_rubin(&form.free_names(), &ok, dropped)?;
    Ok(SequentialFit { measurement, pooled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DistalRecord;
    use crate::design::make_round_robin;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    /// One binary regressor: the MLE is the pair of cell log-odds and its
    /// covariance follows from the cell counts.
    #[test]
    fn binary_regressor_matches_closed_form() {
        // group 0: 30 of 100 successes, group 1: 55 of 80
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (g, n, s) in [(0.0, 100, 30), (1.0, 80, 55)] {
            for i in 0..n {
                rows.push([1.0, g]);
                y.push(i < s);
            }
        }
        let x = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        let f = fit_logistic(&x, &y).unwrap();
        let (p0, p1) = (0.3, 55.0 / 80.0);
        assert!((f.coefficients[0] - logit(p0)).abs() < 1e-9);
        assert!((f.coefficients[1] - (logit(p1) - logit(p0))).abs() < 1e-9);
        let v0 = 1.0 / (100.0 * p0 * (1.0 - p0));
        let v1 = 1.0 / (80.0 * p1 * (1.0 - p1));
        assert!((f.covariance[(0, 0)] - v0).abs() < 1e-9);
        assert!((f.covariance[(1, 1)] - (v0 + v1)).abs() < 1e-9);
        assert!((f.covariance[(0, 1)] + v0).abs() < 1e-9);
    }

    #[test]
    fn separated_outcomes_are_rejected() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 9.5 });
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert!(matches!(fit_logistic(&x, &y), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_columns_get_zero_coefficients() {
        let x = DMatrix::from_fn(40, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let f = fit_logistic(&x, &y).unwrap();
        assert!((f.coefficients[0] - logit(0.25)).abs() < 1e-10);
        assert_eq!(&f.coefficients[1..], &[0.0, 0.0]);
    }

    #[test]
    fn rubin_pooling_by_hand() {
        let fit = |q: f64, v: f64| LogisticFit {
            coefficients: vec![q],
            covariance: DMatrix::from_element(1, 1, v),
            iterations: 1,
        };
        let fits = [fit(1.0, 0.04), fit(1.2, 0.06), fit(1.4, 0.05)];
        let pooled = pool_rubin(&["b0".into()], &fits, 1).unwrap();
        let c = &pooled.coefficients[0];
        assert!((c.estimate - 1.2).abs() < 1e-12);
        assert!((c.within - 0.05).abs() < 1e-12);
        assert!((c.between - 0.04).abs() < 1e-12);
        let total = 0.05 + (4.0 / 3.0) * 0.04;
        assert!((c.total - total).abs() < 1e-12);
        let r: f64 = 0.05 / ((4.0 / 3.0) * 0.04);
        assert!((c.df - 2.0 * (1.0 + r).powi(2)).abs() < 1e-10);
        assert!(c.total >= c.within);
        assert!(c.lower < c.estimate && c.upper > c.estimate);
        assert_eq!((pooled.imputations, pooled.dropped), (3, 1));
        assert!(pool_rubin(&["b0".into()], &fits[..1], 0).is_err());
    }

    #[test]
    fn imputations_are_equally_spaced() {
        assert_eq!(select_imputations(40, 4).unwrap(), [0, 10, 20, 30]);
        assert_eq!(select_imputations(5, 5).unwrap(), [0, 1, 2, 3, 4]);
        assert!(select_imputations(3, 4).is_err());
    }

    #[test]
    fn zero_latents_give_the_intercept_only_model() {
        let design = make_round_robin(6).unwrap();
        let latents = LatentState::zeros(&design, 0);
        let set = DistalSet {
            records: (0..design.num_dyads())
                .map(|d| DistalRecord {
                    dyad: d,
                    outcome: d % 3 == 0,
                })
                .collect(),
        };
        let form = DistalForm::default();
        let x = distal_design(&design, &latents, &set, form);
        let y: Vec<bool> = set.records.iter().map(|r| r.outcome).collect();
        let fits: Vec<LogisticFit> = (0..3).map(|_| fit_logistic(&x, &y).unwrap()).collect();
        let pooled = pool_rubin(&form.free_names(), &fits, 0).unwrap();
        assert!((pooled.coefficients[0].estimate - logit(set.base_rate())).abs() < 1e-10);
        assert!(pooled.coefficients[1..].iter().all(|c| c.estimate == 0.0));
    }

    #[test]
    fn m_below_two_is_rejected() {
        let design = make_round_robin(4).unwrap();
        let data = Dataset::new(design, crate::data::ResponseSet::empty(vec!["1".into()], vec![2]), None).unwrap();
        let err = fit_sequential_mi(&ModelSpec::default(), &data, &McmcConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
