//! Simulation studies: single-run calibration and multi-replication recovery.
//!
//! A replication simulates one dataset from a [`SimulationConfig`] under the
//! seed `replication_seed(master, r)`, fits it, and keeps the posterior mean,
//! posterior SD and 95% interval of every parameter with a known generating
//! value. The report reduces the replications per parameter:
//!
//! ```text
//! bias              = mean(est) - truth
//! MC error of bias  = sd(est) / sqrt(R)
//! rel. SE bias      = mean(post_sd) / sd(est) - 1
//! MC error of rel.  = (mean(post_sd) / sd(est))
//!                     * sqrt( var(post_sd) / (R mean(post_sd)^2) + 1 / (2 (R - 1)) )
//! coverage          = share of replications whose interval holds the truth
//! ```
//!
//! `sd` and `var` use the `R - 1` denominator. The relative SE bias error is
//! the delta-method error of a ratio of the mean posterior SD and the
//! empirical SD, treating the two as independent and using
//! `var(sd(est)) ~ sd(est)^2 / (2 (R - 1))`.
//!
//! Replications are reduced in index order, so the report does not depend on
//! the order in which they finished, and it can be recomputed from the
//! per-replication CSV files alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::design::io::{create, csv_error, csv_reader, open, parse_error, Header};
use crate::error::{Error, Result};
use crate::inference::{fit, summarize, McmcConfig, Rhat};
use crate::model::ModelSpec;
use crate::rng::{replication_seed, Purpose, Substream};
use crate::simulate::{simulate, SimulationConfig};

/// Posterior summary of one parameter with a known generating value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub parameter: String,
    pub truth: f64,
    pub estimate: f64,
    pub posterior_sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: Rhat,
}

impl EstimateRow {
    pub fn covers(&self) -> bool {
        self.q025 <= self.truth && self.truth <= self.q975
    }
}

/// Truth against the 95% credible interval for every parameter of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub rows: Vec<EstimateRow>,
    pub rhat_threshold: f64,
}

impl CalibrationTable {
    pub fn covered(&self) -> usize {
        self.rows.iter().filter(|r| r.covers()).count()
    }

    pub fn coverage(&self) -> f64 {
        self.covered() as f64 / self.rows.len() as f64
    }

    /// Rows whose R-hat is not below the threshold (including indeterminate
    /// ones).
    pub fn unconverged(&self) -> Vec<&EstimateRow> {
        self.rows
            .iter()
            .filter(|r| !r.rhat.below(self.rhat_threshold))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<18} {:>9} {:>9} {:>9} {:>9} {:>8}\n",
            "parameter", "truth", "mean", "q2.5", "q97.5", "rhat"
        );
        for r in &self.rows {
            let mut flags = Vec::new();
            if !r.covers() {
                flags.push("outside");
            }
            if !r.rhat.below(self.rhat_threshold) {
                flags.push("unconverged");
            }
            let _ = writeln!(
                out,
                "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8} {}",
                r.parameter,
                r.truth,
                r.estimate,
                r.q025,
                r.q975,
                r.rhat.to_string(),
                flags.join(",")
            );
        }
        let _ = writeln!(
            out,
            "{} of {} intervals contain the truth ({:.1}%); {} parameters with R-hat >= {}",
            self.covered(),
            self.rows.len(),
            100.0 * self.coverage(),
            self.unconverged().len(),
            self.rhat_threshold
        );
        out
    }
}

fn posterior_rows(sim_config: &SimulationConfig, spec: &ModelSpec, mcmc: &McmcConfig) -> Result<Vec<EstimateRow>> {
    let sim = simulate(sim_config)?;
    let draws = fit(spec, &sim.data, mcmc)?;
    let summary = summarize(&draws)?;
    let truth = sim.truth.parameter_values();
    Ok(summary
        .rows
        .iter()
        .zip(&draws.pinned)
        .filter(|(_, pinned)| !**pinned)
        .filter_map(|(r, _)| {
            truth.get(&r.parameter).map(|t| EstimateRow {
                parameter: r.parameter.clone(),
                truth: *t,
                estimate: r.mean,
                posterior_sd: r.sd,
                q025: r.q025,
                q975: r.q975,
                rhat: r.rhat,
            })
        })
        .collect())
}

/// One simulate-then-fit cycle. Non-convergence is reported in the table,
/// not treated as an error.
pub fn run_calibration(sim_config: &SimulationConfig, spec: &ModelSpec, mcmc: &McmcConfig) -> Result<CalibrationTable> {
    let rows = posterior_rows(sim_config, spec, mcmc)?;
    if rows.is_empty() {
        return Err(Error::invalid("no fitted parameter has a generating value"));
    }
    Ok(CalibrationTable {
        rows,
        rhat_threshold: mcmc.rhat_threshold,
    })
}

/// How each replication turns data into estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Simulate and fit the model.
    #[default]
    Posterior,
    /// Known-answer mode that bypasses the sampler: every parameter is
    /// estimated by the mean of `n` draws from `N(truth, 1)` with a t
    /// interval. Checks the study and report machinery in seconds.
    SelfTest { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub simulation: SimulationConfig,
    pub spec: ModelSpec,
    pub mcmc: McmcConfig,
    pub replications: usize,
    pub master_seed: u64,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: u32,
    pub seed: u64,
    pub rows: Vec<EstimateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub index: u32,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStudy {
    pub master_seed: u64,
    pub results: Vec<ReplicationResult>,
    pub failures: Vec<ReplicationFailure>,
}

impl ReplicationStudy {
    pub fn report(&self) -> Result<RecoveryReport> {
        RecoveryReport::from_results(&self.results, self.failures.len())
    }
}

fn self_test_rows(truth: &BTreeMap<String, f64>, n: usize, master: u64, index: u32) -> Result<Vec<EstimateRow>> {
    if n < 2 {
        return Err(Error::invalid("self-test needs at least 2 draws per estimate"));
    }
    let mut rng = Substream::new(master, Purpose::SelfTest).replication(index).rng();
    let nf = n as f64;
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::invalid(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(truth
        .iter()
        .map(|(name, mu)| {
            let xs: Vec<f64> = (0..n).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect();
            let mean = xs.iter().sum::<f64>() / nf;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let se = (var / nf).sqrt();
            EstimateRow {
                parameter: name.clone(),
                truth: *mu,
                estimate: mean,
                posterior_sd: se,
                q025: mean - t * se,
                q975: mean + t * se,
                rhat: Rhat::Value(1.0),
            }
        })
        .collect())
}

/// Runs `replications` independent simulate-then-fit cycles concurrently.
/// A replication that fails is recorded with its message and excluded.
pub fn run_replications(config: &StudyConfig) -> Result<ReplicationStudy> {
    if config.replications < 2 {
        return Err(Error::invalid(format!(
            "a recovery study needs at least 2 replications, got {}",
            config.replications
        )));
    }
    let truth = config.simulation.truth_values();
    let outcomes: Vec<(u32, u64, Result<Vec<EstimateRow>>)> = (0..config.replications as u32)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(config.master_seed, r);
            let rows = match config.estimator {
                Estimator::Posterior => {
                    let sim = SimulationConfig {
                        seed,
                        ..config.simulation.clone()
                    };
                    let mcmc = McmcConfig {
                        seed,
                        ..config.mcmc.clone()
                    };
                    posterior_rows(&sim, &config.spec, &mcmc)
                }
                Estimator::SelfTest { n } => self_test_rows(&truth, n, config.master_seed, r),
            };
            (r, seed, rows)
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (index, seed, rows) in outcomes {
        match rows {
            Ok(rows) => results.push(ReplicationResult { index, seed, rows }),
            Err(e) => {
                log::warn!("replication {index} failed: {e}");
                failures.push(ReplicationFailure {
                    index,
                    seed,
                    message: e.to_string(),
                })
            }
        }
    }
    if results.len() < 2 {
        return Err(Error::Diagnostic(format!(
            "only {} of {} replications succeeded",
            results.len(),
            config.replications
        )));
    }
    Ok(ReplicationStudy {
        master_seed: config.master_seed,
        results,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub truth: f64,
    pub replications: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub bias_mc_error: f64,
    pub mean_posterior_sd: f64,
    pub empirical_sd: f64,
    pub rel_se_bias: f64,
    pub rel_se_bias_mc_error: f64,
    pub coverage: f64,
}

impl ReportRow {
    /// Whether `|bias| <= z * MC error`.
    pub fn bias_within(&self, z: f64) -> bool {
        self.bias.abs() <= z * self.bias_mc_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rows: Vec<ReportRow>,
    pub replications: usize,
    pub failed: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

impl RecoveryReport {
    /// Reduces replication results (in index order) to one row per
    /// parameter, in order of first appearance.
    pub fn from_results(results: &[ReplicationResult], failed: usize) -> Result<Self> {
        let mut sorted: Vec<&ReplicationResult> = results.iter().collect();
        sorted.sort_by_key(|r| r.index);
        let mut order: Vec<&str> = Vec::new();
        let mut by_param: BTreeMap<&str, Vec<&EstimateRow>> = BTreeMap::new();
        for res in &sorted {
            for row in &res.rows {
                let entry = by_param.entry(row.parameter.as_str()).or_insert_with(|| {
                    order.push(row.parameter.as_str());
                    Vec::new()
                });
                entry.push(row);
            }
        }
        let rows = order
            .into_iter()
            .map(|name| {
                let rows = &by_param[name];
                let r = rows.len();
                if r < 2 {
                    return Err(Error::invalid(format!("parameter {name} has fewer than 2 replications")));
                }
                let rf = r as f64;
                let est: Vec<f64> = rows.iter().map(|x| x.estimate).collect();
                let psd: Vec<f64> = rows.iter().map(|x| x.posterior_sd).collect();
                let truth = rows[0].truth;
                let mean_estimate = mean(&est);
                let empirical_sd = sample_var(&est).sqrt();
                let mean_posterior_sd = mean(&psd);
                let ratio = mean_posterior_sd / empirical_sd;
                let rel_mc = ratio * (sample_var(&psd) / (rf * mean_posterior_sd.powi(2)) + 1.0 / (2.0 * (rf - 1.0))).sqrt();
                Ok(ReportRow {
                    parameter: name.to_string(),
                    truth,
                    replications: r,
                    mean_estimate,
                    bias: mean_estimate - truth,
                    bias_mc_error: empirical_sd / rf.sqrt(),
                    mean_posterior_sd,
                    empirical_sd,
                    rel_se_bias: ratio - 1.0,
                    rel_se_bias_mc_error: rel_mc,
                    coverage: rows.iter().filter(|x| x.covers()).count() as f64 / rf,
                })
            })
            .collect::<Result<_>>()?;
        Ok(RecoveryReport {
            rows,
            replications: sorted.len(),
            failed,
        })
    }

    pub fn get(&self, parameter: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }
}

/// Text table of the report, restricted to `filter` unless it is empty.
pub fn render_report(report: &RecoveryReport, filter: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} replications ({} failed)\n\
         # bias = mean(est) - truth; bias MC error = sd(est)/sqrt(R)\n\
         # rel SE bias = mean(post sd)/sd(est) - 1; MC error by the delta method\n\
         # error bars below are +-1.96 MC errors",
        report.replications, report.failed
    );
    let _ = writeln!(
        out,
        "{:<18} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}",
        "parameter", "truth", "mean", "bias", "bias_mce", "post_sd", "emp_sd", "rel_se", "rel_mce", "cover"
    );
    for r in report
        .rows
        .iter()
        .filter(|r| filter.is_empty() || filter.contains(&r.parameter))
    {
        let _ = writeln!(
            out,
            "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.3} {:>8.3} {:>8.3}",
            r.parameter,
            r.truth,
            r.mean_estimate,
            r.bias,
            r.bias_mc_error,
            r.mean_posterior_sd,
            r.empirical_sd,
            r.rel_se_bias,
            r.rel_se_bias_mc_error,
            r.coverage
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StudyManifest {
    tool_version: String,
    config_hash: String,
    master_seed: u64,
    replications: Vec<ManifestEntry>,
    failures: Vec<ReplicationFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    index: u32,
    seed: u64,
    file: PathBuf,
}

const ESTIMATE_COLUMNS: [&str; 7] = ["parameter", "truth", "estimate", "posterior_sd", "q2.5", "q97.5", "rhat"];

fn write_estimates(rows: &[EstimateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ESTIMATE_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.parameter.clone(),
            r.truth.to_string(),
            r.estimate.to_string(),
            r.posterior_sd.to_string(),
            r.q025.to_string(),
            r.q975.to_string(),
            r.rhat.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let cols: Vec<usize> = ESTIMATE_COLUMNS
        .iter()
        .map(|c| header.require(c, path))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |k: usize| -> Result<f64> {
            rec[cols[k]]
                .parse()
                .map_err(|_| parse_error(path, &rec, format!("'{}' is not a number", &rec[cols[k]])))
        };
        let rhat = match &rec[cols[6]] {
            "indeterminate" => Rhat::Indeterminate,
            _ => Rhat::Value(num(6)?),
        };
        rows.push(EstimateRow {
            parameter: rec[cols[0]].to_string(),
            truth: num(1)?,
            estimate: num(2)?,
            posterior_sd: num(3)?,
            q025: num(4)?,
            q975: num(5)?,
            rhat,
        });
    }
    Ok(rows)
}

fn write_plot(report: &RecoveryReport, path: &Path, value: impl Fn(&ReportRow) -> (f64, f64)) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["parameter", "value", "lower", "upper"])
        .map_err(|e| csv_error(path, e))?;
    for r in &report.rows {
        let (v, mce) = value(r);
        w.write_record([
            r.parameter.clone(),
            v.to_string(),
            (v - 1.96 * mce).to_string(),
            (v + 1.96 * mce).to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_report_csv(report: &RecoveryReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "parameter",
        "truth",
        "replications",
        "mean_estimate",
        "bias",
        "bias_mc_error",
        "mean_posterior_sd",
        "empirical_sd",
        "rel_se_bias",
        "rel_se_bias_mc_error",
        "coverage",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in &report.rows {
        w.write_record([
            r.parameter.clone(),
            r.truth.to_string(),
            r.replications.to_string(),
            r.mean_estimate.to_string(),
            r.bias.to_string(),
            r.bias_mc_error.to_string(),
            r.mean_posterior_sd.to_string(),
            r.empirical_sd.to_string(),
            r.rel_se_bias.to_string(),
            r.rel_se_bias_mc_error.to_string(),
            r.coverage.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Persists a study under `dir`:
///
/// * `replications/rep_NNNN.csv`: one estimate file per replication
/// * `study.json`: tool version, `config_hash`, master seed, per-replication
///   seeds and files, failures
/// * `report.csv`, `report.txt`: the reduced report
/// * `plot_bias.csv`, `plot_rel_se_bias.csv`: value with +-1.96 MC error bars
pub fn write_study(study: &ReplicationStudy, dir: &Path, config_hash: &str) -> Result<RecoveryReport> {
    let reps = dir.join("replications");
    std::fs::create_dir_all(&reps).map_err(|e| Error::io(&reps, e))?;
    let mut entries = Vec::new();
    for res in &study.results {
        let file = PathBuf::from("replications").join(format!("rep_{:04}.csv", res.index + 1));
        write_estimates(&res.rows, &dir.join(&file))?;
        entries.push(ManifestEntry {
            index: res.index,
            seed: res.seed,
            file,
        });
    }
    let manifest = StudyManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash.to_string(),
        master_seed: study.master_seed,
        replications: entries,
        failures: study.failures.clone(),
    };
    let path = dir.join("study.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    let report = study.report()?;
    write_report_csv(&report, &dir.join("report.csv"))?;
    let path = dir.join("report.txt");
    std::fs::write(&path, render_report(&report, &[])).map_err(|e| Error::io(&path, e))?;
    write_plot(&report, &dir.join("plot_bias.csv"), |r| (r.bias, r.bias_mc_error))?;
    write_plot(&report, &dir.join("plot_rel_se_bias.csv"), |r| {
        (r.rel_se_bias, r.rel_se_bias_mc_error)
    })?;
    Ok(report)
}

/// Reads a study written by [`write_study`].
pub fn read_study(dir: &Path) -> Result<ReplicationStudy> {
    let path = dir.join("study.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: StudyManifest = serde_json::from_str(&text)?;
    let results = manifest
        .replications
        .iter()
        .map(|e| {
            Ok(ReplicationResult {
                index: e.index,
                seed: e.seed,
                rows: read_estimates(&dir.join(&e.file))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ReplicationStudy {
        master_seed: manifest.master_seed,
        results,
        failures: manifest.failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::make_round_robin;
    use crate::model::{Hyperparameters, ItemBank};

    fn self_test_config(replications: usize) -> StudyConfig {
        let sim = SimulationConfig::new(
            make_round_robin(4).unwrap(),
            ItemBank::five_by_five(),
            Hyperparameters::speed_dating(),
            1,
        );
        StudyConfig {
            spec: sim.implied_spec(),
            simulation: sim,
            mcmc: McmcConfig::default(),
            replications,
            master_seed: 99,
            estimator: Estimator::SelfTest { n: 30 },
        }
    }

    fn row(parameter: &str, truth: f64, estimate: f64, sd: f64) -> EstimateRow {
        EstimateRow {
            parameter: parameter.into(),
            truth,
            estimate,
            posterior_sd: sd,
            q025: estimate - 2.0 * sd,
            q975: estimate + 2.0 * sd,
            rhat: Rhat::Value(1.0),
        }
    }

    #[test]
    fn report_formulas_by_hand() {
        let results: Vec<ReplicationResult> = [(1.0, 0.5), (2.0, 0.7), (4.0, 0.6)]
            .iter()
            .enumerate()
            .map(|(i, (e, s))| ReplicationResult {
                index: i as u32,
                seed: i as u64,
                rows: vec![row("x", 2.0, *e, *s)],
            })
            .collect();
        let report = RecoveryReport::from_results(&results, 1).unwrap();
        let r = report.get("x").unwrap();
        // estimates 1, 2, 4 around a mean of 7/3
        let m: f64 = 7.0 / 3.0;
        let emp_sd = (((1.0 - m).powi(2) + (2.0 - m).powi(2) + (4.0 - m).powi(2)) / 2.0).sqrt();
        assert!((r.bias - (7.0 / 3.0 - 2.0)).abs() < 1e-12);
        assert!((r.empirical_sd - emp_sd).abs() < 1e-12);
        assert!((r.bias_mc_error - emp_sd / 3f64.sqrt()).abs() < 1e-12);
        assert!((r.rel_se_bias - (0.6 / emp_sd - 1.0)).abs() < 1e-12);
        let ratio = 0.6 / emp_sd;
        let var_psd = 0.01;
        let mce = ratio * (var_psd / (3.0 * 0.36) + 1.0 / 4.0f64).sqrt();
        assert!((r.rel_se_bias_mc_error - mce).abs() < 1e-12);
        // intervals: [0,2] covers 2, [0.6,3.4] covers, [2.8,5.2] does not
        assert!((r.coverage - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((report.replications, report.failed), (3, 1));
    }

    #[test]
    fn self_test_is_unbiased_and_covers_nominally() {
        let study = run_replications(&self_test_config(200)).unwrap();
        let report = study.report().unwrap();
        let within = report.rows.iter().filter(|r| r.bias_within(1.96)).count();
        assert!(within as f64 >= 0.9 * report.rows.len() as f64, "{within} of {}", report.rows.len());
        let coverage = mean(&report.rows.iter().map(|r| r.coverage).collect::<Vec<_>>());
        // pooled over parameters; binomial SE of 200 replications is 0.015
        assert!((coverage - 0.95).abs() < 3.0 * 0.015, "{coverage}");
    }

    #[test]
    fn report_ignores_replication_order_and_round_trips_through_files() {
        let study = run_replications(&self_test_config(5)).unwrap();
        let mut shuffled = study.clone();
        shuffled.results.reverse();
        assert_eq!(study.report().unwrap(), shuffled.report().unwrap());

        let dir = tempfile::tempdir().unwrap();
        let report = write_study(&study, dir.path(), "abc").unwrap();
        let back = read_study(dir.path()).unwrap();
        assert_eq!(back, study);
        assert_eq!(back.report().unwrap(), report);
        let one = render_report(&report, &["sigma_alpha".to_string()]);
        assert_eq!(one.lines().filter(|l| !l.starts_with('#')).count(), 2);
        assert_eq!(
            render_report(&report, &[]).lines().count(),
            5 + report.rows.len()
        );
    }

    #[test]
    fn minimum_replications() {
        assert!(run_replications(&self_test_config(1)).is_err());
        let study = run_replications(&self_test_config(2)).unwrap();
        let report = study.report().unwrap();
        assert!(report.rows.iter().all(|r| r.bias_mc_error.is_finite()));
    }
}
