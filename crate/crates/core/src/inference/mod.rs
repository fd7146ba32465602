//! Posterior sampling, convergence diagnostics and summaries.
//!
//! [`fit`] runs independent chains of an adaptive Metropolis-within-Gibbs
//! sampler (see the `sampler` module docs for the block structure) and
//! returns every retained draw of the non-latent parameters. Latent traits
//! are kept as running moments for EAP scoring and, on request, as thinned
//! full snapshots for multiple imputation.
//!
//! Chains run in parallel on the current rayon pool. Each chain owns the
//! random stream `(seed, chain index)`, so results do not depend on the
//! number of threads.

mod diagnostics;
mod export;
mod proposal;
mod sampler;
mod scores;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::check_identification;
use crate::error::{Error, Result};
use crate::model::{DistalMode, LatentState, ModelSpec};

pub use diagnostics::{quantile_sorted, rhat, rhat_of_chains, summarize, PosteriorSummary, Rhat, SummaryRow};
pub use export::{read_draws_csv, read_summary_csv, write_draws_csv, write_summary_csv};
pub use scores::{
    eap_latent_scores, scores_from_moments, write_scores_csv, LatentMoments, LatentRole, LatentScore,
};

/// Sampler settings. `iterations` counts burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thinning: usize,
    /// Acceptance rate the proposal scales are tuned towards during burn-in.
    pub target_acceptance: f64,
    /// Iterations between two step-size adaptations.
    pub adaptation_window: usize,
    pub rhat_threshold: f64,
    /// Use split-chain R-hat.
    pub split_rhat: bool,
    /// Updates of each hyperparameter and distal block per iteration.
    pub hyper_steps: usize,
    /// Accumulate running moments of the latent traits.
    pub latent_moments: bool,
    /// Keep a full latent snapshot every this many retained draws.
    pub latent_draws_every: Option<usize>,
    /// Proceed (with a warning) when the design does not identify a free
    /// parameter.
    pub allow_unidentified: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            iterations: 2000,
            burn_in: 1000,
            seed: 1,
            thinning: 1,
            target_acceptance: 0.35,
            adaptation_window: 50,
            rhat_threshold: 1.05,
            split_rhat: false,
            hyper_steps: 3,
            latent_moments: true,
            latent_draws_every: None,
            allow_unidentified: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.chains == 0 {
            return fail("chains must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            return fail(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thinning == 0 || self.thinning > self.iterations - self.burn_in {
            return fail(format!(
                "thinning must lie in 1..={}",
                self.iterations - self.burn_in
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return fail("target_acceptance must lie in (0, 1)".into());
        }
        if self.adaptation_window == 0 || self.hyper_steps == 0 {
            return fail("adaptation_window and hyper_steps must be positive".into());
        }
        if !(self.rhat_threshold > 1.0) {
            return fail("rhat_threshold must exceed 1".into());
        }
        if self.latent_draws_every == Some(0) {
            return fail("latent_draws_every must be positive".into());
        }
        if self.chains > 0xFF_FFFF {
            return fail("too many chains".into());
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Retained draws of every non-latent parameter plus sampler metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    /// Parameters held at a fixed value rather than sampled.
    pub pinned: Vec<bool>,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// Absolute iteration number (1-based, counting burn-in) of each
    /// retained draw.
    pub iterations: Vec<u64>,
    /// Indexed `(chain * draws_per_chain + draw) * names.len() + parameter`.
    pub values: Vec<f64>,
    /// Joint log density at every retained draw, chain-major.
    pub lp: Vec<f64>,
    pub rhat: Vec<Rhat>,
    /// Post-burn-in acceptance rate per block kind.
    pub acceptance: BTreeMap<String, f64>,
    pub latent_moments: Option<LatentMoments>,
    /// Latent snapshots (deviations from the mean structure), chain-major.
    pub latent_draws: Vec<LatentState>,
    pub config: McmcConfig,
}

impl PosteriorDraws {
    /// Draws read back from storage; sampler metadata is left empty and
    /// R-hat is recomputed.
    pub fn from_values(
        names: Vec<String>,
        chains: usize,
        iterations: Vec<u64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let draws_per_chain = iterations.len();
        if values.len() != chains * draws_per_chain * names.len() {
            return Err(Error::invalid("draw array does not match its dimensions"));
        }
        let mut d = PosteriorDraws {
            pinned: vec![false; names.len()],
            names,
            chains,
            draws_per_chain,
            iterations,
            values,
            lp: Vec::new(),
            rhat: Vec::new(),
            acceptance: BTreeMap::new(),
            latent_moments: None,
            latent_draws: Vec::new(),
            config: McmcConfig::default(),
        };
        d.rhat = d.compute_rhat();
        Ok(d)
    }

    fn compute_rhat(&self) -> Vec<Rhat> {
        (0..self.names.len())
            .map(|p| rhat_of_chains(&self.chain_series(p), self.config.split_rhat))
            .collect()
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, chain: usize, draw: usize, parameter: usize) -> f64 {
        self.values[(chain * self.draws_per_chain + draw) * self.names.len() + parameter]
    }

    /// Draws of one parameter, one vector per chain.
    pub fn chain_series(&self, parameter: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (0..self.draws_per_chain)
                    .map(|t| self.value(c, t, parameter))
                    .collect()
            })
            .collect()
    }

    /// All draws of a named parameter, chain-major.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let p = self.parameter_index(name)?;
        Some(self.chain_series(p).concat())
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    /// Names whose R-hat is not below the threshold, ignoring pinned
    /// parameters.
    pub fn unconverged(&self) -> Vec<(&str, Rhat)> {
        self.names
            .iter()
            .zip(&self.rhat)
            .zip(&self.pinned)
            .filter(|((_, r), pinned)| !**pinned && !r.below(self.config.rhat_threshold))
            .map(|((n, r), _)| (n.as_str(), *r))
            .collect()
    }
}

/// Samples the posterior of `spec` given `data`.
///
/// Distal outcomes enter the likelihood only when `spec.distal` is
/// [`DistalMode::Joint`]. The design must identify every free
/// hyperparameter unless `config.allow_unidentified` is set; held-fixed
/// parameters are listed in `spec.pinned` by name.
pub fn fit(spec: &ModelSpec, data: &Dataset, config: &McmcConfig) -> Result<PosteriorDraws> {
    let problem = build_problem(spec, data, config)?;
    let outputs: Vec<sampler::ChainOutput> = (0..config.chains as u32)
        .into_par_iter()
        .map(|c| sampler::run_chain(&problem, c))
        .collect::<Result<_>>()?;
    Ok(assemble(&problem, config, outputs))
}

fn build_problem(spec: &ModelSpec, data: &Dataset, config: &McmcConfig) -> Result<sampler::Problem> {
    config.validate()?;
    spec.validate()?;
    let distal = match spec.distal {
        DistalMode::Joint => Some(data.distal.as_ref().filter(|d| !d.records.is_empty()).ok_or_else(
            || Error::Specification("joint distal model needs distal outcomes".into()),
        )?),
        _ => None,
    };
    data.responses.validate(Some(&data.design))?;
    let prepared = crate::workflows::extensions::prepare(spec, data)?;

    let names = sampler::parameter_names(
        spec,
        &data.responses,
        prepared.covariates.as_ref(),
        distal.is_some(),
    );
    if let Some(unknown) = spec.pinned.keys().find(|k| !names.contains(k)) {
        return Err(Error::Specification(format!(
            "pinned parameter '{unknown}' is not part of the model"
        )));
    }
    check_free_identified(spec, data, config)?;

    sampler::Problem::new(sampler::Setup {
        design: &data.design,
        responses: &data.responses,
        distal,
        spec,
        mean: prepared.mean,
        covariates: prepared.covariates,
        config: config.clone(),
    })
}

fn check_free_identified(spec: &ModelSpec, data: &Dataset, config: &McmcConfig) -> Result<()> {
    let report = check_identification(&data.design);
    let bad: Vec<String> = report
        .parameters()
        .iter()
        .filter(|(name, status)| !status.is_identified() && spec.pinned(name).is_none())
        .map(|(name, status)| format!("{name} ({status})"))
        .collect();
    if bad.is_empty() {
        return Ok(());
    }
    let missing: Vec<String> = report.missing_patterns().iter().map(|r| r.to_string()).collect();
    let msg = format!(
        "design does not identify {}; missing covariance patterns: {}",
        bad.join(", "),
        if missing.is_empty() { "none".into() } else { missing.join(", ") }
    );
    if config.allow_unidentified {
        log::warn!("{msg}; proceeding because allow_unidentified is set");
        Ok(())
    } else {
        Err(Error::Identification(msg))
    }
}

fn assemble(problem: &sampler::Problem, config: &McmcConfig, outputs: Vec<sampler::ChainOutput>) -> PosteriorDraws {
    let retained = config.retained();
    let iterations = (0..retained)
        .map(|t| (config.burn_in + (t + 1) * config.thinning) as u64)
        .collect();
    let mut values = Vec::with_capacity(outputs.len() * retained * problem.names.len());
    let mut lp = Vec::with_capacity(outputs.len() * retained);
    let mut counts: BTreeMap<&'static str, (u64, u64)> = BTreeMap::new();
    let mut moments: Option<LatentMoments> = None;
    let mut latent_draws = Vec::new();
    for out in outputs {
        values.extend(out.values);
        lp.extend(out.lp);
        for (k, a, p) in out.acceptance {
            let e = counts.entry(k).or_default();
            e.0 += a;
            e.1 += p;
        }
        if let Some(m) = out.moments {
            match &mut moments {
                Some(acc) => acc.merge(&m),
                None => moments = Some(m),
            }
        }
        latent_draws.extend(out.snapshots);
    }
    let mut draws = PosteriorDraws {
        names: problem.names.clone(),
        pinned: problem.pinned.iter().map(Option::is_some).collect(),
        chains: config.chains,
        draws_per_chain: retained,
        iterations,
        values,
        lp,
        rhat: Vec::new(),
        acceptance: counts
            .into_iter()
            .map(|(k, (a, p))| (k.to_string(), a as f64 / p as f64))
            .collect(),
        latent_moments: moments,
        latent_draws,
        config: config.clone(),
    };
    draws.rhat = draws.compute_rhat();
    draws
}

#[cfg(test)]
mod tests;
