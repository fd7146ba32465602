//! Model specification: which extensions are switched on and how the priors
//! are set up.
//!
//! In TOML the specification is a flat table, usually under `[model]`:
//!
//! ```toml
//! distal = "joint"            # "none" | "joint" | "sequential"
//! distal_interactions = true  # false pins b7 = b8 = b9 = 0
//! exchangeable_distal = false # true ties b1 = b2, b3 = b4, b5 = b6
//! gender_mean = false         # shift the actor mean of males by mu_male
//! cluster_intercept = false   # add u_j ~ N(0, sigma_u^2) for within-cluster dyads
//! alpha_covariates = []       # individual covariate columns in the actor mean
//! beta_covariates = []        # individual covariate columns in the partner mean
//! gamma_covariates = []       # dyad covariate columns in the dyadic mean
//!
//! [model.prior]
//! variance = "flat_variance"  # or "flat_sd"
//! # sd_upper_bound = 50.0
//! # distal_bound = 20.0     # |b_k| <= 20 for every distal coefficient
//!
//! [model.pinned]
//! # mu_male = 0.0
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::distal::DistalForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistalMode {
    #[default]
    None,
    Joint,
    Sequential,
}

impl std::str::FromStr for DistalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DistalMode::None),
            "joint" => Ok(DistalMode::Joint),
            "sequential" => Ok(DistalMode::Sequential),
            _ => Err(Error::invalid(format!(
                "distal mode '{s}' is not one of none, joint, sequential"
            ))),
        }
    }
}

/// Scale on which the improper uniform prior of the three SDs is flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariancePrior {
    /// Uniform on `[0, inf)` for each variance.
    #[default]
    FlatVariance,
    /// Uniform on `[0, inf)` for each standard deviation.
    FlatSd,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub variance: VariancePrior,
    /// Optional finite upper bound on every SD, including `sigma_u`.
    pub sd_upper_bound: Option<f64>,
    /// Optional finite bound on the absolute value of every distal
    /// coefficient. With a flat prior the distal coefficients have no
    /// proper posterior when the traits are measured by few items: the
    /// latent traits can move to separate the outcomes, so the likelihood
    /// stays bounded away from zero as the coefficients grow.
    pub distal_bound: Option<f64>,
}

impl PriorConfig {
    /// Whether an SD lies inside the prior support.
    pub fn sd_in_support(&self, sd: f64) -> bool {
        sd.is_finite() && sd >= 0.0 && self.sd_upper_bound.is_none_or(|u| sd <= u)
    }

    /// Whether a distal coefficient lies inside the prior support.
    pub fn distal_in_support(&self, b: f64) -> bool {
        b.is_finite() && self.distal_bound.is_none_or(|u| b.abs() <= u)
    }

    /// Log-density of `ln(sd)` implied by the flat prior, up to a constant.
    pub fn log_sd_jacobian(&self, log_sd: f64) -> f64 {
        match self.variance {
            VariancePrior::FlatVariance => 2.0 * log_sd,
            VariancePrior::FlatSd => log_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub distal: DistalMode,
    pub distal_interactions: bool,
    pub exchangeable_distal: bool,
    pub gender_mean: bool,
    pub cluster_intercept: bool,
    pub alpha_covariates: Vec<String>,
    pub beta_covariates: Vec<String>,
    pub gamma_covariates: Vec<String>,
    pub prior: PriorConfig,
    /// Parameters held fixed at the given value instead of being sampled,
    /// keyed by their summary name (e.g. `mu_male`, `sigma_u`, `b7`).
    pub pinned: BTreeMap<String, f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            distal: DistalMode::None,
            distal_interactions: true,
            exchangeable_distal: false,
            gender_mean: false,
            cluster_intercept: false,
            alpha_covariates: Vec::new(),
            beta_covariates: Vec::new(),
            gamma_covariates: Vec::new(),
            prior: PriorConfig::default(),
            pinned: BTreeMap::new(),
        }
    }
}

impl ModelSpec {
    pub fn joint() -> Self {
        ModelSpec {
            distal: DistalMode::Joint,
            ..ModelSpec::default()
        }
    }

    pub fn distal_form(&self) -> DistalForm {
        DistalForm {
            interactions: self.distal_interactions,
            exchangeable: self.exchangeable_distal,
        }
    }

    pub fn has_covariates(&self) -> bool {
        !(self.alpha_covariates.is_empty()
            && self.beta_covariates.is_empty()
            && self.gamma_covariates.is_empty())
    }

    pub fn pinned(&self, name: &str) -> Option<f64> {
        self.pinned.get(name).copied()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Specification(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, bound) in [
            ("sd_upper_bound", self.prior.sd_upper_bound),
            ("distal_bound", self.prior.distal_bound),
        ] {
            if let Some(u) = bound {
                if !(u.is_finite() && u > 0.0) {
                    return Err(Error::Specification(format!(
                        "{name} must be positive and finite, got {u}"
                    )));
                }
            }
        }
        for (name, v) in &self.pinned {
            if !v.is_finite() {
                return Err(Error::Specification(format!("pinned {name} is not finite")));
            }
            let is_sd = name.starts_with("sigma_");
            let is_rho = name.starts_with("rho_");
            let is_distal = name.strip_prefix('b').is_some_and(|k| k.parse::<u8>().is_ok());
            if (is_sd && !self.prior.sd_in_support(*v))
                || (is_rho && v.abs() > 1.0)
                || (is_distal && !self.prior.distal_in_support(*v))
            {
                return Err(Error::Specification(format!(
                    "pinned {name} = {v} lies outside the prior support"
                )));
            }
        }
        Ok(())
    }
}
