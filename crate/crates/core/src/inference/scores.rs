//! Posterior means and SDs of the latent traits (EAP scores).
//!
//! Chains accumulate running moments of every latent trait instead of
//! storing its draws. Scores include the mean structure: an actor score is
//! `alpha_i + x_alpha[i]'c_alpha + male_i * mu_male`, a partner score
//! `beta_i + x_beta[i]'c_beta`, a dyadic score `gamma_ap + x_gamma[ap]'c_gamma`.
//! Cluster intercepts are reported separately.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::io::{create, csv_error};
use crate::design::DyadDesign;
use crate::error::{Error, Result};

use super::PosteriorDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentRole {
    Alpha,
    Beta,
    Gamma,
    U,
}

impl fmt::Display for LatentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatentRole::Alpha => "alpha",
            LatentRole::Beta => "beta",
            LatentRole::Gamma => "gamma",
            LatentRole::U => "u",
        })
    }
}

/// Running mean and sum of squared deviations of each latent trait (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMoments {
    pub ids: Vec<String>,
    pub roles: Vec<LatentRole>,
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl LatentMoments {
    /// Empty moments for every individual (twice), every directed dyad and
    /// every cluster label. Dyad ids are written `actor:partner`.
    pub fn for_design(design: &DyadDesign, clusters: &[u32]) -> Self {
        let ind = design.individuals();
        let mut ids = Vec::new();
        let mut roles = Vec::new();
        for role in [LatentRole::Alpha, LatentRole::Beta] {
            for i in ind {
                ids.push(i.id.clone());
                roles.push(role);
            }
        }
        for d in design.dyads() {
            ids.push(format!("{}:{}", ind[d.actor].id, ind[d.partner].id));
            roles.push(LatentRole::Gamma);
        }
        for c in clusters {
            ids.push(c.to_string());
            roles.push(LatentRole::U);
        }
        let n = ids.len();
        LatentMoments {
            ids,
            roles,
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub(crate) fn empty_like(&self) -> Self {
        LatentMoments {
            ids: self.ids.clone(),
            roles: self.roles.clone(),
            count: 0,
            mean: vec![0.0; self.ids.len()],
            m2: vec![0.0; self.ids.len()],
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Pooled moments of two independent sets of draws.
    pub(crate) fn merge(&mut self, other: &LatentMoments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * nb / n;
            self.m2[k] += other.m2[k] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn sd(&self, k: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2[k] / (self.count - 1) as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScore {
    pub id: String,
    pub role: LatentRole,
    pub eap: f64,
    pub posterior_sd: f64,
}

/// EAP and posterior SD of every actor, partner, dyadic and cluster trait.
pub fn eap_latent_scores(draws: &PosteriorDraws) -> Result<Vec<LatentScore>> {
    let m = draws.latent_moments.as_ref().ok_or_else(|| {
        Error::InvalidState("latent traits were not retained; refit with latent_moments = true".into())
    })?;
    scores_from_moments(m)
}

pub fn scores_from_moments(m: &LatentMoments) -> Result<Vec<LatentScore>> {
    if m.count == 0 {
        return Err(Error::InvalidState("latent moments hold no draws".into()));
    }
    Ok((0..m.ids.len())
        .map(|k| LatentScore {
            id: m.ids[k].clone(),
            role: m.roles[k],
            eap: m.mean[k],
            posterior_sd: m.sd(k),
        })
        .collect())
}

/// Writes `id,role,eap,posterior_sd`.
pub fn write_scores_csv(scores: &[LatentScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["id", "role", "eap", "posterior_sd"])
        .map_err(|e| csv_error(path, e))?;
    for s in scores {
        w.write_record([
            s.id.clone(),
            s.role.to_string(),
            s.eap.to_string(),
            s.posterior_sd.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_moments_match_pooled_moments() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let mut whole = LatentMoments {
            ids: vec!["a".into()],
            roles: vec![LatentRole::Alpha],
            count: 0,
            mean: vec![0.0],
            m2: vec![0.0],
        };
        let mut left = whole.clone();
        let mut right = whole.clone();
        for (k, x) in xs.iter().enumerate() {
            whole.push(&[*x]);
            if k < 17 {
                left.push(&[*x]);
            } else {
                right.push(&[*x]);
            }
        }
        left.merge(&right);
        let mean = xs.iter().sum::<f64>() / 50.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0;
        assert!((left.mean[0] - mean).abs() < 1e-12);
        assert!((left.sd(0) - var.sqrt()).abs() < 1e-12);
        assert!((whole.sd(0) - var.sqrt()).abs() < 1e-12);
    }
}
