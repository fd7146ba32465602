use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DyadDesign, Relation};

/// Number of ordered pairs of distinct directed dyads realising each
/// covariance pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternCounts {
    pub reciprocal: u64,
    pub shared_actor: u64,
    pub shared_partner: u64,
    pub actor_as_partner: u64,
}

impl PatternCounts {
    pub fn get(&self, relation: Relation) -> u64 {
        match relation {
            Relation::Reciprocal => self.reciprocal,
            Relation::SharedActor => self.shared_actor,
            Relation::SharedPartner => self.shared_partner,
            Relation::ActorAsPartner => self.actor_as_partner,
            Relation::Same | Relation::Disjoint => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterStatus {
    Identified,
    Unidentified,
    /// The parameter has no meaning for the design, e.g. a within-person
    /// correlation when nobody ever plays both roles.
    Undefined,
}

impl ParameterStatus {
    pub fn is_identified(self) -> bool {
        self == ParameterStatus::Identified
    }
}

impl fmt::Display for ParameterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParameterStatus::Identified => "identified",
            ParameterStatus::Unidentified => "unidentified",
            ParameterStatus::Undefined => "undefined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub counts: PatternCounts,
    /// Var(theta) is available whenever the design has a dyad.
    pub composite_variance: bool,
    pub sigma_alpha: ParameterStatus,
    pub sigma_beta: ParameterStatus,
    pub sigma_gamma: ParameterStatus,
    pub rho_alpha_beta: ParameterStatus,
    pub rho_gamma: ParameterStatus,
    /// Block labels are present, so members may be distinguishable by role.
    pub distinguishable: bool,
}

impl IdentificationReport {
    pub fn parameters(&self) -> [(&'static str, ParameterStatus); 5] {
        [
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_beta", self.sigma_beta),
            ("sigma_gamma", self.sigma_gamma),
            ("rho_alpha_beta", self.rho_alpha_beta),
            ("rho_gamma", self.rho_gamma),
        ]
    }

    pub fn all_identified(&self) -> bool {
        self.parameters().iter().all(|(_, s)| s.is_identified())
    }

    pub fn status(&self, name: &str) -> Option<ParameterStatus> {
        self.parameters()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| s)
    }

    pub fn missing_patterns(&self) -> Vec<Relation> {
        Relation::COVARIANCE_PATTERNS
            .into_iter()
            .filter(|r| self.counts.get(*r) == 0)
            .collect()
    }
}

impl fmt::Display for IdentificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "covariance patterns (ordered dyad pairs):")?;
        for r in Relation::COVARIANCE_PATTERNS {
            let n = self.counts.get(r);
            let tag = if n == 0 { "  MISSING" } else { "" };
            writeln!(f, "  {:<18}{n:>12}{tag}", r.as_str())?;
        }
        writeln!(
            f,
            "composite variance: {}",
            if self.composite_variance { "identified" } else { "unidentified" }
        )?;
        for (name, status) in self.parameters() {
            writeln!(f, "  {name:<16}{status}")?;
        }
        if self.distinguishable {
            writeln!(
                f,
                "note: block labels present; members may be distinguishable by role"
            )?;
        }
        Ok(())
    }
}

/// Counts covariance patterns from per-individual adjacency lists and decides
/// which variance-covariance parameters the design identifies.
pub fn check_identification(design: &DyadDesign) -> IdentificationReport {
    let (out, inc) = design.adjacency();
    let mut counts = PatternCounts::default();
    let mut both_roles = false;
    for i in 0..design.num_individuals() {
        let o = out[i].len() as u64;
        let n = inc[i].len() as u64;
        counts.shared_actor += o * o.saturating_sub(1);
        counts.shared_partner += n * n.saturating_sub(1);
        let outs: HashSet<usize> = out[i].iter().copied().collect();
        let reciprocated = inc[i].iter().filter(|b| outs.contains(b)).count() as u64;
        counts.reciprocal += reciprocated;
        // (i,p) with (b,i), b != p
        counts.actor_as_partner += o * n - reciprocated;
        both_roles |= o > 0 && n > 0;
    }

    let sa = counts.shared_actor > 0;
    let sb = counts.shared_partner > 0;
    let status = |ok: bool| {
        if ok {
            ParameterStatus::Identified
        } else {
            ParameterStatus::Unidentified
        }
    };
    let sigma_alpha = status(sa);
    let sigma_beta = status(sb);
    let sigma_gamma = status(sa && sb && design.num_dyads() > 0);
    let (rho_alpha_beta, rho_gamma) = if !both_roles {
        (ParameterStatus::Undefined, ParameterStatus::Undefined)
    } else {
        let rab = sa && sb && counts.actor_as_partner > 0;
        (
            status(rab),
            status(rab && sigma_gamma.is_identified() && counts.reciprocal > 0),
        )
    };
    IdentificationReport {
        counts,
        composite_variance: design.num_dyads() > 0,
        sigma_alpha,
        sigma_beta,
        sigma_gamma,
        rho_alpha_beta,
        rho_gamma,
        distinguishable: design.has_blocks(),
    }
}
