//! Reduced-form covariance algebra of the composite trait.
//!
//! Under the zero-mean trait model, the covariance of two composite traits
//! depends only on how the two directed dyads share members:
//!
//! | relation                     | covariance                                   |
//! |------------------------------|----------------------------------------------|
//! | same dyad                    | `sa^2 + sb^2 + sg^2`                         |
//! | reciprocal `(a,p)/(p,a)`     | `2 rho_ab sa sb + rho_g sg^2`                |
//! | shared actor `(a,p)/(a,q)`   | `sa^2`                                       |
//! | shared partner `(a,p)/(b,p)` | `sb^2`                                       |
//! | actor as partner `(a,p)/(b,a)` | `rho_ab sa sb`                             |
//! | disjoint                     | `0`                                          |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::DirectedDyad;
use crate::error::{Error, Result};
use crate::model::Hyperparameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Same,
    Reciprocal,
    SharedActor,
    SharedPartner,
    ActorAsPartner,
    Disjoint,
}

impl Relation {
    pub const COVARIANCE_PATTERNS: [Relation; 4] = [
        Relation::Reciprocal,
        Relation::SharedActor,
        Relation::SharedPartner,
        Relation::ActorAsPartner,
    ];

    /// Relation between two directed dyads. Symmetric in its arguments.
    pub fn between(x: &DirectedDyad, y: &DirectedDyad) -> Relation {
        let (a, p, b, q) = (x.actor, x.partner, y.actor, y.partner);
        if a == b && p == q {
            Relation::Same
        } else if a == q && p == b {
            Relation::Reciprocal
        } else if a == b {
            Relation::SharedActor
        } else if p == q {
            Relation::SharedPartner
        } else if a == q || p == b {
            Relation::ActorAsPartner
        } else {
            Relation::Disjoint
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Same => "same",
            Relation::Reciprocal => "reciprocal",
            Relation::SharedActor => "shared_actor",
            Relation::SharedPartner => "shared_partner",
            Relation::ActorAsPartner => "actor_as_partner",
            Relation::Disjoint => "disjoint",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "same" | "variance" => Relation::Same,
            "reciprocal" => Relation::Reciprocal,
            "shared_actor" => Relation::SharedActor,
            "shared_partner" => Relation::SharedPartner,
            "actor_as_partner" => Relation::ActorAsPartner,
            "disjoint" => Relation::Disjoint,
            other => return Err(Error::invalid(format!("unknown relation pattern '{other}'"))),
        })
    }
}

pub fn theoretical_covariance(hyper: &Hyperparameters, relation: Relation) -> f64 {
    let (sa, sb, sg) = (hyper.sigma_alpha, hyper.sigma_beta, hyper.sigma_gamma);
    match relation {
        Relation::Same => sa * sa + sb * sb + sg * sg,
        Relation::Reciprocal => 2.0 * hyper.rho_alpha_beta * sa * sb + hyper.rho_gamma * sg * sg,
        Relation::SharedActor => sa * sa,
        Relation::SharedPartner => sb * sb,
        Relation::ActorAsPartner => hyper.rho_alpha_beta * sa * sb,
        Relation::Disjoint => 0.0,
    }
}

/// The five reduced-form moments of the composite trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedForm {
    pub variance: f64,
    pub reciprocal: f64,
    pub shared_actor: f64,
    pub shared_partner: f64,
    pub actor_as_partner: f64,
}

impl ReducedForm {
    pub fn from_hyperparameters(h: &Hyperparameters) -> Self {
        ReducedForm {
            variance: theoretical_covariance(h, Relation::Same),
            reciprocal: theoretical_covariance(h, Relation::Reciprocal),
            shared_actor: theoretical_covariance(h, Relation::SharedActor),
            shared_partner: theoretical_covariance(h, Relation::SharedPartner),
            actor_as_partner: theoretical_covariance(h, Relation::ActorAsPartner),
        }
    }
}

/// A correlation solved from reduced-form moments; `Indeterminate` when both
/// numerator and denominator vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Correlation {
    Value(f64),
    Indeterminate,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(*v),
            Correlation::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedHyperparameters {
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    pub rho_alpha_beta: Correlation,
    pub rho_gamma: Correlation,
}

impl SolvedHyperparameters {
    /// Converts to [`Hyperparameters`]; fails if a correlation is indeterminate.
    pub fn into_hyperparameters(self) -> Result<Hyperparameters> {
        let get = |c: Correlation, name: &str| {
            c.value()
                .ok_or_else(|| Error::Domain(format!("{name} is indeterminate")))
        };
        Hyperparameters::new(
            self.sigma_alpha,
            self.sigma_beta,
            self.sigma_gamma,
            get(self.rho_alpha_beta, "rho_alpha_beta")?,
            get(self.rho_gamma, "rho_gamma")?,
        )
    }
}

const FEASIBILITY_TOL: f64 = 1e-12;

fn correlation(num: f64, den: f64, name: &str) -> Result<Correlation> {
    let scale = num.abs().max(den.abs()).max(1.0);
    if den <= FEASIBILITY_TOL * scale {
        if num.abs() <= FEASIBILITY_TOL * scale {
            return Ok(Correlation::Indeterminate);
        }
        return Err(Error::Domain(format!(
            "{name}: nonzero covariance {num} with zero variance"
        )));
    }
    let r = num / den;
    if r.abs() > 1.0 + FEASIBILITY_TOL {
        return Err(Error::Domain(format!("{name} = {r} outside [-1, 1]")));
    }
    Ok(Correlation::Value(r.clamp(-1.0, 1.0)))
}

/// Inverts the reduced-form equations for the SDs and correlations.
pub fn solve_hyperparameters(r: &ReducedForm) -> Result<SolvedHyperparameters> {
    let vals = [
        r.variance,
        r.reciprocal,
        r.shared_actor,
        r.shared_partner,
        r.actor_as_partner,
    ];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite reduced-form value"));
    }
    if r.shared_actor < 0.0 {
        return Err(Error::Domain(format!(
            "shared-actor covariance {} is negative (it equals sigma_alpha^2)",
            r.shared_actor
        )));
    }
    if r.shared_partner < 0.0 {
        return Err(Error::Domain(format!(
            "shared-partner covariance {} is negative (it equals sigma_beta^2)",
            r.shared_partner
        )));
    }
    let mut var_gamma = r.variance - r.shared_actor - r.shared_partner;
    if var_gamma < 0.0 {
        if var_gamma < -FEASIBILITY_TOL * r.variance.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "implied sigma_gamma^2 = {var_gamma} is negative"
            )));
        }
        var_gamma = 0.0;
    }
    let sigma_alpha = r.shared_actor.sqrt();
    let sigma_beta = r.shared_partner.sqrt();
    let sigma_gamma = var_gamma.sqrt();
    let rho_alpha_beta = correlation(r.actor_as_partner, sigma_alpha * sigma_beta, "rho_alpha_beta")?;
    let rho_gamma = correlation(
        r.reciprocal - 2.0 * r.actor_as_partner,
        var_gamma,
        "rho_gamma",
    )?;
    Ok(SolvedHyperparameters {
        sigma_alpha,
        sigma_beta,
        sigma_gamma,
        rho_alpha_beta,
        rho_gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_dating_moments() {
        let h = Hyperparameters::speed_dating();
        assert!((theoretical_covariance(&h, Relation::Same) - 2.4182).abs() < 1e-12);
        let recip = 2.0 * -0.06 * 1.03 * 0.63 + 0.46 * 0.9604;
        assert!((theoretical_covariance(&h, Relation::Reciprocal) - recip).abs() < 1e-12);
        assert!((recip - 0.3639).abs() < 1e-4);
        assert_eq!(theoretical_covariance(&h, Relation::Disjoint), 0.0);
    }

    #[test]
    fn round_trip_on_speed_dating_values() {
        let h = Hyperparameters::speed_dating();
        let s = solve_hyperparameters(&ReducedForm::from_hyperparameters(&h))
            .unwrap()
            .into_hyperparameters()
            .unwrap();
        assert!((s.sigma_alpha - h.sigma_alpha).abs() < 1e-12);
        assert!((s.sigma_beta - h.sigma_beta).abs() < 1e-12);
        assert!((s.sigma_gamma - h.sigma_gamma).abs() < 1e-12);
        assert!((s.rho_alpha_beta - h.rho_alpha_beta).abs() < 1e-12);
        assert!((s.rho_gamma - h.rho_gamma).abs() < 1e-12);
    }

    #[test]
    fn pure_dyadic_variance_leaves_correlations_indeterminate() {
        let r = ReducedForm {
            variance: 3.0,
            reciprocal: 0.0,
            shared_actor: 0.0,
            shared_partner: 0.0,
            actor_as_partner: 0.0,
        };
        let s = solve_hyperparameters(&r).unwrap();
        assert_eq!(s.sigma_alpha, 0.0);
        assert_eq!(s.sigma_beta, 0.0);
        assert!((s.sigma_gamma - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.rho_alpha_beta, Correlation::Indeterminate);
        assert_eq!(s.rho_gamma, Correlation::Value(0.0));
        assert!(s.into_hyperparameters().is_err());
    }

    #[test]
    fn infeasible_moments_are_domain_errors() {
        let mut r = ReducedForm::from_hyperparameters(&Hyperparameters::speed_dating());
        r.shared_actor = -0.1;
        assert!(matches!(solve_hyperparameters(&r), Err(Error::Domain(_))));
        let mut r = ReducedForm::from_hyperparameters(&Hyperparameters::speed_dating());
        r.actor_as_partner = 5.0;
        assert!(matches!(solve_hyperparameters(&r), Err(Error::Domain(_))));
        let mut r = ReducedForm::from_hyperparameters(&Hyperparameters::speed_dating());
        r.variance = 0.5;
        assert!(matches!(solve_hyperparameters(&r), Err(Error::Domain(_))));
    }

    #[test]
    fn relation_parsing() {
        assert_eq!("reciprocal".parse::<Relation>().unwrap(), Relation::Reciprocal);
        assert!("triad".parse::<Relation>().is_err());
    }

    #[test]
    fn relation_classification_is_symmetric() {
        let mk = |a, p| DirectedDyad {
            actor: a,
            partner: p,
            pair: 0,
            slot: 0,
        };
        let cases = [
            ((0, 1), (1, 0), Relation::Reciprocal),
            ((0, 1), (0, 2), Relation::SharedActor),
            ((0, 1), (2, 1), Relation::SharedPartner),
            ((0, 1), (2, 0), Relation::ActorAsPartner),
            ((0, 1), (2, 3), Relation::Disjoint),
        ];
        for (x, y, rel) in cases {
            assert_eq!(Relation::between(&mk(x.0, x.1), &mk(y.0, y.1)), rel);
            assert_eq!(Relation::between(&mk(y.0, y.1), &mk(x.0, x.1)), rel);
        }
    }
}
