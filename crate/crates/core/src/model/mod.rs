//! Model types and every likelihood of the dyadic partial credit model.
//!
//! The composite trait of directed dyad `(a, p)` is
//! `theta = alpha_a + beta_p + gamma_ap + shift`, where `shift` collects the
//! mean structure: covariate terms, the gender shift `m_a * mu_male` of the
//! actor mean, and the cluster intercept.

mod covariates;
mod density;
mod distal;
mod hyper;
mod items;
mod latent;
mod pcm;
mod spec;

pub use covariates::CovariateSpec;
pub use density::{joint_log_density, joint_log_density_gradient, MeanStructure, ModelParams, ParameterLayout};
pub use distal::{
    bernoulli_logit_lpmf, distal_success_prob, inv_logit, softplus, DistalCoefficients, DistalForm,
    DistalTraits, NUM_DISTAL,
};
pub use hyper::{
    bivariate_normal_logpdf, cholesky_2x2, normal_logpdf, variance_partition, Hyperparameters,
};
pub use items::{Item, ItemBank};
pub use latent::LatentState;
pub use pcm::{cumulative_logits, pcm_category_probs, pcm_log_likelihood};
pub use spec::{DistalMode, ModelSpec, PriorConfig, VariancePrior};

pub use density::distal_traits;
pub(crate) use pcm::log_prob;

use crate::error::{Error, Result};

/// `alpha_a + beta_p + gamma_ap + mean_shift`.
pub fn composite_theta(alpha_a: f64, beta_p: f64, gamma_ap: f64, mean_shift: f64) -> Result<f64> {
    if [alpha_a, beta_p, gamma_ap, mean_shift].iter().all(|v| v.is_finite()) {
        Ok(alpha_a + beta_p + gamma_ap + mean_shift)
    } else {
        Err(Error::invalid("composite trait needs finite inputs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_sums() {
        assert_eq!(composite_theta(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((composite_theta(1.0, 0.5, -0.3, 0.0).unwrap() - 1.2).abs() < 1e-15);
        // male actor with the gender shift of 0.08
        assert!((composite_theta(0.2, 0.1, 0.0, 0.08).unwrap() - 0.38).abs() < 1e-15);
        assert!(composite_theta(f64::NAN, 0.0, 0.0, 0.0).is_err());
    }
}
