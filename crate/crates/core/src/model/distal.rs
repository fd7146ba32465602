//! Logistic regression of a binary dyadic outcome on the latent traits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_DISTAL: usize = 10;

/// The six traits that enter the distal regression for directed dyad `(a, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DistalTraits {
    pub alpha_a: f64,
    pub alpha_p: f64,
    pub beta_a: f64,
    pub beta_p: f64,
    pub gamma_ap: f64,
    pub gamma_pa: f64,
}

impl DistalTraits {
    /// Regressors `(1, alpha_a, alpha_p, beta_a, beta_p, gamma_ap, gamma_pa,
    /// alpha_a*alpha_p, beta_a*beta_p, gamma_ap*gamma_pa)`.
    pub fn features(&self) -> [f64; NUM_DISTAL] {
        [
            1.0,
            self.alpha_a,
            self.alpha_p,
            self.beta_a,
            self.beta_p,
            self.gamma_ap,
            self.gamma_pa,
            self.alpha_a * self.alpha_p,
            self.beta_a * self.beta_p,
            self.gamma_ap * self.gamma_pa,
        ]
    }

    /// The same dyad seen from the other member.
    pub fn swapped(&self) -> Self {
        DistalTraits {
            alpha_a: self.alpha_p,
            alpha_p: self.alpha_a,
            beta_a: self.beta_p,
            beta_p: self.beta_a,
            gamma_ap: self.gamma_pa,
            gamma_pa: self.gamma_ap,
        }
    }

    fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }
}

/// Which of `b0..b9` are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistalForm {
    /// When false, `b7 = b8 = b9 = 0`.
    pub interactions: bool,
    /// When true, `b1 = b2`, `b3 = b4` and `b5 = b6`.
    pub exchangeable: bool,
}

impl Default for DistalForm {
    fn default() -> Self {
        DistalForm {
            interactions: true,
            exchangeable: false,
        }
    }
}

impl DistalForm {
    /// Indices into `b0..b9` that carry a free coefficient. In the exchangeable
    /// form the listed index stands for its tied pair.
    pub fn free_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = if self.exchangeable {
            vec![0, 1, 3, 5]
        } else {
            (0..7).collect()
        };
        if self.interactions {
            idx.extend([7, 8, 9]);
        }
        idx
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_indices()
            .into_iter()
            .map(|i| match (self.exchangeable, i) {
                (true, 1) => "b1=b2".to_string(),
                (true, 3) => "b3=b4".to_string(),
                (true, 5) => "b5=b6".to_string(),
                _ => format!("b{i}"),
            })
            .collect()
    }

    pub fn num_free(&self) -> usize {
        self.free_indices().len()
    }

    /// Collapses a full feature vector onto the free coefficients, summing
    /// tied columns.
    pub fn reduce_features(&self, x: &[f64; NUM_DISTAL]) -> Vec<f64> {
        self.free_indices()
            .into_iter()
            .map(|i| {
                if self.exchangeable && matches!(i, 1 | 3 | 5) {
                    x[i] + x[i + 1]
                } else {
                    x[i]
                }
            })
            .collect()
    }
}

/// Distal regression coefficients `b0..b9` with their constraint pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistalCoefficients {
    pub b: [f64; NUM_DISTAL],
    pub form: DistalForm,
}

impl DistalCoefficients {
    /// Builds coefficients and applies the constraint pattern: tied pairs take
    /// the value of their first member and disabled interactions are zeroed.
    pub fn new(b: [f64; NUM_DISTAL], form: DistalForm) -> Self {
        let mut c = DistalCoefficients { b, form };
        c.enforce();
        c
    }

    pub fn zeros(form: DistalForm) -> Self {
        DistalCoefficients::new([0.0; NUM_DISTAL], form)
    }

    /// Joint "with interactions" estimates for the speed-dating data.
    pub fn speed_dating_with_interactions() -> Self {
        DistalCoefficients::new(
            [-0.87, 0.15, -0.02, -3.03, 3.56, 3.50, 0.17, -0.01, 0.45, -0.28],
            DistalForm::default(),
        )
    }

    /// Joint "without interactions" estimates for the speed-dating data.
    pub fn speed_dating_without_interactions() -> Self {
        DistalCoefficients::new(
            [-0.88, 0.14, -0.02, -2.92, 3.48, 3.42, 0.13, 0.0, 0.0, 0.0],
            DistalForm {
                interactions: false,
                exchangeable: false,
            },
        )
    }

    fn enforce(&mut self) {
        if self.form.exchangeable {
            self.b[2] = self.b[1];
            self.b[4] = self.b[3];
            self.b[6] = self.b[5];
        }
        if !self.form.interactions {
            self.b[7] = 0.0;
            self.b[8] = 0.0;
            self.b[9] = 0.0;
        }
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.form.free_indices().into_iter().map(|i| self.b[i]).collect()
    }

    pub fn set_free_values(&mut self, values: &[f64]) -> Result<()> {
        let idx = self.form.free_indices();
        if values.len() != idx.len() {
            return Err(Error::invalid(format!(
                "expected {} free distal coefficients, got {}",
                idx.len(),
                values.len()
            )));
        }
        for (i, v) in idx.into_iter().zip(values) {
            self.b[i] = *v;
        }
        self.enforce();
        Ok(())
    }

    pub fn linear_predictor(&self, t: &DistalTraits) -> f64 {
        self.b.iter().zip(t.features()).map(|(b, x)| b * x).sum()
    }

    /// Bernoulli log-likelihood of `outcome`.
    pub fn log_likelihood(&self, outcome: bool, t: &DistalTraits) -> f64 {
        bernoulli_logit_lpmf(outcome, self.linear_predictor(t))
    }
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn bernoulli_logit_lpmf(outcome: bool, eta: f64) -> f64 {
    if outcome {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

/// Success probability of the distal outcome for one directed dyad.
pub fn distal_success_prob(coeffs: &DistalCoefficients, traits: &DistalTraits) -> Result<f64> {
    if !traits.is_finite() || coeffs.b.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("non-finite distal input"));
    }
    Ok(inv_logit(coeffs.linear_predictor(traits)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_even_odds() {
        let c = DistalCoefficients::zeros(DistalForm::default());
        let t = DistalTraits {
            alpha_a: 3.0,
            gamma_pa: -2.0,
            ..Default::default()
        };
        assert_eq!(distal_success_prob(&c, &t).unwrap(), 0.5);
    }

    #[test]
    fn intercept_only_and_single_slope() {
        let mut b = [0.0; NUM_DISTAL];
        b[0] = -0.88;
        let c = DistalCoefficients::new(b, DistalForm::default());
        let p = distal_success_prob(&c, &DistalTraits::default()).unwrap();
        assert!((p - 0.293).abs() < 5e-4);

        let mut b = [0.0; NUM_DISTAL];
        b[1] = 1.0;
        let c = DistalCoefficients::new(b, DistalForm::default());
        let t = DistalTraits {
            alpha_a: 2.0,
            ..Default::default()
        };
        let p = distal_success_prob(&c, &t).unwrap();
        assert!((p - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.8808).abs() < 5e-5);
    }

    #[test]
    fn constraint_bookkeeping() {
        let form = DistalForm {
            interactions: false,
            exchangeable: true,
        };
        assert_eq!(form.free_names(), vec!["b0", "b1=b2", "b3=b4", "b5=b6"]);
        let mut c = DistalCoefficients::zeros(form);
        c.set_free_values(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(c.b, [0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4, 0.0, 0.0, 0.0]);
        assert!(c.set_free_values(&[0.0]).is_err());

        let full = DistalForm::default();
        assert_eq!(full.num_free(), 10);
        let no_int = DistalForm {
            interactions: false,
            exchangeable: false,
        };
        assert_eq!(no_int.free_names().last().unwrap(), "b6");
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let c = DistalCoefficients::zeros(DistalForm::default());
        let t = DistalTraits {
            beta_p: f64::INFINITY,
            ..Default::default()
        };
        assert!(distal_success_prob(&c, &t).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((bernoulli_logit_lpmf(true, 0.0) - 0.5f64.ln()).abs() < 1e-15);
    }
}
