use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard deviations and correlations of the actor, partner and dyadic
/// traits, plus the optional gender mean shift of the actor trait.
///
/// The base means of all three traits are fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    pub rho_alpha_beta: f64,
    pub rho_gamma: f64,
    #[serde(default)]
    pub mu_male: f64,
}

impl Hyperparameters {
    pub fn new(
        sigma_alpha: f64,
        sigma_beta: f64,
        sigma_gamma: f64,
        rho_alpha_beta: f64,
        rho_gamma: f64,
    ) -> Result<Self> {
        let h = Hyperparameters {
            sigma_alpha,
            sigma_beta,
            sigma_gamma,
            rho_alpha_beta,
            rho_gamma,
            mu_male: 0.0,
        };
        h.validate()?;
        Ok(h)
    }

    /// Joint-model estimates for the speed-dating data: SDs 1.03, 0.63, 0.98
    /// and correlations -0.06, 0.46.
    pub fn speed_dating() -> Self {
        Hyperparameters {
            sigma_alpha: 1.03,
            sigma_beta: 0.63,
            sigma_gamma: 0.98,
            rho_alpha_beta: -0.06,
            rho_gamma: 0.46,
            mu_male: 0.0,
        }
    }

    pub fn with_mu_male(mut self, mu_male: f64) -> Self {
        self.mu_male = mu_male;
        self
    }

    pub fn in_support(&self) -> bool {
        let sds = [self.sigma_alpha, self.sigma_beta, self.sigma_gamma];
        let rhos = [self.rho_alpha_beta, self.rho_gamma];
        sds.iter().all(|s| s.is_finite() && *s >= 0.0)
            && rhos.iter().all(|r| r.is_finite() && r.abs() <= 1.0)
            && self.mu_male.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_support() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "hyperparameters outside support (SDs must be >= 0, |rho| <= 1): {self:?}"
            )))
        }
    }

    /// Covariance matrix of `(alpha_a, beta_a)`.
    pub fn individual_covariance(&self) -> [[f64; 2]; 2] {
        let c = self.rho_alpha_beta * self.sigma_alpha * self.sigma_beta;
        [
            [self.sigma_alpha * self.sigma_alpha, c],
            [c, self.sigma_beta * self.sigma_beta],
        ]
    }

    /// Covariance matrix of `(gamma_ap, gamma_pa)`.
    pub fn dyadic_covariance(&self) -> [[f64; 2]; 2] {
        let v = self.sigma_gamma * self.sigma_gamma;
        [[v, self.rho_gamma * v], [self.rho_gamma * v, v]]
    }

    /// Shares of the composite-trait variance due to actor, partner and
    /// dyadic traits.
    pub fn variance_partition(&self) -> [f64; 3] {
        let parts = [
            self.sigma_alpha * self.sigma_alpha,
            self.sigma_beta * self.sigma_beta,
            self.sigma_gamma * self.sigma_gamma,
        ];
        let total: f64 = parts.iter().sum();
        if total == 0.0 {
            return [f64::NAN; 3];
        }
        parts.map(|p| p / total)
    }
}

/// Variance shares from SDs; the three shares sum to one.
pub fn variance_partition(sigma_alpha: f64, sigma_beta: f64, sigma_gamma: f64) -> [f64; 3] {
    Hyperparameters {
        sigma_alpha,
        sigma_beta,
        sigma_gamma,
        rho_alpha_beta: 0.0,
        rho_gamma: 0.0,
        mu_male: 0.0,
    }
    .variance_partition()
}

/// Log-density of a zero-mean normal with SD `sd`. A zero SD is a point mass
/// at zero (log-density 0 there, `-inf` elsewhere).
pub fn normal_logpdf(x: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        let z = x / sd;
        -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
    } else if sd == 0.0 && x == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-density of a zero-mean bivariate normal with SDs `s1`, `s2` and
/// correlation `rho`.
///
/// Degenerate cases: a zero SD collapses that coordinate to a point mass at
/// zero; `|rho| = 1` with both SDs positive is singular and yields `-inf`.
pub fn bivariate_normal_logpdf(x: f64, y: f64, s1: f64, s2: f64, rho: f64) -> f64 {
    if s1 > 0.0 && s2 > 0.0 {
        let one_m = 1.0 - rho * rho;
        if one_m <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = x / s1;
        let v = y / s2;
        let q = (u * u - 2.0 * rho * u * v + v * v) / one_m;
        -LN_2PI - s1.ln() - s2.ln() - 0.5 * one_m.ln() - 0.5 * q
    } else if s1 > 0.0 {
        if y == 0.0 {
            normal_logpdf(x, s1)
        } else {
            f64::NEG_INFINITY
        }
    } else if s2 > 0.0 {
        if x == 0.0 {
            normal_logpdf(y, s2)
        } else {
            f64::NEG_INFINITY
        }
    } else if x == 0.0 && y == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Partial derivatives of [`bivariate_normal_logpdf`] in the non-degenerate
/// case, ordered `(x, y, s1, s2, rho)`.
pub(crate) fn bivariate_normal_gradient(x: f64, y: f64, s1: f64, s2: f64, rho: f64) -> [f64; 5] {
    let one_m = 1.0 - rho * rho;
    let u = x / s1;
    let v = y / s2;
    let q = u * u - 2.0 * rho * u * v + v * v;
    let dx = -(u - rho * v) / (s1 * one_m);
    let dy = -(v - rho * u) / (s2 * one_m);
    // dQ/ds1 = (-2u^2 + 2 rho u v) / s1
    let ds1 = -1.0 / s1 - (-2.0 * u * u + 2.0 * rho * u * v) / (2.0 * s1 * one_m);
    let ds2 = -1.0 / s2 - (-2.0 * v * v + 2.0 * rho * u * v) / (2.0 * s2 * one_m);
    let drho = rho / one_m + u * v / one_m - q * rho / (one_m * one_m);
    [dx, dy, ds1, ds2, drho]
}

/// Lower Cholesky factor of a 2x2 covariance with a rank-one floor at
/// `|rho| = 1`.
pub fn cholesky_2x2(s1: f64, s2: f64, rho: f64) -> [[f64; 2]; 2] {
    let rest = (1.0 - rho * rho).max(0.0).sqrt();
    [[s1, 0.0], [rho * s2, s2 * rest]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_speed_dating_estimates() {
        let shares = Hyperparameters::speed_dating().variance_partition();
        let pct: Vec<i64> = shares.iter().map(|s| (s * 100.0).round() as i64).collect();
        assert_eq!(pct, vec![44, 16, 40]);
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_checks() {
        assert!(Hyperparameters::new(1.0, 1.0, 1.0, 0.0, 1.5).is_err());
        assert!(Hyperparameters::new(-0.1, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(Hyperparameters::new(0.0, 0.0, 0.0, -1.0, 1.0).is_ok());
    }

    #[test]
    fn bivariate_matches_independent_product() {
        let a = bivariate_normal_logpdf(0.3, -1.2, 0.7, 1.9, 0.0);
        let b = normal_logpdf(0.3, 0.7) + normal_logpdf(-1.2, 1.9);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn bivariate_gradient_matches_differences() {
        let p = [0.4, -0.8, 1.1, 0.6, -0.35];
        let g = bivariate_normal_gradient(p[0], p[1], p[2], p[3], p[4]);
        let f = |q: &[f64; 5]| bivariate_normal_logpdf(q[0], q[1], q[2], q[3], q[4]);
        for k in 0..5 {
            let h = 1e-6;
            let mut up = p;
            let mut dn = p;
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "coordinate {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(bivariate_normal_logpdf(0.0, 0.0, 0.0, 0.0, 0.3), 0.0);
        assert_eq!(bivariate_normal_logpdf(0.1, 0.0, 0.0, 0.0, 0.3), f64::NEG_INFINITY);
        assert_eq!(bivariate_normal_logpdf(1.0, 1.0, 1.0, 1.0, 1.0), f64::NEG_INFINITY);
        let l = cholesky_2x2(1.0, 1.0, 1.0);
        assert_eq!(l[1][1], 0.0);
    }
}
