use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Covariates for the means of the actor, partner and dyadic traits.
///
/// `x_alpha` and `x_beta` have one row per individual; `x_gamma` has one row
/// per directed dyad in design order. The coefficient vectors hold generating
/// values for simulation or starting values for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    pub x_alpha: DMatrix<f64>,
    pub x_beta: DMatrix<f64>,
    pub x_gamma: DMatrix<f64>,
    pub c_alpha: DVector<f64>,
    pub c_beta: DVector<f64>,
    pub c_gamma: DVector<f64>,
    pub names_alpha: Vec<String>,
    pub names_beta: Vec<String>,
    pub names_gamma: Vec<String>,
}

impl CovariateSpec {
    /// No covariates for `individuals` people and `dyads` directed dyads.
    pub fn empty(individuals: usize, dyads: usize) -> Self {
        CovariateSpec {
            x_alpha: DMatrix::zeros(individuals, 0),
            x_beta: DMatrix::zeros(individuals, 0),
            x_gamma: DMatrix::zeros(dyads, 0),
            c_alpha: DVector::zeros(0),
            c_beta: DVector::zeros(0),
            c_gamma: DVector::zeros(0),
            names_alpha: Vec::new(),
            names_beta: Vec::new(),
            names_gamma: Vec::new(),
        }
    }

    pub fn validate(&self, individuals: usize, dyads: usize) -> Result<()> {
        let checks = [
            ("alpha", &self.x_alpha, &self.c_alpha, &self.names_alpha, individuals),
            ("beta", &self.x_beta, &self.c_beta, &self.names_beta, individuals),
            ("gamma", &self.x_gamma, &self.c_gamma, &self.names_gamma, dyads),
        ];
        for (role, x, c, names, rows) in checks {
            if x.nrows() != rows {
                return Err(Error::invalid(format!(
                    "{role} covariates have {} rows, design needs {rows}",
                    x.nrows()
                )));
            }
            if x.ncols() != c.len() || names.len() != c.len() {
                return Err(Error::invalid(format!(
                    "{role} covariates: {} columns, {} coefficients, {} names",
                    x.ncols(),
                    c.len(),
                    names.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite {role} covariate")));
            }
        }
        Ok(())
    }

    pub fn num_coefficients(&self) -> usize {
        self.c_alpha.len() + self.c_beta.len() + self.c_gamma.len()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_coefficients());
        out.extend(self.names_alpha.iter().map(|n| format!("c_alpha[{n}]")));
        out.extend(self.names_beta.iter().map(|n| format!("c_beta[{n}]")));
        out.extend(self.names_gamma.iter().map(|n| format!("c_gamma[{n}]")));
        out
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.c_alpha
            .iter()
            .chain(self.c_beta.iter())
            .chain(self.c_gamma.iter())
            .copied()
            .collect()
    }

    pub fn set_coefficients(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_coefficients() {
            return Err(Error::invalid("wrong number of covariate coefficients"));
        }
        let (a, rest) = values.split_at(self.c_alpha.len());
        let (b, g) = rest.split_at(self.c_beta.len());
        self.c_alpha.copy_from_slice(a);
        self.c_beta.copy_from_slice(b);
        self.c_gamma.copy_from_slice(g);
        Ok(())
    }

    /// Mean contribution `x_alpha[a]'c_alpha + x_beta[p]'c_beta + x_gamma[d]'c_gamma`.
    pub fn mean_shift(&self, actor: usize, partner: usize, dyad: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.c_alpha.len() {
            s += self.x_alpha[(actor, k)] * self.c_alpha[k];
        }
        for k in 0..self.c_beta.len() {
            s += self.x_beta[(partner, k)] * self.c_beta[k];
        }
        for k in 0..self.c_gamma.len() {
            s += self.x_gamma[(dyad, k)] * self.c_gamma[k];
        }
        s
    }

    /// Regressor row of the composite mean for one directed dyad, in
    /// coefficient order.
    pub fn row(&self, actor: usize, partner: usize, dyad: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_coefficients());
        out.extend(self.x_alpha.row(actor).iter());
        out.extend(self.x_beta.row(partner).iter());
        out.extend(self.x_gamma.row(dyad).iter());
        out
    }
}
