//! Mean-structure extensions: gender shift, latent regressions and cluster
//! intercepts.
//!
//! All three enter the composite trait of directed dyad `(a, p)` as
//!
//! ```text
//! shift = x_alpha[a]'c_alpha + x_beta[p]'c_beta + x_gamma[ap]'c_gamma
//!       + male(a) * mu_male + u[cluster(a)]
//! ```
//!
//! Because the step difficulties absorb any constant, a mean term is only
//! identified when its dyad-level regressor is not a linear combination of
//! the constant and the other regressors. [`prepare`] checks this with a
//! singular value decomposition of the dyad-level design matrix and names
//! the columns that span the null space. Typical offenders: a gender dummy
//! in both the actor and the partner model of an opposite-sex block design,
//! or `z_a - z_p` as a dyadic covariate next to `z_a` and `z_p` in the actor
//! and partner models.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{CovariateSpec, MeanStructure, ModelSpec};

/// Checked mean structure of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub mean: MeanStructure,
    pub covariates: Option<CovariateSpec>,
}

/// Relative singular value below which the mean design counts as singular.
const RANK_TOLERANCE: f64 = 1e-9;

/// Validates labels and covariates for the extensions `spec` switches on and
/// rejects collinear mean structures.
pub fn prepare(spec: &ModelSpec, data: &Dataset) -> Result<Prepared> {
    let mean = MeanStructure::new(&data.design, spec)?;
    let covariates = if spec.has_covariates() {
        Some(data.covariate_spec(spec)?)
    } else {
        None
    };
    let gender_free = spec.gender_mean && spec.pinned("mu_male").is_none();
    check_collinearity(data, covariates.as_ref(), gender_free.then_some(&mean.male_actor), spec)?;
    Ok(Prepared { mean, covariates })
}

fn check_collinearity(
    data: &Dataset,
    covariates: Option<&CovariateSpec>,
    male_actor: Option<&Vec<f64>>,
    spec: &ModelSpec,
) -> Result<()> {
    let dyads = data.design.dyads();
    let mut names = vec!["constant".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; dyads.len()]];
    if let Some(c) = covariates {
        let free = |n: String| spec.pinned(&n).is_none();
        for (k, n) in c.names_alpha.iter().enumerate() {
            if free(format!("c_alpha[{n}]")) {
                names.push(format!("alpha covariate '{n}'"));
                columns.push(dyads.iter().map(|d| c.x_alpha[(d.actor, k)]).collect());
            }
        }
        for (k, n) in c.names_beta.iter().enumerate() {
            if free(format!("c_beta[{n}]")) {
                names.push(format!("beta covariate '{n}'"));
                columns.push(dyads.iter().map(|d| c.x_beta[(d.partner, k)]).collect());
            }
        }
        for (k, n) in c.names_gamma.iter().enumerate() {
            if free(format!("c_gamma[{n}]")) {
                names.push(format!("gamma covariate '{n}'"));
                columns.push((0..dyads.len()).map(|d| c.x_gamma[(d, k)]).collect());
            }
        }
    }
    if let Some(m) = male_actor {
        names.push("male actor (mu_male)".into());
        columns.push(m.clone());
    }
    if columns.len() == 1 {
        return Ok(());
    }
    if dyads.len() < columns.len() {
        return Err(Error::Specification(format!(
            "{} mean-structure columns but only {} dyads",
            columns.len(),
            dyads.len()
        )));
    }
    let x = DMatrix::from_fn(dyads.len(), columns.len(), |i, j| columns[j][i]);
    // Scale columns to unit length so the tolerance is unit-free; an all-zero
    // column is singular on its own.
    let mut scaled = x.clone();
    for j in 0..scaled.ncols() {
        let norm = scaled.column(j).norm();
        if norm == 0.0 {
            return Err(Error::Specification(format!(
                "mean-structure column {} is zero for every dyad",
                names[j]
            )));
        }
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let svd = scaled.svd(false, true);
    let s = &svd.singular_values;
    let (imin, smin) = s
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("at least two columns");
    let smax = s.iter().copied().fold(0.0f64, f64::max);
    if smin > RANK_TOLERANCE * smax {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested");
    let null = v_t.row(imin);
    let offending: Vec<&str> = names
        .iter()
        .zip(null.iter())
        .filter(|(_, w)| w.abs() > 1e-6)
        .map(|(n, _)| n.as_str())
        .collect();
    Err(Error::Specification(format!(
        "mean structure is not identified: {} are linearly dependent across dyads",
        offending.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateTable, ResponseSet};
    use crate::design::{make_block, make_round_robin};

    fn empty_responses() -> ResponseSet {
        ResponseSet::new(vec!["1".into()], vec![2], Vec::new()).unwrap()
    }

    #[test]
    fn gender_in_actor_and_partner_model_of_block_design_is_rejected() {
        let design = make_block(3, 3).unwrap();
        let n = design.num_individuals();
        let male: Vec<f64> = (0..n).map(|i| if i < 3 { 1.0 } else { 0.0 }).collect();
        let mut data = Dataset::new(design, empty_responses(), None).unwrap();
        data.individual_covariates = CovariateTable {
            names: vec!["male".into()],
            values: DMatrix::from_column_slice(n, 1, &male),
        };
        let mut spec = ModelSpec::default();
        spec.alpha_covariates = vec!["male".into()];
        assert!(prepare(&spec, &data).is_ok());
        spec.beta_covariates = vec!["male".into()];
        let err = prepare(&spec, &data).unwrap_err().to_string();
        assert!(err.contains("alpha covariate 'male'") && err.contains("beta covariate 'male'"), "{err}");
    }

    #[test]
    fn difference_covariate_next_to_its_parts_is_rejected() {
        let design = make_round_robin(5).unwrap();
        let n = design.num_individuals();
        let z: Vec<f64> = (0..n).map(|i| (i as f64).powi(2) * 0.1).collect();
        let diff: Vec<f64> = design.dyads().iter().map(|d| z[d.actor] - z[d.partner]).collect();
        let dyads = design.num_dyads();
        let mut data = Dataset::new(design, empty_responses(), None).unwrap();
        data.individual_covariates = CovariateTable {
            names: vec!["z".into()],
            values: DMatrix::from_column_slice(n, 1, &z),
        };
        data.dyad_covariates = CovariateTable {
            names: vec!["dz".into()],
            values: DMatrix::from_column_slice(dyads, 1, &diff),
        };
        let mut spec = ModelSpec::default();
        spec.alpha_covariates = vec!["z".into()];
        spec.beta_covariates = vec!["z".into()];
        assert!(prepare(&spec, &data).is_ok());
        spec.gamma_covariates = vec!["dz".into()];
        let err = prepare(&spec, &data).unwrap_err();
        assert!(matches!(err, Error::Specification(_)));
        assert!(err.to_string().contains("gamma covariate 'dz'"));
    }
}
