//! The unnormalised joint log posterior and its gradient.

use crate::data::{DistalSet, ResponseSet};
use crate::design::DyadDesign;
use crate::error::{Error, Result};

use super::distal::{bernoulli_logit_lpmf, inv_logit, DistalCoefficients, DistalTraits};
use super::hyper::{bivariate_normal_gradient, bivariate_normal_logpdf, normal_logpdf, Hyperparameters};
use super::items::ItemBank;
use super::latent::LatentState;
use super::pcm::{log_prob, log_prob_with_gradient};
use super::spec::ModelSpec;
use super::CovariateSpec;

/// Every non-latent unknown of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: Hyperparameters,
    pub items: ItemBank,
    pub distal: Option<DistalCoefficients>,
    /// SD of the cluster intercepts; ignored without a cluster intercept.
    pub sigma_u: f64,
    /// Covariate matrices with their coefficients.
    pub covariates: Option<CovariateSpec>,
}

impl ModelParams {
    pub fn new(hyper: Hyperparameters, items: ItemBank) -> Self {
        ModelParams {
            hyper,
            items,
            distal: None,
            sigma_u: 0.0,
            covariates: None,
        }
    }
}

/// Per-dyad structure of the composite mean: actor gender and the cluster
/// that contains the dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanStructure {
    /// 1.0 for dyads with a male actor when the gender mean is on, else 0.
    pub male_actor: Vec<f64>,
    /// Cluster position per dyad when the cluster intercept is on.
    pub cluster: Option<Vec<usize>>,
    pub num_clusters: usize,
}

impl MeanStructure {
    /// Checks that the design carries the labels `spec` needs.
    pub fn new(design: &DyadDesign, spec: &ModelSpec) -> Result<Self> {
        let ind = design.individuals();
        let male_actor = if spec.gender_mean {
            if !design.has_genders() {
                return Err(Error::Specification(
                    "gender_mean requires a gender label for every individual".into(),
                ));
            }
            design
                .dyads()
                .iter()
                .map(|d| f64::from(u8::from(ind[d.actor].gender.is_some_and(|g| g.is_male()))))
                .collect()
        } else {
            vec![0.0; design.num_dyads()]
        };
        let (cluster, num_clusters) = if spec.cluster_intercept {
            let (labels, pos) = design.cluster_index().ok_or_else(|| {
                Error::Specification(
                    "cluster_intercept requires a cluster label for every individual".into(),
                )
            })?;
            let mut per_dyad = Vec::with_capacity(design.num_dyads());
            for d in design.dyads() {
                if pos[d.actor] != pos[d.partner] {
                    return Err(Error::Specification(format!(
                        "cluster_intercept requires within-cluster dyads; ({}, {}) crosses clusters",
                        ind[d.actor].id, ind[d.partner].id
                    )));
                }
                per_dyad.push(pos[d.actor]);
            }
            (Some(per_dyad), labels.len())
        } else {
            (None, 0)
        };
        Ok(MeanStructure {
            male_actor,
            cluster,
            num_clusters,
        })
    }

    /// Mean shift of the composite trait of every directed dyad.
    pub fn shifts(
        &self,
        design: &DyadDesign,
        params: &ModelParams,
        latents: &LatentState,
    ) -> Vec<f64> {
        design
            .dyads()
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let mut s = self.male_actor[k] * params.hyper.mu_male;
                if let Some(c) = &params.covariates {
                    s += c.mean_shift(d.actor, d.partner, k);
                }
                if let Some(cl) = &self.cluster {
                    s += latents.u[cl[k]];
                }
                s
            })
            .collect()
    }
}

/// Traits entering the distal regression of directed dyad `dyad`.
pub fn distal_traits(design: &DyadDesign, latents: &LatentState, dyad: usize) -> DistalTraits {
    let d = design.dyads()[dyad];
    let g = latents.gamma[d.pair];
    DistalTraits {
        alpha_a: latents.alpha[d.actor],
        alpha_p: latents.alpha[d.partner],
        beta_a: latents.beta[d.actor],
        beta_p: latents.beta[d.partner],
        gamma_ap: g[d.slot as usize],
        gamma_pa: g[1 - d.slot as usize],
    }
}

fn check_inputs(
    params: &ModelParams,
    latents: &LatentState,
    design: &DyadDesign,
    responses: &ResponseSet,
    distal: Option<&DistalSet>,
    mean: &MeanStructure,
) -> Result<()> {
    if !latents.conforms_to(design) {
        return Err(Error::invalid("latent state does not match the design"));
    }
    if latents.u.len() != mean.num_clusters {
        return Err(Error::invalid(format!(
            "latent state has {} cluster intercepts, design has {} clusters",
            latents.u.len(),
            mean.num_clusters
        )));
    }
    responses.validate(Some(design))?;
    if responses.categories != params.items.categories() {
        return Err(Error::invalid("item bank does not match the response categories"));
    }
    if let Some(c) = &params.covariates {
        c.validate(design.num_individuals(), design.num_dyads())?;
    }
    if let Some(set) = distal {
        if let Some(r) = set.records.iter().find(|r| r.dyad >= design.num_dyads()) {
            return Err(Error::invalid(format!("distal record for unknown dyad {}", r.dyad)));
        }
        if params.distal.is_none() {
            return Err(Error::invalid("distal data given without distal coefficients"));
        }
    }
    Ok(())
}

fn in_support(params: &ModelParams, spec: &ModelSpec) -> bool {
    let h = &params.hyper;
    let sds_ok = [h.sigma_alpha, h.sigma_beta, h.sigma_gamma]
        .iter()
        .all(|s| spec.prior.sd_in_support(*s));
    let u_ok = !spec.cluster_intercept || spec.prior.sd_in_support(params.sigma_u);
    let finite = h.mu_male.is_finite()
        && params.items.items.iter().all(|i| i.steps.iter().all(|d| d.is_finite()))
        && params
            .distal
            .as_ref()
            .is_none_or(|d| d.b.iter().all(|b| spec.prior.distal_in_support(*b)))
        && params
            .covariates
            .as_ref()
            .is_none_or(|c| c.coefficients().iter().all(|v| v.is_finite()));
    sds_ok && u_ok && h.rho_alpha_beta.abs() <= 1.0 && h.rho_gamma.abs() <= 1.0 && finite
}

fn latent_log_density(params: &ModelParams, latents: &LatentState, spec: &ModelSpec) -> f64 {
    let h = &params.hyper;
    let mut lp = 0.0;
    for (a, b) in latents.alpha.iter().zip(&latents.beta) {
        lp += bivariate_normal_logpdf(*a, *b, h.sigma_alpha, h.sigma_beta, h.rho_alpha_beta);
    }
    for g in &latents.gamma {
        lp += bivariate_normal_logpdf(g[0], g[1], h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
    }
    if spec.cluster_intercept {
        for u in &latents.u {
            lp += normal_logpdf(*u, params.sigma_u);
        }
    }
    lp
}

/// Unnormalised joint log posterior: partial credit log-likelihood of every
/// response, the optional distal Bernoulli log-likelihood, the log-density of
/// the latent traits given the hyperparameters, and the flat log-priors
/// (zero inside the support).
///
/// Latent traits are stored as deviations from their means; the mean
/// structure (covariates, gender shift, cluster intercept) enters the
/// composite trait only. The distal regression uses the deviations.
///
/// Returns `-inf` when a parameter lies outside the prior support.
pub fn joint_log_density(
    params: &ModelParams,
    latents: &LatentState,
    design: &DyadDesign,
    responses: &ResponseSet,
    distal: Option<&DistalSet>,
    spec: &ModelSpec,
) -> Result<f64> {
    let mean = MeanStructure::new(design, spec)?;
    check_inputs(params, latents, design, responses, distal, &mean)?;
    if !in_support(params, spec) {
        return Ok(f64::NEG_INFINITY);
    }
    let shifts = mean.shifts(design, params, latents);
    let mut lp = 0.0;
    for r in &responses.records {
        let d = design.dyads()[r.dyad];
        let theta = latents.alpha[d.actor]
            + latents.beta[d.partner]
            + latents.gamma[d.pair][d.slot as usize]
            + shifts[r.dyad];
        lp += log_prob(usize::from(r.value), theta, params.items.steps(r.item));
    }
    if let (Some(set), Some(coef)) = (distal, &params.distal) {
        for rec in &set.records {
            let t = distal_traits(design, latents, rec.dyad);
            lp += bernoulli_logit_lpmf(rec.outcome, coef.linear_predictor(&t));
        }
    }
    lp += latent_log_density(params, latents, spec);
    Ok(if lp.is_nan() { f64::NEG_INFINITY } else { lp })
}

/// Flat ordering of every continuous unknown, used for gradients.
///
/// Order: the three SDs, the two correlations, `mu_male` (gender mean on),
/// `sigma_u` (cluster intercept on), item steps, free distal coefficients,
/// covariate coefficients, then the latent `alpha`, `beta`, `gamma` (pair by
/// slot) and `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    names: Vec<String>,
    gender: bool,
    cluster: bool,
    covariates: usize,
    individuals: usize,
    pairs: usize,
    clusters: usize,
}

impl ParameterLayout {
    pub fn new(params: &ModelParams, latents: &LatentState, spec: &ModelSpec) -> Self {
        let mut names: Vec<String> = [
            "sigma_alpha",
            "sigma_beta",
            "sigma_gamma",
            "rho_alpha_beta",
            "rho_gamma",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if spec.gender_mean {
            names.push("mu_male".into());
        }
        if spec.cluster_intercept {
            names.push("sigma_u".into());
        }
        for item in &params.items.items {
            for k in 0..item.steps.len() {
                names.push(format!("delta[{},{}]", item.id, k + 1));
            }
        }
        if let Some(d) = &params.distal {
            names.extend(d.form.free_names());
        }
        let covariates = params.covariates.as_ref().map_or(0, |c| {
            names.extend(c.coefficient_names());
            c.num_coefficients()
        });
        for role in ["alpha", "beta"] {
            for i in 0..latents.alpha.len() {
                names.push(format!("{role}[{i}]"));
            }
        }
        for p in 0..latents.gamma.len() {
            names.push(format!("gamma[{p},0]"));
            names.push(format!("gamma[{p},1]"));
        }
        for j in 0..latents.u.len() {
            names.push(format!("u[{j}]"));
        }
        ParameterLayout {
            names,
            gender: spec.gender_mean,
            cluster: spec.cluster_intercept,
            covariates,
            individuals: latents.alpha.len(),
            pairs: latents.gamma.len(),
            clusters: latents.u.len(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn pack(&self, params: &ModelParams, latents: &LatentState) -> Vec<f64> {
        let h = &params.hyper;
        let mut x = vec![
            h.sigma_alpha,
            h.sigma_beta,
            h.sigma_gamma,
            h.rho_alpha_beta,
            h.rho_gamma,
        ];
        if self.gender {
            x.push(h.mu_male);
        }
        if self.cluster {
            x.push(params.sigma_u);
        }
        for item in &params.items.items {
            x.extend(&item.steps);
        }
        if let Some(d) = &params.distal {
            x.extend(d.free_values());
        }
        if let Some(c) = &params.covariates {
            x.extend(c.coefficients());
        }
        x.extend(&latents.alpha);
        x.extend(&latents.beta);
        for g in &latents.gamma {
            x.extend(g);
        }
        x.extend(&latents.u);
        x
    }

    /// Inverse of [`pack`](Self::pack); `template` supplies structure such as
    /// item ids and covariate matrices.
    pub fn unpack(&self, x: &[f64], template: &ModelParams) -> Result<(ModelParams, LatentState)> {
        if x.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                self.len(),
                x.len()
            )));
        }
        let mut it = x.iter().copied();
        let mut next = || it.next().expect("length checked");
        let mut p = template.clone();
        p.hyper.sigma_alpha = next();
        p.hyper.sigma_beta = next();
        p.hyper.sigma_gamma = next();
        p.hyper.rho_alpha_beta = next();
        p.hyper.rho_gamma = next();
        if self.gender {
            p.hyper.mu_male = next();
        }
        if self.cluster {
            p.sigma_u = next();
        }
        for item in &mut p.items.items {
            for s in &mut item.steps {
                *s = next();
            }
        }
        if let Some(d) = &mut p.distal {
            let v: Vec<f64> = (0..d.form.num_free()).map(|_| next()).collect();
            d.set_free_values(&v)?;
        }
        if let Some(c) = &mut p.covariates {
            let v: Vec<f64> = (0..self.covariates).map(|_| next()).collect();
            c.set_coefficients(&v)?;
        }
        let n = self.individuals;
        let alpha = (0..n).map(|_| next()).collect();
        let beta = (0..n).map(|_| next()).collect();
        let gamma = (0..self.pairs).map(|_| [next(), next()]).collect();
        let u = (0..self.clusters).map(|_| next()).collect();
        Ok((
            p,
            LatentState {
                alpha,
                beta,
                gamma,
                u,
            },
        ))
    }
}

/// Joint log density and its gradient in the order of [`ParameterLayout`].
///
/// Valid at interior points: all SDs positive and both correlations strictly
/// inside `(-1, 1)`.
pub fn joint_log_density_gradient(
    params: &ModelParams,
    latents: &LatentState,
    design: &DyadDesign,
    responses: &ResponseSet,
    distal: Option<&DistalSet>,
    spec: &ModelSpec,
) -> Result<(f64, Vec<f64>)> {
    let lp = joint_log_density(params, latents, design, responses, distal, spec)?;
    let layout = ParameterLayout::new(params, latents, spec);
    let mean = MeanStructure::new(design, spec)?;
    let shifts = mean.shifts(design, params, latents);
    let mut g = vec![0.0; layout.len()];

    // offsets
    let mut o = 5;
    let o_mu = spec.gender_mean.then(|| {
        o += 1;
        o - 1
    });
    let o_su = spec.cluster_intercept.then(|| {
        o += 1;
        o - 1
    });
    let mut o_steps = Vec::with_capacity(params.items.len());
    for item in &params.items.items {
        o_steps.push(o);
        o += item.steps.len();
    }
    let o_b = o;
    o += params.distal.as_ref().map_or(0, |d| d.form.num_free());
    let o_c = o;
    o += layout.covariates;
    let n = latents.alpha.len();
    let o_alpha = o;
    let o_beta = o + n;
    let o_gamma = o + 2 * n;
    let o_u = o_gamma + 2 * latents.gamma.len();

    let mut d_delta = vec![0.0; params.items.items.iter().map(|i| i.steps.len()).max().unwrap_or(0)];
    for r in &responses.records {
        let d = design.dyads()[r.dyad];
        let theta = latents.alpha[d.actor]
            + latents.beta[d.partner]
            + latents.gamma[d.pair][d.slot as usize]
            + shifts[r.dyad];
        let steps = params.items.steps(r.item);
        let dd = &mut d_delta[..steps.len()];
        let (_, dt) = log_prob_with_gradient(usize::from(r.value), theta, steps, dd);
        for (k, v) in dd.iter().enumerate() {
            g[o_steps[r.item] + k] += v;
        }
        g[o_alpha + d.actor] += dt;
        g[o_beta + d.partner] += dt;
        g[o_gamma + 2 * d.pair + d.slot as usize] += dt;
        if let Some(i) = o_mu {
            g[i] += dt * mean.male_actor[r.dyad];
        }
        if let Some(cl) = &mean.cluster {
            g[o_u + cl[r.dyad]] += dt;
        }
        if let Some(c) = &params.covariates {
            for (k, x) in c.row(d.actor, d.partner, r.dyad).into_iter().enumerate() {
                g[o_c + k] += dt * x;
            }
        }
    }

    if let (Some(set), Some(coef)) = (distal, &params.distal) {
        let b = &coef.b;
        for rec in &set.records {
            let t = distal_traits(design, latents, rec.dyad);
            let eta = coef.linear_predictor(&t);
            let resid = f64::from(u8::from(rec.outcome)) - inv_logit(eta);
            for (k, x) in coef.form.reduce_features(&t.features()).into_iter().enumerate() {
                g[o_b + k] += resid * x;
            }
            let d = design.dyads()[rec.dyad];
            g[o_alpha + d.actor] += resid * (b[1] + b[7] * t.alpha_p);
            g[o_alpha + d.partner] += resid * (b[2] + b[7] * t.alpha_a);
            g[o_beta + d.actor] += resid * (b[3] + b[8] * t.beta_p);
            g[o_beta + d.partner] += resid * (b[4] + b[8] * t.beta_a);
            let s = d.slot as usize;
            g[o_gamma + 2 * d.pair + s] += resid * (b[5] + b[9] * t.gamma_pa);
            g[o_gamma + 2 * d.pair + 1 - s] += resid * (b[6] + b[9] * t.gamma_ap);
        }
    }

    let h = &params.hyper;
    for i in 0..n {
        let gr = bivariate_normal_gradient(
            latents.alpha[i],
            latents.beta[i],
            h.sigma_alpha,
            h.sigma_beta,
            h.rho_alpha_beta,
        );
        g[o_alpha + i] += gr[0];
        g[o_beta + i] += gr[1];
        g[0] += gr[2];
        g[1] += gr[3];
        g[3] += gr[4];
    }
    for (p, gam) in latents.gamma.iter().enumerate() {
        let gr = bivariate_normal_gradient(gam[0], gam[1], h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
        g[o_gamma + 2 * p] += gr[0];
        g[o_gamma + 2 * p + 1] += gr[1];
        g[2] += gr[2] + gr[3];
        g[4] += gr[4];
    }
    if let Some(i) = o_su {
        let s = params.sigma_u;
        for (j, u) in latents.u.iter().enumerate() {
            g[o_u + j] += -u / (s * s);
            g[i] += -1.0 / s + u * u / (s * s * s);
        }
    }
    Ok((lp, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DistalRecord, Response};
    use crate::design::make_round_robin;
    use crate::model::pcm_log_likelihood;

    #[test]
    fn empty_data_is_latent_density_only() {
        let design = make_round_robin(3).unwrap();
        let params = ModelParams::new(Hyperparameters::speed_dating(), ItemBank::zeros(&[3]).unwrap());
        let mut latents = LatentState::zeros(&design, 0);
        latents.alpha[1] = 0.4;
        latents.gamma[2] = [0.3, -0.1];
        let responses = ResponseSet::empty(vec!["1".into()], vec![3]);
        let spec = ModelSpec::default();
        let lp = joint_log_density(&params, &latents, &design, &responses, None, &spec).unwrap();
        let h = params.hyper;
        let mut expect = 0.0;
        for i in 0..3 {
            expect += bivariate_normal_logpdf(latents.alpha[i], latents.beta[i], h.sigma_alpha, h.sigma_beta, h.rho_alpha_beta);
        }
        for g in &latents.gamma {
            expect += bivariate_normal_logpdf(g[0], g[1], h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
        }
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn outside_support_is_negative_infinity() {
        let design = make_round_robin(2).unwrap();
        let mut params = ModelParams::new(Hyperparameters::speed_dating(), ItemBank::zeros(&[2]).unwrap());
        params.hyper.rho_gamma = 1.5;
        let latents = LatentState::zeros(&design, 0);
        let responses = ResponseSet::empty(vec!["1".into()], vec![2]);
        let lp = joint_log_density(&params, &latents, &design, &responses, None, &ModelSpec::default()).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn single_response_term_by_term() {
        let design = make_round_robin(2).unwrap();
        let items = ItemBank::from_steps(vec![vec![0.5, -0.2]]).unwrap();
        let mut params = ModelParams::new(Hyperparameters::speed_dating(), items);
        params.distal = Some(DistalCoefficients::speed_dating_with_interactions());
        let latents = LatentState {
            alpha: vec![0.3, -0.2],
            beta: vec![0.1, 0.5],
            gamma: vec![[0.6, -0.4]],
            u: vec![],
        };
        let responses = ResponseSet::new(
            vec!["1".into()],
            vec![3],
            vec![Response {
                dyad: 0,
                item: 0,
                value: 2,
            }],
        )
        .unwrap();
        let distal = DistalSet {
            records: vec![DistalRecord {
                dyad: 1,
                outcome: true,
            }],
        };
        let spec = ModelSpec::joint();
        let lp = joint_log_density(&params, &latents, &design, &responses, Some(&distal), &spec).unwrap();
        let h = params.hyper;
        // dyad 0 is (0 -> 1), slot 0
        let theta = 0.3 + 0.5 + 0.6;
        let mut expect = pcm_log_likelihood(2, theta, &[0.5, -0.2]).unwrap();
        let t = DistalTraits {
            alpha_a: -0.2,
            alpha_p: 0.3,
            beta_a: 0.5,
            beta_p: 0.1,
            gamma_ap: -0.4,
            gamma_pa: 0.6,
        };
        let p = crate::model::distal_success_prob(params.distal.as_ref().unwrap(), &t).unwrap();
        expect += p.ln();
        expect += bivariate_normal_logpdf(0.3, 0.1, h.sigma_alpha, h.sigma_beta, h.rho_alpha_beta);
        expect += bivariate_normal_logpdf(-0.2, 0.5, h.sigma_alpha, h.sigma_beta, h.rho_alpha_beta);
        expect += bivariate_normal_logpdf(0.6, -0.4, h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
        assert!((lp - expect).abs() < 1e-12, "{lp} vs {expect}");
    }

    #[test]
    fn index_mismatch_is_an_error() {
        let design = make_round_robin(2).unwrap();
        let params = ModelParams::new(Hyperparameters::speed_dating(), ItemBank::zeros(&[2]).unwrap());
        let latents = LatentState::zeros(&design, 0);
        let responses = ResponseSet {
            item_ids: vec!["1".into()],
            categories: vec![2],
            records: vec![Response {
                dyad: 9,
                item: 0,
                value: 0,
            }],
        };
        assert!(joint_log_density(&params, &latents, &design, &responses, None, &ModelSpec::default()).is_err());
    }

    #[test]
    fn gender_mean_requires_labels() {
        let design = make_round_robin(2).unwrap();
        let spec = ModelSpec {
            gender_mean: true,
            ..ModelSpec::default()
        };
        assert!(matches!(MeanStructure::new(&design, &spec), Err(Error::Specification(_))));
    }
}
