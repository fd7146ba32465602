//! Draws latent traits, item responses and distal outcomes from the full
//! generative model.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateTable, Dataset, DistalRecord, DistalSet, Response, ResponseSet};
use crate::design::DyadDesign;
use crate::error::{Error, Result};
use crate::model::{
    cholesky_2x2, distal_success_prob, distal_traits, pcm_category_probs, CovariateSpec,
    DistalCoefficients, Hyperparameters, ItemBank, LatentState, MeanStructure, ModelParams, ModelSpec,
};
use crate::rng::{Purpose, Rng, Substream};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub design: DyadDesign,
    pub item_bank: ItemBank,
    /// `mu_male` shifts the actor mean of males when the design has gender
    /// labels.
    pub hyper: Hyperparameters,
    pub distal: Option<DistalCoefficients>,
    pub covariates: Option<CovariateSpec>,
    /// SD of the cluster intercept; needs cluster labels on the design.
    pub cluster_sd: Option<f64>,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(design: DyadDesign, item_bank: ItemBank, hyper: Hyperparameters, seed: u64) -> Self {
        SimulationConfig {
            design,
            item_bank,
            hyper,
            distal: None,
            covariates: None,
            cluster_sd: None,
            seed,
        }
    }

    /// The model specification under which this configuration generates
    /// data: gender mean when the design has genders, cluster intercept when
    /// `cluster_sd` is set, covariates as given.
    pub fn implied_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec {
            gender_mean: self.design.has_genders(),
            cluster_intercept: self.cluster_sd.is_some(),
            ..ModelSpec::default()
        };
        if let Some(d) = &self.distal {
            spec.distal = crate::model::DistalMode::Joint;
            spec.distal_interactions = d.form.interactions;
            spec.exchangeable_distal = d.form.exchangeable;
        }
        if let Some(c) = &self.covariates {
            spec.alpha_covariates = c.names_alpha.clone();
            spec.beta_covariates = c.names_beta.clone();
            spec.gamma_covariates = c.names_gamma.clone();
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if let Some(c) = &self.covariates {
            c.validate(self.design.num_individuals(), self.design.num_dyads())?;
        }
        if let Some(s) = self.cluster_sd {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Domain(format!("cluster SD must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Generating values keyed by summary name, as in
    /// [`Truth::parameter_values`].
    pub fn truth_values(&self) -> BTreeMap<String, f64> {
        Truth {
            hyper: self.hyper,
            sigma_u: self.cluster_sd,
            items: self.item_bank.clone(),
            distal: self.distal.clone(),
            covariates: self
                .covariates
                .as_ref()
                .map(|c| c.coefficient_names().into_iter().zip(c.coefficients()).collect())
                .unwrap_or_default(),
            latents: LatentState::default(),
        }
        .parameter_values()
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            hyper: self.hyper,
            items: self.item_bank.clone(),
            distal: self.distal.clone(),
            sigma_u: self.cluster_sd.unwrap_or(0.0),
            covariates: self.covariates.clone(),
        }
    }
}

fn draw_pair(rng: &mut Rng, s1: f64, s2: f64, rho: f64) -> [f64; 2] {
    let l = cholesky_2x2(s1, s2, rho);
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    [l[0][0] * z1, l[1][0] * z1 + l[1][1] * z2]
}

/// `n` zero-mean `(alpha, beta)` pairs with the individual covariance of
/// `hyper`. Mean shifts are added to the composite trait, not here.
pub fn draw_individual_traits(hyper: &Hyperparameters, n: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| draw_pair(rng, hyper.sigma_alpha, hyper.sigma_beta, hyper.rho_alpha_beta))
        .collect()
}

/// `(gamma_12, gamma_21)` for each of `pairs` undirected pairs.
pub fn draw_dyad_traits(hyper: &Hyperparameters, pairs: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..pairs)
        .map(|_| draw_pair(rng, hyper.sigma_gamma, hyper.sigma_gamma, hyper.rho_gamma))
        .collect()
}

/// Latent traits for every individual, pair and cluster of the design.
pub fn draw_latents(config: &SimulationConfig, rng: &mut Rng) -> Result<LatentState> {
    config.validate()?;
    let ind = draw_individual_traits(&config.hyper, config.design.num_individuals(), rng);
    let gamma = draw_dyad_traits(&config.hyper, config.design.num_pairs(), rng);
    let u = match config.cluster_sd {
        Some(sd) => {
            let clusters = MeanStructure::new(&config.design, &config.implied_spec())?.num_clusters;
            (0..clusters)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        None => Vec::new(),
    };
    Ok(LatentState {
        alpha: ind.iter().map(|p| p[0]).collect(),
        beta: ind.iter().map(|p| p[1]).collect(),
        gamma,
        u,
    })
}

fn draw_category(probs: &[f64], rng: &mut Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// One partial credit draw per directed dyad and item, in design order.
pub fn simulate_responses(config: &SimulationConfig, latents: &LatentState, rng: &mut Rng) -> Result<ResponseSet> {
    let design = &config.design;
    let spec = config.implied_spec();
    let mean = MeanStructure::new(design, &spec)?;
    if !latents.conforms_to(design) || latents.u.len() != mean.num_clusters {
        return Err(Error::invalid("latent state does not cover the design"));
    }
    let shifts = mean.shifts(design, &config.params(), latents);
    let bank = &config.item_bank;
    let mut records = Vec::with_capacity(design.num_dyads() * bank.len());
    for (k, d) in design.dyads().iter().enumerate() {
        let theta = latents.alpha[d.actor]
            + latents.beta[d.partner]
            + latents.gamma[d.pair][d.slot as usize]
            + shifts[k];
        for (i, item) in bank.items.iter().enumerate() {
            let probs = pcm_category_probs(theta, &item.steps)?;
            records.push(Response {
                dyad: k,
                item: i,
                value: draw_category(&probs, rng) as u8,
            });
        }
    }
    ResponseSet::new(
        bank.items.iter().map(|i| i.id.clone()).collect(),
        bank.categories(),
        records,
    )
}

/// One Bernoulli outcome per directed dyad.
pub fn simulate_distal(
    coeffs: &DistalCoefficients,
    latents: &LatentState,
    design: &DyadDesign,
    rng: &mut Rng,
) -> Result<DistalSet> {
    if !latents.conforms_to(design) {
        return Err(Error::invalid("latent state does not cover the design"));
    }
    let mut records = Vec::with_capacity(design.num_dyads());
    for k in 0..design.num_dyads() {
        let p = distal_success_prob(coeffs, &distal_traits(design, latents, k))?;
        records.push(DistalRecord {
            dyad: k,
            outcome: rng.random::<f64>() < p,
        });
    }
    Ok(DistalSet { records })
}

/// Generating values and latent traits of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub hyper: Hyperparameters,
    pub sigma_u: Option<f64>,
    pub items: ItemBank,
    pub distal: Option<DistalCoefficients>,
    /// Covariate coefficients by summary name.
    pub covariates: BTreeMap<String, f64>,
    pub latents: LatentState,
}

impl Truth {
    /// True values keyed by the parameter names used in posterior summaries.
    pub fn parameter_values(&self) -> BTreeMap<String, f64> {
        let h = &self.hyper;
        let mut out: BTreeMap<String, f64> = [
            ("sigma_alpha", h.sigma_alpha),
            ("sigma_beta", h.sigma_beta),
            ("sigma_gamma", h.sigma_gamma),
            ("rho_alpha_beta", h.rho_alpha_beta),
            ("rho_gamma", h.rho_gamma),
            ("mu_male", h.mu_male),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        if let Some(s) = self.sigma_u {
            out.insert("sigma_u".into(), s);
        }
        for item in &self.items.items {
            for (k, s) in item.steps.iter().enumerate() {
                out.insert(format!("delta[{},{}]", item.id, k + 1), *s);
            }
        }
        if let Some(d) = &self.distal {
            for (name, v) in d.form.free_names().into_iter().zip(d.free_values()) {
                out.insert(name, v);
            }
            // also under the individual names, so reduced specs can look them up
            for (i, b) in d.b.iter().enumerate() {
                out.entry(format!("b{i}")).or_insert(*b);
            }
        }
        out.extend(self.covariates.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: Dataset,
    pub truth: Truth,
}

fn covariate_tables(design: &DyadDesign, cov: Option<&CovariateSpec>) -> (CovariateTable, CovariateTable) {
    let n = design.num_individuals();
    let mut ind = CovariateTable::empty(n);
    let mut dy = CovariateTable::empty(design.num_dyads());
    if let Some(c) = cov {
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        for (names, x) in [(&c.names_alpha, &c.x_alpha), (&c.names_beta, &c.x_beta)] {
            for (j, name) in names.iter().enumerate() {
                if !columns.iter().any(|(n, _)| n == name) {
                    columns.push((name.clone(), x.column(j).iter().copied().collect()));
                }
            }
        }
        ind = CovariateTable {
            names: columns.iter().map(|(n, _)| n.clone()).collect(),
            values: nalgebra::DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]),
        };
        dy = CovariateTable {
            names: c.names_gamma.clone(),
            values: c.x_gamma.clone(),
        };
    }
    (ind, dy)
}

/// Runs the generative model once under `config.seed`.
pub fn simulate(config: &SimulationConfig) -> Result<Simulation> {
    let mut rng = Substream::new(config.seed, Purpose::Simulation).rng();
    let latents = draw_latents(config, &mut rng)?;
    let responses = simulate_responses(config, &latents, &mut rng)?;
    let distal = match &config.distal {
        Some(c) => Some(simulate_distal(c, &latents, &config.design, &mut rng)?),
        None => None,
    };
    let mut data = Dataset::new(config.design.clone(), responses, distal)?;
    let (ind, dy) = covariate_tables(&config.design, config.covariates.as_ref());
    data.individual_covariates = ind;
    data.dyad_covariates = dy;
    let covariates = config
        .covariates
        .as_ref()
        .map(|c| c.coefficient_names().into_iter().zip(c.coefficients()).collect())
        .unwrap_or_default();
    Ok(Simulation {
        data,
        truth: Truth {
            hyper: config.hyper,
            sigma_u: config.cluster_sd,
            items: config.item_bank.clone(),
            distal: config.distal.clone(),
            covariates,
            latents,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_block, make_round_robin};

    fn rng(seed: u64) -> Rng {
        Substream::new(seed, Purpose::Simulation).rng()
    }

    #[test]
    fn degenerate_distributions() {
        let h = Hyperparameters::new(0.0, 0.0, 0.0, 0.3, 0.2).unwrap();
        assert!(draw_individual_traits(&h, 10, &mut rng(1)).iter().all(|p| p == &[0.0, 0.0]));
        assert!(draw_dyad_traits(&h, 10, &mut rng(1)).iter().all(|p| p == &[0.0, 0.0]));
        let h = Hyperparameters::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        for p in draw_individual_traits(&h, 50, &mut rng(2)) {
            assert_eq!(p[0], p[1]);
        }
        for p in draw_dyad_traits(&h, 50, &mut rng(3)) {
            assert_eq!(p[0], p[1]);
        }
    }

    #[test]
    fn saturated_traits_give_top_category() {
        let design = make_round_robin(4).unwrap();
        let config = SimulationConfig::new(
            design.clone(),
            ItemBank::zeros(&[5]).unwrap(),
            Hyperparameters::speed_dating(),
            1,
        );
        let latents = LatentState {
            alpha: vec![50.0; 4],
            beta: vec![0.0; 4],
            gamma: vec![[0.0; 2]; design.num_pairs()],
            u: vec![],
        };
        let r = simulate_responses(&config, &latents, &mut rng(4)).unwrap();
        assert!(r.records.iter().all(|x| x.value == 4));
    }

    #[test]
    fn one_item_one_pair_gives_two_rows() {
        let config = SimulationConfig::new(
            make_round_robin(2).unwrap(),
            ItemBank::zeros(&[3]).unwrap(),
            Hyperparameters::speed_dating(),
            9,
        );
        let sim = simulate(&config).unwrap();
        assert_eq!(sim.data.responses.len(), 2);
    }

    #[test]
    fn same_seed_same_data() {
        let mut config = SimulationConfig::new(
            make_block(3, 3).unwrap().with_block_genders(),
            ItemBank::five_by_five(),
            Hyperparameters::speed_dating().with_mu_male(0.3),
            17,
        );
        config.distal = Some(DistalCoefficients::speed_dating_with_interactions());
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        config.seed = 18;
        assert_ne!(simulate(&config).unwrap().data, a.data);
    }

    #[test]
    fn missing_latents_rejected() {
        let config = SimulationConfig::new(
            make_round_robin(3).unwrap(),
            ItemBank::zeros(&[2]).unwrap(),
            Hyperparameters::speed_dating(),
            1,
        );
        let latents = LatentState {
            alpha: vec![0.0; 2],
            beta: vec![0.0; 2],
            gamma: vec![],
            u: vec![],
        };
        assert!(simulate_responses(&config, &latents, &mut rng(1)).is_err());
    }
}
