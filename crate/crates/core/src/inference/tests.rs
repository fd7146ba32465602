use super::*;
use crate::data::{Response, ResponseSet};
use crate::design::{make_block, make_k_group, make_round_robin, DesignKind, DyadDesign, GroupSize};
use crate::model::{
    joint_log_density, CovariateSpec, DistalCoefficients, Hyperparameters, ItemBank,
    ParameterLayout,
};
use crate::simulate::{simulate, Simulation, SimulationConfig};
use nalgebra::{DMatrix, DVector};

fn quick(chains: usize, iterations: usize, burn_in: usize, seed: u64) -> McmcConfig {
    McmcConfig {
        chains,
        iterations,
        burn_in,
        seed,
        ..McmcConfig::default()
    }
}

/// Two groups of a (3,3) block design with genders, clusters, one actor
/// covariate and joint distal outcomes.
fn extended_simulation() -> (SimulationConfig, Simulation) {
    let design = make_k_group(DesignKind::Block, &[GroupSize::Block(3, 3), GroupSize::Block(3, 3)])
        .unwrap()
        .with_block_genders()
        .with_group_clusters();
    let n = design.num_individuals();
    let d = design.num_dyads();
    let z: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let mut cfg = SimulationConfig::new(
        design,
        ItemBank::from_steps(vec![vec![-1.0, 0.5], vec![0.0, 1.0, 2.0]]).unwrap(),
        Hyperparameters::speed_dating().with_mu_male(0.3),
        11,
    );
    cfg.distal = Some(DistalCoefficients::speed_dating_with_interactions());
    cfg.cluster_sd = Some(0.4);
    cfg.covariates = Some(CovariateSpec {
        x_alpha: DMatrix::from_column_slice(n, 1, &z),
        c_alpha: DVector::from_vec(vec![0.2]),
        names_alpha: vec!["z".into()],
        ..CovariateSpec::empty(n, d)
    });
    let sim = simulate(&cfg).unwrap();
    (cfg, sim)
}

#[test]
fn cached_terms_reproduce_the_joint_log_density() {
    let (cfg, sim) = extended_simulation();
    let spec = cfg.implied_spec();
    let config = quick(1, 10, 5, 3);
    let problem = build_problem(&spec, &sim.data, &config).unwrap();
    let (par, latents, lp) = sampler::final_state(&problem, 0, 25);
    let template = cfg.params();
    let layout = ParameterLayout::new(&template, &latents, &spec);
    assert_eq!(&layout.names()[..par.len()], problem.names.as_slice());
    let mut x = par.clone();
    x.extend(layout.pack(&template, &latents)[par.len()..].iter());
    let (params, lat) = layout.unpack(&x, &template).unwrap();
    let exact = joint_log_density(
        &params,
        &lat,
        &sim.data.design,
        &sim.data.responses,
        sim.data.distal.as_ref(),
        &spec,
    )
    .unwrap();
    assert!((exact - lp).abs() < 1e-8 * exact.abs().max(1.0), "{exact} vs {lp}");
}

/// Log posterior of a single step difficulty when every latent trait is held
/// at zero: `k` successes out of `n` Bernoulli(logistic(-delta)) trials.
fn quadrature_moments(k: usize, n: usize) -> (f64, f64) {
    let h = 1e-3;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    let mut x: f64 = -15.0;
    while x <= 15.0 {
        let p = 1.0 / (1.0 + x.exp());
        let w = (k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
        z += w;
        m1 += w * x;
        m2 += w * x * x;
        x += h;
    }
    let mean = m1 / z;
    (mean, (m2 / z - mean * mean).sqrt())
}

#[test]
fn single_step_posterior_matches_quadrature() {
    let design = make_round_robin(4).unwrap();
    let records: Vec<Response> = (0..design.num_dyads())
        .map(|d| Response {
            dyad: d,
            item: 0,
            value: u8::from(d % 3 != 0),
        })
        .collect();
    let ones = records.iter().filter(|r| r.value == 1).count();
    let n = records.len();
    let responses = ResponseSet::new(vec!["1".into()], vec![2], records).unwrap();
    let data = Dataset::new(design, responses, None).unwrap();
    let mut spec = ModelSpec::default();
    for s in ["sigma_alpha", "sigma_beta", "sigma_gamma"] {
        spec.pinned.insert(s.into(), 0.0);
    }
    let draws = fit(&spec, &data, &quick(4, 3000, 1000, 5)).unwrap();
    let summary = summarize(&draws).unwrap();
    let row = summary.get("delta[1,1]").unwrap();
    let (mean, sd) = quadrature_moments(ones, n);
    assert!((row.mean - mean).abs() < 0.1 * sd, "{} vs {mean}", row.mean);
    assert!((row.sd / sd - 1.0).abs() < 0.1, "{} vs {sd}", row.sd);
    assert!(row.rhat.below(1.05));
    assert!(draws.pinned[..5].iter().all(|p| *p));
}

#[test]
fn draws_are_deterministic_and_thread_independent() {
    let (cfg, sim) = extended_simulation();
    let spec = cfg.implied_spec();
    let config = quick(3, 60, 30, 9);
    let a = fit(&spec, &sim.data, &config).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| fit(&spec, &sim.data, &config)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.values.len(), 3 * 30 * a.names.len());
    assert!(a.lp.iter().all(|l| l.is_finite()));
    let other = fit(&spec, &sim.data, &quick(3, 60, 30, 10)).unwrap();
    assert_ne!(a.values, other.values);
}

#[test]
fn support_constraints_hold_for_every_draw() {
    let (cfg, sim) = extended_simulation();
    let draws = fit(&cfg.implied_spec(), &sim.data, &quick(2, 80, 40, 2)).unwrap();
    for name in ["sigma_alpha", "sigma_beta", "sigma_gamma", "sigma_u"] {
        assert!(draws.series(name).unwrap().iter().all(|v| *v >= 0.0));
    }
    for name in ["rho_alpha_beta", "rho_gamma"] {
        assert!(draws.series(name).unwrap().iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn pinned_extension_reproduces_the_base_posterior() {
    let design = make_block(3, 3).unwrap().with_block_genders();
    let cfg = SimulationConfig::new(design, ItemBank::five_by_five(), Hyperparameters::speed_dating(), 4);
    let sim = simulate(&cfg).unwrap();
    let config = quick(2, 60, 30, 4);
    let base = fit(&ModelSpec::default(), &sim.data, &config).unwrap();
    let mut spec = ModelSpec {
        gender_mean: true,
        ..ModelSpec::default()
    };
    spec.pinned.insert("mu_male".into(), 0.0);
    let ext = fit(&spec, &sim.data, &config).unwrap();
    assert_eq!(ext.names[5], "mu_male");
    for (p, name) in base.names.iter().enumerate() {
        let q = ext.parameter_index(name).unwrap();
        assert_eq!(base.chain_series(p), ext.chain_series(q), "{name}");
    }
}

#[test]
fn degenerate_responses_run_and_flag_nonconvergence() {
    let design = make_round_robin(4).unwrap();
    let records = (0..design.num_dyads())
        .map(|d| Response {
            dyad: d,
            item: 0,
            value: 0,
        })
        .collect();
    let responses = ResponseSet::new(vec!["1".into()], vec![3], records).unwrap();
    let data = Dataset::new(design, responses, None).unwrap();
    let draws = fit(&ModelSpec::default(), &data, &quick(4, 600, 300, 1)).unwrap();
    let summary = summarize(&draws).unwrap();
    let flagged = summary.unconverged(1.05);
    assert!(
        flagged.iter().any(|r| r.parameter.starts_with("delta")),
        "{:?}",
        summary.rows
    );
}

#[test]
fn identification_and_specification_errors() {
    let design = DyadDesign::from_id_edges(&[("a", "b"), ("b", "a")]).unwrap();
    let records = vec![
        Response {
            dyad: 0,
            item: 0,
            value: 1,
        },
        Response {
            dyad: 1,
            item: 0,
            value: 0,
        },
    ];
    let responses = ResponseSet::new(vec!["1".into()], vec![2], records).unwrap();
    let data = Dataset::new(design, responses, None).unwrap();
    let config = quick(2, 20, 10, 1);
    let err = fit(&ModelSpec::default(), &data, &config).unwrap_err();
    assert!(matches!(err, Error::Identification(_)), "{err}");
    let allowed = McmcConfig {
        allow_unidentified: true,
        ..config.clone()
    };
    assert!(fit(&ModelSpec::default(), &data, &allowed).is_ok());

    let mut spec = ModelSpec::default();
    spec.pinned.insert("mu_male".into(), 0.0);
    assert!(matches!(
        fit(&spec, &data, &allowed).unwrap_err(),
        Error::Specification(_)
    ));
    assert!(matches!(
        fit(&ModelSpec::joint(), &data, &allowed).unwrap_err(),
        Error::Specification(_)
    ));
}

#[test]
fn config_validation() {
    assert!(McmcConfig::default().validate().is_ok());
    assert_eq!(McmcConfig::default().retained(), 1000);
    for bad in [
        quick(2, 100, 100, 1),
        quick(0, 100, 10, 1),
        McmcConfig {
            thinning: 0,
            ..McmcConfig::default()
        },
        McmcConfig {
            latent_draws_every: Some(0),
            ..McmcConfig::default()
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let thinned = McmcConfig {
        thinning: 3,
        ..McmcConfig::default()
    };
    assert_eq!(thinned.retained(), 333);
}

#[test]
fn scores_require_retained_moments() {
    let (cfg, sim) = extended_simulation();
    let config = McmcConfig {
        latent_moments: false,
        ..quick(2, 20, 10, 1)
    };
    let draws = fit(&cfg.implied_spec(), &sim.data, &config).unwrap();
    assert!(matches!(eap_latent_scores(&draws), Err(Error::InvalidState(_))));
    let with = fit(&cfg.implied_spec(), &sim.data, &quick(2, 20, 10, 1)).unwrap();
    let scores = eap_latent_scores(&with).unwrap();
    let n = sim.data.design.num_individuals();
    assert_eq!(scores.len(), 2 * n + sim.data.design.num_dyads() + 2);
    assert_eq!(scores[2 * n].role, LatentRole::Gamma);
    assert!(scores[2 * n].id.contains(':'));
}
