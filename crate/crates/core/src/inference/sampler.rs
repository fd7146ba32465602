//! Adaptive random-walk Metropolis-within-Gibbs over the joint posterior.
//!
//! One iteration visits, in order: every individual's `(alpha, beta)`, every
//! pair's `(gamma_ap, gamma_pa)`, every cluster intercept, every item's step
//! vector, the mean-structure coefficients, the distal coefficients, the
//! hyperparameter blocks (SDs on the log scale, correlations on the atanh
//! scale, both with their Jacobians), and finally two families of joint moves
//! that fight the strongest posterior ridges:
//!
//! * scale moves multiply an SD and all of its latent traits by the same
//!   factor `e^eps`;
//! * shift moves add the same constant to all latents of one role and to all
//!   step difficulties, which leaves every partial credit probability
//!   unchanged.
//!
//! Proposal scales (and, for the small parameter blocks, proposal shapes)
//! adapt during burn-in only. Log-likelihood contributions are cached per
//! response and per distal record; a rejected move restores the previous
//! values.

use rand::Rng as _;

use crate::data::{DistalSet, ResponseSet};
use crate::design::DyadDesign;
use crate::error::{Error, Result};
use crate::model::{
    bernoulli_logit_lpmf, bivariate_normal_logpdf, log_prob, normal_logpdf, CovariateSpec,
    DistalCoefficients, DistalForm, DistalTraits, LatentState, MeanStructure, ModelSpec,
    PriorConfig, NUM_DISTAL,
};
use crate::rng::{Purpose, Rng, Substream};

use super::proposal::Proposal;
use super::scores::LatentMoments;
use super::McmcConfig;

#[derive(Debug, Clone, Copy)]
struct Resp {
    actor: u32,
    partner: u32,
    pair: u32,
    dyad: u32,
    item: u32,
    slot: u8,
    value: u8,
}

#[derive(Debug, Clone, Copy)]
struct Dist {
    actor: u32,
    partner: u32,
    pair: u32,
    slot: u8,
    outcome: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Log,
    Atanh,
    Identity,
}

/// Everything the chains share; immutable once built.
pub(crate) struct Problem {
    /// Names of the non-latent parameters, in output order.
    pub names: Vec<String>,
    /// Fixed value of every parameter that is not sampled.
    pub pinned: Vec<Option<f64>>,
    kinds: Vec<Transform>,
    prior: PriorConfig,
    config: McmcConfig,
    n: usize,
    pairs: usize,
    clusters: usize,
    resp: Vec<Resp>,
    dist: Vec<Dist>,
    by_ind: Vec<Vec<u32>>,
    by_pair: Vec<Vec<u32>>,
    by_item: Vec<Vec<u32>>,
    by_cluster: Vec<Vec<u32>>,
    dist_by_ind: Vec<Vec<u32>>,
    dist_by_pair: Vec<Vec<u32>>,
    dyads_by_cluster: Vec<Vec<u32>>,
    dyad_cluster: Option<Vec<usize>>,
    dyad_pair: Vec<u32>,
    dyad_slot: Vec<u8>,
    male_actor: Vec<f64>,
    male_ind: Vec<f64>,
    /// Covariate regressor rows per directed dyad, row-major.
    xrow: Vec<f64>,
    ncov: usize,
    covariates: Option<CovariateSpec>,
    delta_off: Vec<usize>,
    nsteps: Vec<usize>,
    mu: Option<usize>,
    su: Option<usize>,
    distal_form: Option<DistalForm>,
    distal_off: usize,
    ndistal: usize,
    cov_off: usize,
    cluster_intercept: bool,
    indiv_hyper: Vec<usize>,
    dyad_hyper: Vec<usize>,
    cluster_hyper: Vec<usize>,
    mean_block: Vec<usize>,
    distal_block: Vec<usize>,
    item_blocks: Vec<Vec<usize>>,
    alpha_free: bool,
    beta_free: bool,
    gamma_free: bool,
    u_free: bool,
    /// Scale moves for alpha, beta, gamma, u.
    scale_moves: [bool; 4],
    shift_moves: bool,
    moments: LatentMoments,
}

/// Inputs of [`Problem::new`].
pub(crate) struct Setup<'a> {
    pub design: &'a DyadDesign,
    pub responses: &'a ResponseSet,
    pub distal: Option<&'a DistalSet>,
    pub spec: &'a ModelSpec,
    pub mean: MeanStructure,
    pub covariates: Option<CovariateSpec>,
    pub config: McmcConfig,
}

const HYPER_NAMES: [&str; 5] = [
    "sigma_alpha",
    "sigma_beta",
    "sigma_gamma",
    "rho_alpha_beta",
    "rho_gamma",
];

/// Names of the non-latent parameters for a model, in output order.
pub(crate) fn parameter_names(
    spec: &ModelSpec,
    responses: &ResponseSet,
    covariates: Option<&CovariateSpec>,
    distal: bool,
) -> Vec<String> {
    let mut names: Vec<String> = HYPER_NAMES.iter().map(|s| s.to_string()).collect();
    if spec.gender_mean {
        names.push("mu_male".into());
    }
    if spec.cluster_intercept {
        names.push("sigma_u".into());
    }
    for (id, m) in responses.item_ids.iter().zip(&responses.categories) {
        for k in 1..*m {
            names.push(format!("delta[{id},{k}]"));
        }
    }
    if distal {
        names.extend(spec.distal_form().free_names());
    }
    if let Some(c) = covariates {
        names.extend(c.coefficient_names());
    }
    names
}

impl Problem {
    pub fn new(s: Setup<'_>) -> Result<Self> {
        let design = s.design;
        let spec = s.spec;
        let use_distal = s.distal.is_some();
        let names = parameter_names(spec, s.responses, s.covariates.as_ref(), use_distal);
        let pos = |n: &str| names.iter().position(|x| x == n);
        let mu = pos("mu_male");
        let su = pos("sigma_u");
        let mut pinned: Vec<Option<f64>> = names.iter().map(|n| spec.pinned(n)).collect();

        // A correlation is meaningless when one of its SDs is held at zero.
        let zero = |p: &Vec<Option<f64>>, i: usize| p[i] == Some(0.0);
        if zero(&pinned, 0) || zero(&pinned, 1) {
            pinned[3] = Some(pinned[3].unwrap_or(0.0));
        }
        if zero(&pinned, 2) {
            pinned[4] = Some(pinned[4].unwrap_or(0.0));
        }
        let alpha_free = !zero(&pinned, 0);
        let beta_free = !zero(&pinned, 1);
        let gamma_free = !zero(&pinned, 2);
        let u_free = su.is_some_and(|j| pinned[j] != Some(0.0));

        let mut kinds = vec![Transform::Identity; names.len()];
        for j in [0, 1, 2].into_iter().chain(su) {
            kinds[j] = Transform::Log;
        }
        kinds[3] = Transform::Atanh;
        kinds[4] = Transform::Atanh;

        let mut off = 5 + usize::from(mu.is_some()) + usize::from(su.is_some());
        let mut delta_off = Vec::new();
        let mut nsteps = Vec::new();
        for m in &s.responses.categories {
            delta_off.push(off);
            nsteps.push(m - 1);
            off += m - 1;
        }
        let distal_form = use_distal.then(|| spec.distal_form());
        let ndistal = distal_form.map_or(0, |f| f.num_free());
        let distal_off = off;
        off += ndistal;
        let cov_off = off;
        let ncov = s.covariates.as_ref().map_or(0, |c| c.num_coefficients());

        let free = |idx: &mut dyn Iterator<Item = usize>| -> Vec<usize> {
            idx.filter(|&j| pinned[j].is_none()).collect()
        };
        let indiv_hyper = free(&mut [0usize, 1, 3].into_iter());
        let dyad_hyper = free(&mut [2usize, 4].into_iter());
        let cluster_hyper = free(&mut su.into_iter());
        let mean_block = free(&mut mu.into_iter().chain(cov_off..cov_off + ncov));
        let distal_block = free(&mut (distal_off..distal_off + ndistal));
        let item_blocks: Vec<Vec<usize>> = delta_off
            .iter()
            .zip(&nsteps)
            .map(|(&o, &k)| free(&mut (o..o + k)))
            .collect();
        let all_deltas_free = item_blocks
            .iter()
            .zip(&nsteps)
            .all(|(b, &k)| b.len() == k);

        let dyads = design.dyads();
        let resp: Vec<Resp> = s
            .responses
            .records
            .iter()
            .map(|r| {
                let d = dyads[r.dyad];
                Resp {
                    actor: d.actor as u32,
                    partner: d.partner as u32,
                    pair: d.pair as u32,
                    dyad: r.dyad as u32,
                    item: r.item as u32,
                    slot: d.slot,
                    value: r.value,
                }
            })
            .collect();
        let dist: Vec<Dist> = s.distal.map_or_else(Vec::new, |set| {
            set.records
                .iter()
                .map(|r| {
                    let d = dyads[r.dyad];
                    Dist {
                        actor: d.actor as u32,
                        partner: d.partner as u32,
                        pair: d.pair as u32,
                        slot: d.slot,
                        outcome: r.outcome,
                    }
                })
                .collect()
        });
        let n = design.num_individuals();
        let pairs = design.num_pairs();
        let clusters = s.mean.num_clusters;
        let mut by_ind = vec![Vec::new(); n];
        let mut by_pair = vec![Vec::new(); pairs];
        let mut by_item = vec![Vec::new(); nsteps.len()];
        let mut by_cluster = vec![Vec::new(); clusters];
        for (k, r) in resp.iter().enumerate() {
            let k = k as u32;
            by_ind[r.actor as usize].push(k);
            by_ind[r.partner as usize].push(k);
            by_pair[r.pair as usize].push(k);
            by_item[r.item as usize].push(k);
            if let Some(cl) = &s.mean.cluster {
                by_cluster[cl[r.dyad as usize]].push(k);
            }
        }
        let mut dist_by_ind = vec![Vec::new(); n];
        let mut dist_by_pair = vec![Vec::new(); pairs];
        for (k, r) in dist.iter().enumerate() {
            let k = k as u32;
            dist_by_ind[r.actor as usize].push(k);
            dist_by_ind[r.partner as usize].push(k);
            dist_by_pair[r.pair as usize].push(k);
        }
        let mut dyads_by_cluster = vec![Vec::new(); clusters];
        if let Some(cl) = &s.mean.cluster {
            for (d, &c) in cl.iter().enumerate() {
                dyads_by_cluster[c].push(d as u32);
            }
        }
        let mut xrow = Vec::with_capacity(dyads.len() * ncov);
        if let Some(c) = &s.covariates {
            for (k, d) in dyads.iter().enumerate() {
                xrow.extend(c.row(d.actor, d.partner, k));
            }
        }
        let male_ind = design
            .individuals()
            .iter()
            .map(|i| f64::from(u8::from(spec.gender_mean && i.gender.is_some_and(|g| g.is_male()))))
            .collect();

        let cluster_labels = if spec.cluster_intercept {
            design.cluster_index().map(|(l, _)| l).unwrap_or_default()
        } else {
            Vec::new()
        };
        let moments = LatentMoments::for_design(design, &cluster_labels);

        let scale_moves = [
            alpha_free && pinned[0].is_none(),
            beta_free && pinned[1].is_none(),
            gamma_free && pinned[2].is_none(),
            u_free && su.is_some_and(|j| pinned[j].is_none()),
        ];
        Ok(Problem {
            pinned,
            kinds,
            prior: spec.prior,
            config: s.config,
            n,
            pairs,
            clusters,
            resp,
            dist,
            by_ind,
            by_pair,
            by_item,
            by_cluster,
            dist_by_ind,
            dist_by_pair,
            dyads_by_cluster,
            dyad_cluster: s.mean.cluster.clone(),
            dyad_pair: dyads.iter().map(|d| d.pair as u32).collect(),
            dyad_slot: dyads.iter().map(|d| d.slot).collect(),
            male_actor: s.mean.male_actor.clone(),
            male_ind,
            xrow,
            ncov,
            covariates: s.covariates,
            delta_off,
            nsteps,
            mu,
            su,
            distal_form,
            distal_off,
            ndistal,
            cov_off,
            cluster_intercept: spec.cluster_intercept,
            indiv_hyper,
            dyad_hyper,
            cluster_hyper,
            mean_block,
            distal_block,
            item_blocks,
            alpha_free,
            beta_free,
            gamma_free,
            u_free,
            scale_moves,
            shift_moves: all_deltas_free,
            moments,
            names,
        })
    }

    fn is_distal(&self, j: usize) -> bool {
        j >= self.distal_off && j < self.distal_off + self.ndistal
    }

    fn distal_b(&self, par: &[f64]) -> [f64; NUM_DISTAL] {
        match self.distal_form {
            Some(form) => {
                let mut c = DistalCoefficients::zeros(form);
                c.set_free_values(&par[self.distal_off..self.distal_off + self.ndistal])
                    .expect("length matches the form");
                c.b
            }
            None => [0.0; NUM_DISTAL],
        }
    }
}

/// Output of one chain.
pub(crate) struct ChainOutput {
    /// Retained parameter draws, iteration-major.
    pub values: Vec<f64>,
    pub lp: Vec<f64>,
    /// `(block kind, accepted, proposed)` after burn-in.
    pub acceptance: Vec<(&'static str, u64, u64)>,
    pub moments: Option<LatentMoments>,
    pub snapshots: Vec<LatentState>,
}

struct Props {
    indiv: Vec<Proposal>,
    pair: Vec<Proposal>,
    cluster: Vec<Proposal>,
    item: Vec<Proposal>,
    mean: Proposal,
    distal: Proposal,
    indiv_hyper: Proposal,
    dyad_hyper: Proposal,
    cluster_hyper: Proposal,
    scale: [Proposal; 4],
    shift: [Proposal; 3],
}

impl Props {
    fn all_mut(&mut self) -> impl Iterator<Item = &mut Proposal> {
        self.indiv
            .iter_mut()
            .chain(self.pair.iter_mut())
            .chain(self.cluster.iter_mut())
            .chain(self.item.iter_mut())
            .chain([
                &mut self.mean,
                &mut self.distal,
                &mut self.indiv_hyper,
                &mut self.dyad_hyper,
                &mut self.cluster_hyper,
            ])
            .chain(self.scale.iter_mut())
            .chain(self.shift.iter_mut())
    }

    fn tally(&self) -> Vec<(&'static str, u64, u64)> {
        let sum = |ps: &[Proposal]| {
            ps.iter()
                .fold((0, 0), |(a, p), x| (a + x.accepted, p + x.proposed))
        };
        let groups: [(&'static str, (u64, u64)); 11] = [
            ("individual", sum(&self.indiv)),
            ("pair", sum(&self.pair)),
            ("cluster", sum(&self.cluster)),
            ("item", sum(&self.item)),
            ("mean", (self.mean.accepted, self.mean.proposed)),
            ("distal", (self.distal.accepted, self.distal.proposed)),
            ("individual_hyper", (self.indiv_hyper.accepted, self.indiv_hyper.proposed)),
            ("dyad_hyper", (self.dyad_hyper.accepted, self.dyad_hyper.proposed)),
            ("cluster_hyper", (self.cluster_hyper.accepted, self.cluster_hyper.proposed)),
            ("scale", sum(&self.scale)),
            ("shift", sum(&self.shift)),
        ];
        groups
            .into_iter()
            .filter(|(_, (_, p))| *p > 0)
            .map(|(k, (a, p))| (k, a, p))
            .collect()
    }
}

#[derive(Clone, Copy)]
enum ParamBlock {
    Item(usize),
    Mean,
    Distal,
    IndivHyper,
    DyadHyper,
    ClusterHyper,
}

struct Chain<'p> {
    p: &'p Problem,
    rng: Rng,
    par: Vec<f64>,
    b: [f64; NUM_DISTAL],
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<[f64; 2]>,
    u: Vec<f64>,
    shift: Vec<f64>,
    rll: Vec<f64>,
    dll: Vec<f64>,
    scratch: Vec<f64>,
    dscratch: Vec<f64>,
    saved: Vec<f64>,
    props: Props,
    adapting: bool,
}

fn forward(kind: Transform, x: f64) -> f64 {
    match kind {
        Transform::Log => x.ln(),
        Transform::Atanh => x.atanh(),
        Transform::Identity => x,
    }
}

fn inverse(kind: Transform, y: f64) -> f64 {
    match kind {
        Transform::Log => y.exp(),
        Transform::Atanh => y.tanh(),
        Transform::Identity => y,
    }
}

fn accept(rng: &mut Rng, log_ratio: f64) -> bool {
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

impl<'p> Chain<'p> {
    fn new(p: &'p Problem, chain: u32) -> Self {
        let mut rng = Substream::new(p.config.seed, Purpose::Chain).worker(chain).rng();
        let mut par = vec![0.0; p.names.len()];
        for (j, slot) in par.iter_mut().enumerate() {
            if let Some(v) = p.pinned[j] {
                *slot = v;
                continue;
            }
            *slot = match (p.kinds[j], j) {
                (Transform::Log, _) => rng.random_range(-0.5..0.5f64).exp(),
                (Transform::Atanh, _) => rng.random_range(-0.3..0.3),
                _ if p.delta_off.first().is_some_and(|&o| j >= o && j < p.distal_off) => {
                    rng.random_range(-1.0..1.0)
                }
                _ if j >= p.distal_off && j < p.cov_off => rng.random_range(-0.5..0.5),
                _ => rng.random_range(-0.3..0.3),
            };
        }
        let normal = |rng: &mut Rng, sd: f64| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            sd * z
        };
        let alpha = (0..p.n)
            .map(|_| if p.alpha_free { normal(&mut rng, 0.5) } else { 0.0 })
            .collect();
        let beta = (0..p.n)
            .map(|_| if p.beta_free { normal(&mut rng, 0.5) } else { 0.0 })
            .collect();
        let gamma = (0..p.pairs)
            .map(|_| {
                if p.gamma_free {
                    [normal(&mut rng, 0.5), normal(&mut rng, 0.5)]
                } else {
                    [0.0; 2]
                }
            })
            .collect();
        let u = (0..p.clusters)
            .map(|_| if p.u_free { normal(&mut rng, 0.1) } else { 0.0 })
            .collect();

        let both = |free_a: bool, free_b: bool| usize::from(free_a) + usize::from(free_b);
        let props = Props {
            indiv: (0..p.n)
                .map(|_| Proposal::isotropic(both(p.alpha_free, p.beta_free), 0.5))
                .collect(),
            pair: (0..p.pairs).map(|_| Proposal::isotropic(2, 0.5)).collect(),
            cluster: (0..p.clusters).map(|_| Proposal::isotropic(1, 0.2)).collect(),
            item: p
                .item_blocks
                .iter()
                .map(|b| Proposal::learning(b.len(), 0.1))
                .collect(),
            mean: Proposal::learning(p.mean_block.len(), 0.05),
            distal: Proposal::learning(p.distal_block.len(), 0.1),
            indiv_hyper: Proposal::learning(p.indiv_hyper.len(), 0.1),
            dyad_hyper: Proposal::learning(p.dyad_hyper.len(), 0.1),
            cluster_hyper: Proposal::learning(p.cluster_hyper.len(), 0.2),
            scale: std::array::from_fn(|_| Proposal::isotropic(1, 0.05)),
            shift: std::array::from_fn(|_| Proposal::isotropic(1, 0.05)),
        };
        let b = p.distal_b(&par);
        let mut chain = Chain {
            p,
            rng,
            par,
            b,
            alpha,
            beta,
            gamma,
            u,
            shift: vec![0.0; p.dyad_pair.len()],
            rll: vec![0.0; p.resp.len()],
            dll: vec![0.0; p.dist.len()],
            scratch: vec![0.0; p.resp.len()],
            dscratch: vec![0.0; p.dist.len()],
            saved: vec![0.0; p.dyad_pair.len()],
            props,
            adapting: true,
        };
        chain.refresh();
        chain
    }

    fn shift_of(&self, d: usize) -> f64 {
        let p = self.p;
        let mut s = 0.0;
        if let Some(mu) = p.mu {
            s += p.male_actor[d] * self.par[mu];
        }
        if p.ncov > 0 {
            let row = &p.xrow[d * p.ncov..(d + 1) * p.ncov];
            let c = &self.par[p.cov_off..p.cov_off + p.ncov];
            s += row.iter().zip(c).map(|(x, c)| x * c).sum::<f64>();
        }
        if let Some(cl) = &p.dyad_cluster {
            s += self.u[cl[d]];
        }
        s
    }

    #[inline]
    fn ll_resp(&self, r: usize) -> f64 {
        let x = &self.p.resp[r];
        let theta = self.alpha[x.actor as usize]
            + self.beta[x.partner as usize]
            + self.gamma[x.pair as usize][x.slot as usize]
            + self.shift[x.dyad as usize];
        let it = x.item as usize;
        let off = self.p.delta_off[it];
        log_prob(usize::from(x.value), theta, &self.par[off..off + self.p.nsteps[it]])
    }

    #[inline]
    fn ll_dist(&self, k: usize) -> f64 {
        let x = &self.p.dist[k];
        let g = self.gamma[x.pair as usize];
        let (a, p) = (x.actor as usize, x.partner as usize);
        let t = DistalTraits {
            alpha_a: self.alpha[a],
            alpha_p: self.alpha[p],
            beta_a: self.beta[a],
            beta_p: self.beta[p],
            gamma_ap: g[x.slot as usize],
            gamma_pa: g[1 - x.slot as usize],
        };
        let eta: f64 = self.b.iter().zip(t.features()).map(|(b, x)| b * x).sum();
        bernoulli_logit_lpmf(x.outcome, eta)
    }

    /// Recomputes every cache from the current state.
    fn refresh(&mut self) {
        for d in 0..self.shift.len() {
            self.shift[d] = self.shift_of(d);
        }
        for r in 0..self.rll.len() {
            self.rll[r] = self.ll_resp(r);
        }
        for k in 0..self.dll.len() {
            self.dll[k] = self.ll_dist(k);
        }
    }

    /// Evaluates the responses in `list` at the current state into the
    /// scratch buffer; returns `(cached sum, new sum)`.
    fn eval_resp(&mut self, list: &[u32]) -> (f64, f64) {
        let mut old = 0.0;
        let mut new = 0.0;
        for (k, &r) in list.iter().enumerate() {
            let v = self.ll_resp(r as usize);
            self.scratch[k] = v;
            old += self.rll[r as usize];
            new += v;
        }
        (old, new)
    }

    fn commit_resp(&mut self, list: &[u32]) {
        for (k, &r) in list.iter().enumerate() {
            self.rll[r as usize] = self.scratch[k];
        }
    }

    fn eval_dist(&mut self, list: &[u32]) -> (f64, f64) {
        let mut old = 0.0;
        let mut new = 0.0;
        for (k, &r) in list.iter().enumerate() {
            let v = self.ll_dist(r as usize);
            self.dscratch[k] = v;
            old += self.dll[r as usize];
            new += v;
        }
        (old, new)
    }

    fn commit_dist(&mut self, list: &[u32]) {
        for (k, &r) in list.iter().enumerate() {
            self.dll[r as usize] = self.dscratch[k];
        }
    }

    /// Full passes used by moves that touch every response or record.
    fn eval_all_resp(&mut self) -> (f64, f64) {
        let mut old = 0.0;
        let mut new = 0.0;
        for r in 0..self.rll.len() {
            let v = self.ll_resp(r);
            self.scratch[r] = v;
            old += self.rll[r];
            new += v;
        }
        (old, new)
    }

    fn eval_all_dist(&mut self) -> (f64, f64) {
        let mut old = 0.0;
        let mut new = 0.0;
        for k in 0..self.dll.len() {
            let v = self.ll_dist(k);
            self.dscratch[k] = v;
            old += self.dll[k];
            new += v;
        }
        (old, new)
    }

    fn indiv_prior(&self, i: usize) -> f64 {
        let h = &self.par;
        bivariate_normal_logpdf(self.alpha[i], self.beta[i], h[0], h[1], h[3])
    }

    fn pair_prior(&self, q: usize) -> f64 {
        let h = &self.par;
        let g = self.gamma[q];
        bivariate_normal_logpdf(g[0], g[1], h[2], h[2], h[4])
    }

    fn indiv_prior_sum(&self) -> f64 {
        (0..self.p.n).map(|i| self.indiv_prior(i)).sum()
    }

    fn pair_prior_sum(&self) -> f64 {
        (0..self.p.pairs).map(|q| self.pair_prior(q)).sum()
    }

    fn u_prior_sum(&self) -> f64 {
        match self.p.su {
            Some(j) => self.u.iter().map(|u| normal_logpdf(*u, self.par[j])).sum(),
            None => 0.0,
        }
    }

    fn update_individual(&mut self, i: usize) {
        let p = self.p;
        let dim = self.props.indiv[i].dim();
        if dim == 0 {
            return;
        }
        let mut step = [0.0; 2];
        self.props.indiv[i].draw(&mut self.rng, &mut step[..dim]);
        let (old_a, old_b) = (self.alpha[i], self.beta[i]);
        let prior_old = self.indiv_prior(i);
        let mut k = 0;
        if p.alpha_free {
            self.alpha[i] += step[k];
            k += 1;
        }
        if p.beta_free {
            self.beta[i] += step[k];
        }
        let list = &p.by_ind[i];
        let dlist = &p.dist_by_ind[i];
        let (ro, rn) = self.eval_resp(list);
        let (d_o, d_n) = self.eval_dist(dlist);
        let ratio = rn - ro + d_n - d_o + self.indiv_prior(i) - prior_old;
        let ok = accept(&mut self.rng, ratio);
        if ok {
            self.commit_resp(list);
            self.commit_dist(dlist);
        } else {
            self.alpha[i] = old_a;
            self.beta[i] = old_b;
        }
        self.props.indiv[i].record(ok, self.adapting);
    }

    fn update_pair(&mut self, q: usize) {
        let p = self.p;
        let mut step = [0.0; 2];
        self.props.pair[q].draw(&mut self.rng, &mut step);
        let old = self.gamma[q];
        let prior_old = self.pair_prior(q);
        self.gamma[q] = [old[0] + step[0], old[1] + step[1]];
        let list = &p.by_pair[q];
        let dlist = &p.dist_by_pair[q];
        let (ro, rn) = self.eval_resp(list);
        let (d_o, d_n) = self.eval_dist(dlist);
        let ratio = rn - ro + d_n - d_o + self.pair_prior(q) - prior_old;
        let ok = accept(&mut self.rng, ratio);
        if ok {
            self.commit_resp(list);
            self.commit_dist(dlist);
        } else {
            self.gamma[q] = old;
        }
        self.props.pair[q].record(ok, self.adapting);
    }

    fn update_cluster(&mut self, j: usize) {
        let p = self.p;
        let su = self.par[p.su.expect("cluster intercept on")];
        let mut step = [0.0; 1];
        self.props.cluster[j].draw(&mut self.rng, &mut step);
        let old = self.u[j];
        self.u[j] = old + step[0];
        for &d in &p.dyads_by_cluster[j] {
            self.shift[d as usize] = self.shift_of(d as usize);
        }
        let list = &p.by_cluster[j];
        let (ro, rn) = self.eval_resp(list);
        let ratio = rn - ro + normal_logpdf(self.u[j], su) - normal_logpdf(old, su);
        let ok = accept(&mut self.rng, ratio);
        if ok {
            self.commit_resp(list);
        } else {
            self.u[j] = old;
            for &d in &p.dyads_by_cluster[j] {
                self.shift[d as usize] = self.shift_of(d as usize);
            }
        }
        self.props.cluster[j].record(ok, self.adapting);
    }

    fn block_indices(&self, block: ParamBlock) -> &'p [usize] {
        let p = self.p;
        match block {
            ParamBlock::Item(i) => &p.item_blocks[i],
            ParamBlock::Mean => &p.mean_block,
            ParamBlock::Distal => &p.distal_block,
            ParamBlock::IndivHyper => &p.indiv_hyper,
            ParamBlock::DyadHyper => &p.dyad_hyper,
            ParamBlock::ClusterHyper => &p.cluster_hyper,
        }
    }

    fn proposal(&mut self, block: ParamBlock) -> &mut Proposal {
        match block {
            ParamBlock::Item(i) => &mut self.props.item[i],
            ParamBlock::Mean => &mut self.props.mean,
            ParamBlock::Distal => &mut self.props.distal,
            ParamBlock::IndivHyper => &mut self.props.indiv_hyper,
            ParamBlock::DyadHyper => &mut self.props.dyad_hyper,
            ParamBlock::ClusterHyper => &mut self.props.cluster_hyper,
        }
    }

    /// Log prior-and-Jacobian term of parameter `j` on its sampling scale.
    fn log_jacobian(&self, j: usize) -> f64 {
        let x = self.par[j];
        match self.p.kinds[j] {
            Transform::Log => self.p.prior.log_sd_jacobian(x.ln()),
            Transform::Atanh => (1.0 - x * x).ln(),
            Transform::Identity => 0.0,
        }
    }

    fn in_support(&self, j: usize) -> bool {
        let x = self.par[j];
        match self.p.kinds[j] {
            Transform::Log => x > 0.0 && self.p.prior.sd_in_support(x),
            Transform::Atanh => x.abs() < 1.0,
            Transform::Identity if self.p.is_distal(j) => self.p.prior.distal_in_support(x),
            Transform::Identity => x.is_finite(),
        }
    }

    /// Log target restricted to the terms that `block` changes, excluding
    /// cached likelihood parts.
    fn block_prior(&self, block: ParamBlock) -> f64 {
        match block {
            ParamBlock::IndivHyper => self.indiv_prior_sum(),
            ParamBlock::DyadHyper => self.pair_prior_sum(),
            ParamBlock::ClusterHyper => self.u_prior_sum(),
            _ => 0.0,
        }
    }

    fn update_params(&mut self, block: ParamBlock) {
        let idx = self.block_indices(block);
        let dim = idx.len();
        if dim == 0 {
            return;
        }
        let mut step = vec![0.0; dim];
        let prop = match block {
            ParamBlock::Item(i) => &self.props.item[i],
            ParamBlock::Mean => &self.props.mean,
            ParamBlock::Distal => &self.props.distal,
            ParamBlock::IndivHyper => &self.props.indiv_hyper,
            ParamBlock::DyadHyper => &self.props.dyad_hyper,
            ParamBlock::ClusterHyper => &self.props.cluster_hyper,
        };
        prop.draw(&mut self.rng, &mut step);
        let old: Vec<f64> = idx.iter().map(|&j| self.par[j]).collect();
        let jac_old: f64 = idx.iter().map(|&j| self.log_jacobian(j)).sum();
        let prior_old = self.block_prior(block);
        for (&j, s) in idx.iter().zip(&step) {
            let kind = self.p.kinds[j];
            self.par[j] = inverse(kind, forward(kind, self.par[j]) + s);
        }
        let restore = |c: &mut Chain<'p>| {
            for (&j, v) in idx.iter().zip(&old) {
                c.par[j] = *v;
            }
        };
        if !idx.iter().all(|&j| self.in_support(j)) {
            restore(self);
            let adapting = self.adapting;
            self.proposal(block).record(false, adapting);
            return;
        }
        let jac_new: f64 = idx.iter().map(|&j| self.log_jacobian(j)).sum();
        let mut ratio = jac_new - jac_old + self.block_prior(block) - prior_old;
        let p = self.p;
        match block {
            ParamBlock::Item(i) => {
                let (o, n) = self.eval_resp(&p.by_item[i]);
                ratio += n - o;
            }
            ParamBlock::Mean => {
                self.saved.copy_from_slice(&self.shift);
                for d in 0..self.shift.len() {
                    self.shift[d] = self.shift_of(d);
                }
                let (o, n) = self.eval_all_resp();
                ratio += n - o;
            }
            ParamBlock::Distal => {
                self.b = p.distal_b(&self.par);
                let (o, n) = self.eval_all_dist();
                ratio += n - o;
            }
            _ => {}
        }
        let ok = accept(&mut self.rng, ratio);
        if ok {
            match block {
                ParamBlock::Item(i) => self.commit_resp(&p.by_item[i]),
                ParamBlock::Mean => std::mem::swap(&mut self.rll, &mut self.scratch),
                ParamBlock::Distal => std::mem::swap(&mut self.dll, &mut self.dscratch),
                _ => {}
            }
        } else {
            restore(self);
            match block {
                ParamBlock::Mean => self.shift.copy_from_slice(&self.saved),
                ParamBlock::Distal => self.b = p.distal_b(&self.par),
                _ => {}
            }
        }
        let adapting = self.adapting;
        self.proposal(block).record(ok, adapting);
    }

    /// Joint rescaling of one SD and its latent traits. `role`: 0 alpha,
    /// 1 beta, 2 gamma, 3 cluster intercepts.
    fn scale_move(&mut self, role: usize) {
        let p = self.p;
        let j = match role {
            0..=2 => role,
            _ => p.su.expect("cluster intercept on"),
        };
        let mut step = [0.0; 1];
        self.props.scale[role].draw(&mut self.rng, &mut step);
        let eps = step[0];
        let factor = eps.exp();
        let old_sd = self.par[j];
        let new_sd = old_sd * factor;
        if !(new_sd > 0.0 && p.prior.sd_in_support(new_sd)) {
            self.props.scale[role].record(false, self.adapting);
            return;
        }
        let prior = |c: &Chain| match role {
            0 | 1 => c.indiv_prior_sum(),
            2 => c.pair_prior_sum(),
            _ => c.u_prior_sum(),
        };
        let prior_old = prior(self);
        let jac_old = self.log_jacobian(j);
        let count = match role {
            0 | 1 => p.n,
            2 => 2 * p.pairs,
            _ => p.clusters,
        };
        let apply = |c: &mut Chain, f: f64| match role {
            0 => c.alpha.iter_mut().for_each(|v| *v *= f),
            1 => c.beta.iter_mut().for_each(|v| *v *= f),
            2 => c.gamma.iter_mut().for_each(|g| {
                g[0] *= f;
                g[1] *= f;
            }),
            _ => c.u.iter_mut().for_each(|v| *v *= f),
        };
        let old_latents: Vec<f64> = match role {
            0 => self.alpha.clone(),
            1 => self.beta.clone(),
            2 => self.gamma.iter().flatten().copied().collect(),
            _ => self.u.clone(),
        };
        apply(self, factor);
        self.par[j] = new_sd;
        if role == 3 {
            self.saved.copy_from_slice(&self.shift);
            for d in 0..self.shift.len() {
                self.shift[d] = self.shift_of(d);
            }
        }
        let (ro, rn) = self.eval_all_resp();
        let (d_o, d_n) = if role == 3 { (0.0, 0.0) } else { self.eval_all_dist() };
        let ratio = rn - ro + d_n - d_o + prior(self) - prior_old + self.log_jacobian(j) - jac_old
            + count as f64 * eps;
        let ok = accept(&mut self.rng, ratio);
        if ok {
            std::mem::swap(&mut self.rll, &mut self.scratch);
            if role != 3 {
                std::mem::swap(&mut self.dll, &mut self.dscratch);
            }
        } else {
            self.par[j] = old_sd;
            match role {
                0 => self.alpha.copy_from_slice(&old_latents),
                1 => self.beta.copy_from_slice(&old_latents),
                2 => {
                    for (g, v) in self.gamma.iter_mut().zip(old_latents.chunks(2)) {
                        *g = [v[0], v[1]];
                    }
                }
                _ => {
                    self.u.copy_from_slice(&old_latents);
                    self.shift.copy_from_slice(&self.saved);
                }
            }
        }
        self.props.scale[role].record(ok, self.adapting);
    }

    /// Adds a constant to every latent of one role (0 alpha, 1 beta,
    /// 2 gamma) and to every step difficulty. All composite-trait minus
    /// step differences are unchanged, so the response likelihood is too.
    fn shift_move(&mut self, role: usize) {
        let mut step = [0.0; 1];
        self.props.shift[role].draw(&mut self.rng, &mut step);
        let c = step[0];
        let (prior_old, d_old) = (self.role_prior(role), self.dll.iter().sum::<f64>());
        self.translate(role, c);
        let (_, d_new) = self.eval_all_dist();
        let ratio = self.role_prior(role) - prior_old + d_new - d_old;
        let ok = accept(&mut self.rng, ratio);
        if ok {
            std::mem::swap(&mut self.dll, &mut self.dscratch);
        } else {
            self.translate(role, -c);
        }
        self.props.shift[role].record(ok, self.adapting);
    }

    fn role_prior(&self, role: usize) -> f64 {
        if role == 2 {
            self.pair_prior_sum()
        } else {
            self.indiv_prior_sum()
        }
    }

    fn translate(&mut self, role: usize, c: f64) {
        match role {
            0 => self.alpha.iter_mut().for_each(|v| *v += c),
            1 => self.beta.iter_mut().for_each(|v| *v += c),
            _ => self.gamma.iter_mut().for_each(|g| {
                g[0] += c;
                g[1] += c;
            }),
        }
        let p = self.p;
        for (o, k) in p.delta_off.iter().zip(&p.nsteps) {
            for v in &mut self.par[*o..*o + *k] {
                *v += c;
            }
        }
    }

    fn iterate(&mut self) {
        let p = self.p;
        for i in 0..p.n {
            self.update_individual(i);
        }
        if p.gamma_free {
            for q in 0..p.pairs {
                self.update_pair(q);
            }
        }
        if p.u_free {
            for j in 0..p.clusters {
                self.update_cluster(j);
            }
        }
        for i in 0..p.item_blocks.len() {
            self.update_params(ParamBlock::Item(i));
        }
        self.update_params(ParamBlock::Mean);
        for _ in 0..p.config.hyper_steps {
            self.update_params(ParamBlock::Distal);
        }
        for _ in 0..p.config.hyper_steps {
            self.update_params(ParamBlock::IndivHyper);
            self.update_params(ParamBlock::DyadHyper);
            self.update_params(ParamBlock::ClusterHyper);
        }
        for role in 0..4 {
            if p.scale_moves[role] {
                self.scale_move(role);
            }
        }
        if p.shift_moves {
            let free = [p.alpha_free, p.beta_free, p.gamma_free];
            for (role, f) in free.into_iter().enumerate() {
                if f {
                    self.shift_move(role);
                }
            }
        }
    }

    fn observe(&mut self) {
        let blocks = (0..self.p.item_blocks.len())
            .map(ParamBlock::Item)
            .chain([
                ParamBlock::Mean,
                ParamBlock::Distal,
                ParamBlock::IndivHyper,
                ParamBlock::DyadHyper,
                ParamBlock::ClusterHyper,
            ]);
        for block in blocks {
            let idx = self.block_indices(block);
            if idx.is_empty() {
                continue;
            }
            let y: Vec<f64> = idx
                .iter()
                .map(|&j| forward(self.p.kinds[j], self.par[j]))
                .collect();
            self.proposal(block).observe(&y);
        }
    }

    /// Sum of all cached terms plus the latent prior: the joint log density
    /// at the current state.
    fn log_density(&self) -> f64 {
        let mut lp: f64 = self.rll.iter().sum::<f64>() + self.dll.iter().sum::<f64>();
        lp += self.indiv_prior_sum() + self.pair_prior_sum();
        if self.p.cluster_intercept {
            lp += self.u_prior_sum();
        }
        lp
    }

    /// Latent traits including their mean structure, in moment order.
    fn full_traits(&self, out: &mut Vec<f64>) {
        let p = self.p;
        out.clear();
        let mu = p.mu.map_or(0.0, |j| self.par[j]);
        let mut cov = p.covariates.clone();
        if let Some(c) = &mut cov {
            c.set_coefficients(&self.par[p.cov_off..p.cov_off + p.ncov])
                .expect("coefficient count fixed");
        }
        for i in 0..p.n {
            let mut v = self.alpha[i] + mu * p.male_ind[i];
            if let Some(c) = &cov {
                v += (c.x_alpha.row(i) * &c.c_alpha)[0];
            }
            out.push(v);
        }
        for i in 0..p.n {
            let mut v = self.beta[i];
            if let Some(c) = &cov {
                v += (c.x_beta.row(i) * &c.c_beta)[0];
            }
            out.push(v);
        }
        for d in 0..p.dyad_pair.len() {
            let mut v = self.gamma[p.dyad_pair[d] as usize][usize::from(p.dyad_slot[d])];
            if let Some(c) = &cov {
                v += (c.x_gamma.row(d) * &c.c_gamma)[0];
            }
            out.push(v);
        }
        if p.cluster_intercept {
            out.extend(&self.u);
        }
    }

    fn latent_state(&self) -> LatentState {
        LatentState {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            u: self.u.clone(),
        }
    }
}

/// Runs one chain to completion.
pub(crate) fn run_chain(p: &Problem, chain: u32) -> Result<ChainOutput> {
    let cfg = &p.config;
    let mut c = Chain::new(p, chain);
    if !c.log_density().is_finite() {
        return Err(Error::InvalidState(format!(
            "chain {chain}: initial state has non-finite log density"
        )));
    }
    let retained = (cfg.iterations - cfg.burn_in) / cfg.thinning;
    let dim = p.names.len();
    let mut values = Vec::with_capacity(retained * dim);
    let mut lp = Vec::with_capacity(retained);
    let mut moments = cfg.latent_moments.then(|| p.moments.empty_like());
    let mut snapshots = Vec::new();
    let mut traits = Vec::new();
    let observe_from = cfg.burn_in / 4;
    let mut kept = 0usize;
    for it in 0..cfg.iterations {
        c.adapting = it < cfg.burn_in;
        c.iterate();
        if c.adapting {
            if it >= observe_from {
                c.observe();
            }
            if (it + 1) % cfg.adaptation_window == 0 {
                let target = cfg.target_acceptance;
                c.props.all_mut().for_each(|q| q.adapt(target));
            }
            continue;
        }
        if !(it + 1 - cfg.burn_in).is_multiple_of(cfg.thinning) {
            continue;
        }
        values.extend_from_slice(&c.par);
        let l = c.log_density();
        if !l.is_finite() {
            return Err(Error::InvalidState(format!(
                "chain {chain}: non-finite log density at iteration {}",
                it + 1
            )));
        }
        lp.push(l);
        if let Some(m) = &mut moments {
            c.full_traits(&mut traits);
            m.push(&traits);
        }
        if cfg.latent_draws_every.is_some_and(|e| kept.is_multiple_of(e)) {
            snapshots.push(c.latent_state());
        }
        kept += 1;
    }
    Ok(ChainOutput {
        values,
        lp,
        acceptance: c.props.tally(),
        moments,
        snapshots,
    })
}

#[cfg(test)]
pub(crate) fn final_state(p: &Problem, chain: u32, iterations: usize) -> (Vec<f64>, LatentState, f64) {
    let mut c = Chain::new(p, chain);
    for _ in 0..iterations {
        c.iterate();
    }
    (c.par.clone(), c.latent_state(), c.log_density())
}
