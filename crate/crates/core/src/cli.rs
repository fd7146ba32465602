//! The `dirt` command-line front end.
//!
//! Each run command (`simulate`, `fit`, `recover`) reads a TOML file, applies
//! command-line overrides (dedicated flags and generic `--set key=value`,
//! with dotted keys into the TOML tables), and writes its outputs plus a
//! `manifest.json` into the output directory. The manifest holds the fully
//! resolved configuration, its SHA-256, the tool version and the SHA-256 of
//! every input and output file; `--from-manifest` reruns exactly that
//! configuration and reproduces the outputs byte for byte.
//!
//! Exit codes: 0 success, 1 input error, 2 identification or diagnostic
//! failure (an unidentified design, failed imputation pooling, or with
//! `--strict` an R-hat at or above the threshold).
//!
//! Configuration files:
//!
//! ```toml
//! # simulate
//! seed = 7
//! block_genders = false       # label block members m/f (gender mean model)
//! group_clusters = false      # label each group as a cluster
//! cluster_sd = 0.4            # optional: simulate cluster intercepts
//! [design]
//! kind = "k_group"            # round_robin (n) | block (p, q) | k_group | file (path)
//! group_kind = "block"
//! groups = [[6, 6], [6, 6]]
//! [items]
//! steps = [[-1.0, 0.0, 1.0]]  # optional, default five items with five categories
//! [hyper]
//! sigma_alpha = 1.03
//! sigma_beta = 0.63
//! sigma_gamma = 0.98
//! rho_alpha_beta = -0.06
//! rho_gamma = 0.46
//! [distal]                    # optional
//! preset = "with_interactions" # or "without_interactions", or b = [b0, ..., b9]
//! exchangeable = false
//!
//! # fit
//! imputations = 20            # sequential distal model only
//! write_draws = false
//! [data]                      # see `DataSources`; or pass --data-dir
//! responses = "responses.csv"
//! [model]                     # see `ModelSpec`
//! [mcmc]                      # see `McmcConfig`
//!
//! # recover
//! replications = 20
//! master_seed = 1
//! self_test = 50              # optional: known-answer mode with n = 50
//! [simulation]                # a simulate configuration
//! [model]                     # optional, default: the model that generated the data
//! [mcmc]
//! ```
//!
//! Relative paths in a configuration file are resolved against the file's
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{export_dataset, ingest, DataSources, IngestLog};
use crate::design::{
    check_identification, make_block, make_k_group, make_round_robin, read_design_csv, DesignKind,
    DyadDesign, GroupSize,
};
use crate::error::{Error, Result};
use crate::inference::{
    read_draws_csv, scores_from_moments, summarize, write_draws_csv, write_scores_csv, write_summary_csv,
    LatentMoments, LatentRole, LatentScore, McmcConfig, PosteriorDraws, PosteriorSummary,
};
use crate::model::{DistalCoefficients, DistalForm, DistalMode, Hyperparameters, ItemBank, LatentState, ModelSpec};
use crate::recovery::{render_report, run_replications, write_study, Estimator, StudyConfig};
use crate::simulate::{simulate, SimulationConfig};
use crate::workflows::{fit_sequential_mi, DEFAULT_IMPUTATIONS};

#[derive(Debug, Parser)]
#[command(name = "dirt", version, about = "Dyadic item response theory: designs, simulation, estimation")]
pub struct Cli {
    /// Maximum number of worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report which hyperparameters a design identifies.
    CheckDesign {
        /// Edge list with columns actor_id, partner_id.
        design: PathBuf,
    },
    /// Simulate a dataset and its generating values.
    Simulate(RunArgs),
    /// Fit the model to data.
    Fit(FitArgs),
    /// Write EAP scores of the latent traits from a fit directory.
    Score(ScoreArgs),
    /// Run a parameter-recovery study.
    Recover(RecoverArgs),
    /// Summarize a draws file.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(short, long, conflicts_with = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Rerun the configuration recorded in a manifest.json.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Override a configuration value, e.g. `--set mcmc.chains=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory written by `simulate` (reads its sources.toml).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Distal model: none, joint or sequential.
    #[arg(long)]
    pub distal: Option<DistalMode>,
    /// Drop the interaction terms b7..b9.
    #[arg(long)]
    pub no_interactions: bool,
    /// Tie b1 = b2, b3 = b4, b5 = b6.
    #[arg(long)]
    pub exchangeable: bool,
    /// Add the gender shift of the actor mean.
    #[arg(long)]
    pub gender: bool,
    /// Add cluster random intercepts.
    #[arg(long)]
    pub cluster_intercept: bool,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Number of imputations for the sequential distal model.
    #[arg(long)]
    pub imputations: Option<usize>,
    /// Also write every retained draw to draws.csv.
    #[arg(long)]
    pub draws: bool,
    /// Exit with status 2 when any R-hat reaches the threshold.
    #[arg(long)]
    pub strict: bool,
    /// Fit even when the design does not identify every free parameter.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Output directory of a `fit` run.
    pub fit_dir: PathBuf,
    /// Output file (default: <fit_dir>/scores.csv).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// true_latents.csv of a simulation: report score-truth correlations.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Known-answer mode: estimate each parameter from N draws of N(truth, 1).
    #[arg(long, value_name = "N")]
    pub self_test: Option<usize>,
    /// Only print these parameters (repeatable).
    #[arg(long = "parameter")]
    pub parameters: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Long draws file (chain, iteration, parameter, value).
    pub draws: PathBuf,
    /// Write the summary CSV here instead of printing it.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.05)]
    pub rhat_threshold: f64,
    /// Use split-chain R-hat.
    #[arg(long)]
    pub split: bool,
    /// Exit with status 2 when any R-hat reaches the threshold.
    #[arg(long)]
    pub strict: bool,
}

// ---------------------------------------------------------------- configs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    RoundRobin { n: usize },
    Block { p: usize, q: usize },
    KGroup { group_kind: DesignKind, groups: Vec<GroupSize> },
    File { path: PathBuf },
}

impl DesignSpec {
    fn build(&self) -> Result<DyadDesign> {
        match self {
            DesignSpec::RoundRobin { n } => make_round_robin(*n),
            DesignSpec::Block { p, q } => make_block(*p, *q),
            DesignSpec::KGroup { group_kind, groups } => make_k_group(*group_kind, groups),
            DesignSpec::File { path } => read_design_csv(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItemsSpec {
    /// Step difficulties per item; default: five items with five categories.
    pub steps: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistalSpec {
    /// `with_interactions` or `without_interactions`.
    pub preset: Option<String>,
    pub b: Option<Vec<f64>>,
    pub interactions: bool,
    pub exchangeable: bool,
}

impl Default for DistalSpec {
    fn default() -> Self {
        DistalSpec {
            preset: None,
            b: None,
            interactions: true,
            exchangeable: false,
        }
    }
}

impl DistalSpec {
    fn build(&self) -> Result<DistalCoefficients> {
        let b: [f64; 10] = match (&self.preset, &self.b) {
            (Some(_), Some(_)) => return Err(Error::invalid("distal: give either preset or b, not both")),
            (Some(p), None) => match p.as_str() {
                "with_interactions" => DistalCoefficients::speed_dating_with_interactions().b,
                "without_interactions" => DistalCoefficients::speed_dating_without_interactions().b,
                _ => return Err(Error::invalid(format!("unknown distal preset '{p}'"))),
            },
            (None, Some(b)) => b
                .as_slice()
                .try_into()
                .map_err(|_| Error::invalid(format!("distal.b needs 10 values, got {}", b.len())))?,
            (None, None) => return Err(Error::invalid("distal: give a preset or b")),
        };
        let interactions = self.interactions && self.preset.as_deref() != Some("without_interactions");
        Ok(DistalCoefficients::new(
            b,
            DistalForm {
                interactions,
                exchangeable: self.exchangeable,
            },
        ))
    }
}

fn default_seed() -> u64 {
    1
}

fn default_hyper() -> Hyperparameters {
    Hyperparameters::speed_dating()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub design: DesignSpec,
    #[serde(default)]
    pub block_genders: bool,
    #[serde(default)]
    pub group_clusters: bool,
    #[serde(default)]
    pub items: ItemsSpec,
    #[serde(default = "default_hyper")]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub distal: Option<DistalSpec>,
    #[serde(default)]
    pub cluster_sd: Option<f64>,
}

impl SimulateConfig {
    pub fn build(&self) -> Result<SimulationConfig> {
        let mut design = self.design.build()?;
        if self.block_genders {
            design = design.with_block_genders();
        }
        if self.group_clusters {
            design = design.with_group_clusters();
        }
        let items = match &self.items.steps {
            Some(steps) => ItemBank::from_steps(steps.clone())?,
            None => ItemBank::five_by_five(),
        };
        let mut cfg = SimulationConfig::new(design, items, self.hyper, self.seed);
        cfg.distal = self.distal.as_ref().map(DistalSpec::build).transpose()?;
        cfg.cluster_sd = self.cluster_sd;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DesignSpec::File { path } = &mut self.design {
            *path = base.join(&*path);
        }
    }
}

fn default_imputations() -> usize {
    DEFAULT_IMPUTATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataSources,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default = "default_imputations")]
    pub imputations: usize,
    #[serde(default)]
    pub write_draws: bool,
}

impl FitConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        d.responses = base.join(&d.responses);
        for p in [
            &mut d.distal,
            &mut d.design,
            &mut d.individuals,
            &mut d.dyad_covariates,
            &mut d.items,
            &mut d.category_map,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
    }
}

fn default_replications() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub simulation: SimulateConfig,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub self_test: Option<usize>,
}

// ---------------------------------------------------------------- config plumbing

/// Sets `value` at the dotted `key` of a TOML table, creating tables on the
/// way. The value is parsed as a TOML value and taken as a string if that
/// fails.
pub fn set_override(root: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bad override key '{key}'")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("override '{key}': '{part}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

fn apply_sets(root: &mut toml::Table, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got '{s}'")))?;
        set_override(root, k.trim(), v.trim())?;
    }
    Ok(())
}

fn read_toml(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1),
        message: e.message().to_string(),
    })
}

fn typed<T: DeserializeOwned>(table: toml::Table, origin: &str) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::invalid(format!("{origin}: {}", e.message())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run: enough to rerun it and to check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
    #[serde(default)]
    pub ingest: Option<IngestLog>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Loads the configuration of a run command: from a manifest (exactly as
/// recorded), or from an optional TOML file with overrides applied.
fn load_config<T>(
    command: &str,
    run: &RunArgs,
    overrides: impl FnOnce(&mut toml::Table) -> Result<()>,
    resolve: impl FnOnce(&mut T, &Path),
) -> Result<(T, Vec<FileHash>)>
where
    T: DeserializeOwned,
{
    if let Some(m) = &run.from_manifest {
        let manifest = Manifest::read(m)?;
        if manifest.command != command {
            return Err(Error::invalid(format!(
                "{} records a '{}' run, not '{command}'",
                m.display(),
                manifest.command
            )));
        }
        if !run.set.is_empty() || run.seed.is_some() {
            return Err(Error::invalid("--from-manifest reruns the recorded configuration; overrides are not allowed"));
        }
        for input in &manifest.inputs {
            let now = file_hash(&input.path)?;
            if now != input.sha256 {
                return Err(Error::invalid(format!(
                    "input {} changed since the recorded run",
                    input.path.display()
                )));
            }
        }
        let config = serde_json::from_value(manifest.config)?;
        return Ok((config, manifest.inputs));
    }
    let (mut table, base, inputs) = match &run.config {
        Some(path) => {
            let base = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            (
                read_toml(path)?,
                base,
                vec![FileHash {
                    path: absolute(path)?,
                    sha256: file_hash(path)?,
                }],
            )
        }
        None => (toml::Table::new(), PathBuf::from("."), Vec::new()),
    };
    overrides(&mut table)?;
    apply_sets(&mut table, &run.set)?;
    let mut config: T = typed(table, command)?;
    resolve(&mut config, &absolute(&base)?);
    Ok((config, inputs))
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn write_manifest<T: Serialize>(
    out: &Path,
    command: &str,
    config: &T,
    inputs: Vec<FileHash>,
    outputs: &[&str],
    ingest: Option<IngestLog>,
) -> Result<()> {
    let config_json = serde_json::to_value(config)?;
    let outputs = outputs
        .iter()
        .map(|name| {
            Ok(FileHash {
                path: PathBuf::from(name),
                sha256: file_hash(&out.join(name))?,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_hash: sha256_hex(serde_json::to_string(&config_json)?.as_bytes()),
        config: config_json,
        inputs,
        outputs,
        ingest,
    };
    let path = out.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Hashes of the data files a fit reads.
fn data_inputs(sources: &DataSources) -> Result<Vec<FileHash>> {
    sources
        .paths()
        .into_iter()
        .map(|p| {
            Ok(FileHash {
                path: p.to_path_buf(),
                sha256: file_hash(p)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- commands

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Finished, but a diagnostic failed (exit code 2).
    DiagnosticFailure,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Identification(_) | Error::Diagnostic(_) => 2,
        _ => 1,
    }
}

pub fn cmd_check_design(path: &Path) -> Result<Status> {
    let design = read_design_csv(path)?;
    let report = check_identification(&design);
    print!("{report}");
    if report.all_identified() {
        Ok(Status::Ok)
    } else {
        let missing: Vec<String> = report.missing_patterns().iter().map(|r| r.to_string()).collect();
        let bad: Vec<String> = report
            .parameters()
            .iter()
            .filter(|(_, s)| !s.is_identified())
            .map(|(n, s)| format!("{n} ({s})"))
            .collect();
        eprintln!(
            "design does not identify {}; missing patterns: {}",
            bad.join(", "),
            missing.join(", ")
        );
        Ok(Status::DiagnosticFailure)
    }
}

pub fn cmd_simulate(args: &RunArgs) -> Result<Status> {
    let (config, inputs) = load_config::<SimulateConfig>(
        "simulate",
        args,
        |t| {
            if let Some(s) = args.seed {
                set_override(t, "seed", &s.to_string())?;
            }
            Ok(())
        },
        SimulateConfig::resolve_paths,
    )?;
    let sim = simulate(&config.build()?)?;
    create_dir(&args.out)?;
    let sources = export_dataset(&sim.data, &args.out)?;
    write_text(&args.out.join("truth.json"), &(sim.truth.to_json()? + "\n"))?;
    write_true_latents(
        &true_latents(&sim.data.design, &sim.truth.latents),
        &args.out.join("true_latents.csv"),
    )?;
    let relative = relative_sources(&sources, &args.out);
    write_text(
        &args.out.join("sources.toml"),
        &toml::to_string(&relative).map_err(|e| Error::invalid(e.to_string()))?,
    )?;
    let mut outputs: Vec<String> = relative.paths().iter().map(|p| p.display().to_string()).collect();
    outputs.extend(["truth.json", "true_latents.csv", "sources.toml"].map(String::from));
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&args.out, "simulate", &config, inputs, &outputs, None)?;
    println!(
        "simulated {} individuals, {} directed dyads, {} responses into {}",
        sim.data.design.num_individuals(),
        sim.data.design.num_dyads(),
        sim.data.responses.len(),
        args.out.display()
    );
    Ok(Status::Ok)
}

fn relative_sources(s: &DataSources, dir: &Path) -> DataSources {
    let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).to_path_buf();
    DataSources {
        responses: rel(&s.responses),
        distal: s.distal.as_deref().map(rel),
        design: s.design.as_deref().map(rel),
        individuals: s.individuals.as_deref().map(rel),
        dyad_covariates: s.dyad_covariates.as_deref().map(rel),
        items: s.items.as_deref().map(rel),
        category_map: s.category_map.as_deref().map(rel),
        drop_invalid: s.drop_invalid,
        drop_counterpart: s.drop_counterpart,
    }
}

fn fit_overrides(args: &FitArgs, table: &mut toml::Table) -> Result<()> {
    if let Some(dir) = &args.data_dir {
        let sources = read_toml(&dir.join("sources.toml"))?;
        let mut data = toml::Table::new();
        for (k, v) in sources {
            let v = match v {
                toml::Value::String(s) if k != "drop_invalid" && k != "drop_counterpart" => {
                    toml::Value::String(absolute(&dir.join(s))?.display().to_string())
                }
                other => other,
            };
            data.insert(k, v);
        }
        table.insert("data".into(), toml::Value::Table(data));
    }
    let mut set = |k: &str, v: String| set_override(table, k, &v);
    if let Some(s) = args.run.seed {
        set("mcmc.seed", s.to_string())?;
    }
    if let Some(m) = args.distal {
        let name = match m {
            DistalMode::None => "none",
            DistalMode::Joint => "joint",
            DistalMode::Sequential => "sequential",
        };
        set("model.distal", format!("\"{name}\""))?;
    }
    if args.no_interactions {
        set("model.distal_interactions", "false".into())?;
    }
    if args.exchangeable {
        set("model.exchangeable_distal", "true".into())?;
    }
    if args.gender {
        set("model.gender_mean", "true".into())?;
    }
    if args.cluster_intercept {
        set("model.cluster_intercept", "true".into())?;
    }
    if let Some(c) = args.chains {
        set("mcmc.chains", c.to_string())?;
    }
    if let Some(i) = args.iterations {
        set("mcmc.iterations", i.to_string())?;
    }
    if let Some(b) = args.burn_in {
        set("mcmc.burn_in", b.to_string())?;
    }
    if let Some(m) = args.imputations {
        set("imputations", m.to_string())?;
    }
    if args.draws {
        set("write_draws", "true".into())?;
    }
    if args.force {
        set("mcmc.allow_unidentified", "true".into())?;
    }
    Ok(())
}

fn diagnostics_text(draws: &PosteriorDraws, summary: &PosteriorSummary) -> String {
    let cfg = &draws.config;
    let mut out = format!(
        "chains {}, iterations {}, burn-in {}, thinning {}, seed {}\n",
        cfg.chains, cfg.iterations, cfg.burn_in, cfg.thinning, cfg.seed
    );
    out.push_str("acceptance rates:\n");
    for (block, rate) in &draws.acceptance {
        out.push_str(&format!("  {block:<18}{rate:.3}\n"));
    }
    if let Some([a, b, g]) = summary.variance_partition() {
        out.push_str(&format!(
            "variance partition (actor, partner, dyad): {:.1}%, {:.1}%, {:.1}%\n",
            100.0 * a,
            100.0 * b,
            100.0 * g
        ));
    }
    let bad = draws.unconverged();
    if bad.is_empty() {
        out.push_str(&format!("all R-hat below {}\n", cfg.rhat_threshold));
    } else {
        out.push_str(&format!("R-hat at or above {}:\n", cfg.rhat_threshold));
        for (name, r) in bad {
            out.push_str(&format!("  {name:<18}{r}\n"));
        }
    }
    out
}

pub fn cmd_fit(args: &FitArgs) -> Result<Status> {
    let (config, mut inputs) = load_config::<FitConfig>(
        "fit",
        &args.run,
        |t| fit_overrides(args, t),
        FitConfig::resolve_paths,
    )?;
    let (data, log) = ingest(&config.data)?;
    if args.run.from_manifest.is_none() {
        inputs.extend(data_inputs(&config.data)?);
    }
    create_dir(&args.run.out)?;
    let out = &args.run.out;
    let mut outputs = vec!["summary.csv", "diagnostics.txt"];
    let draws = if config.model.distal == DistalMode::Sequential {
        let seq = fit_sequential_mi(&config.model, &data, &config.mcmc, config.imputations)?;
        write_pooled_csv(&seq.pooled, &out.join("pooled.csv"))?;
        outputs.push("pooled.csv");
        seq.measurement
    } else {
        crate::inference::fit(&config.model, &data, &config.mcmc)?
    };
    let summary = summarize(&draws)?;
    write_summary_csv(&summary, &out.join("summary.csv"))?;
    let diagnostics = diagnostics_text(&draws, &summary);
    write_text(&out.join("diagnostics.txt"), &diagnostics)?;
    if config.write_draws {
        write_draws_csv(&draws, &out.join("draws.csv"))?;
        outputs.push("draws.csv");
    }
    if let Some(m) = &draws.latent_moments {
        write_text(&out.join("latent_moments.json"), &(serde_json::to_string(m)? + "\n"))?;
        outputs.push("latent_moments.json");
    }
    write_manifest(out, "fit", &config, inputs, &outputs, Some(log))?;
    print!("{diagnostics}");
    if args.strict && !draws.unconverged().is_empty() {
        return Ok(Status::DiagnosticFailure);
    }
    Ok(Status::Ok)
}

fn write_pooled_csv(pooled: &crate::workflows::PooledEstimates, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    w.write_record(["parameter", "estimate", "within", "between", "total", "df", "lower", "upper"])?;
    for c in &pooled.coefficients {
        w.write_record([
            c.name.clone(),
            c.estimate.to_string(),
            c.within.to_string(),
            c.between.to_string(),
            c.total.to_string(),
            c.df.to_string(),
            c.lower.to_string(),
            c.upper.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Generating latent traits keyed like the score file: `(role, id)` with
/// dyads written `actor:partner`.
pub fn true_latents(design: &DyadDesign, latents: &LatentState) -> Vec<(LatentRole, String, f64)> {
    let ind = design.individuals();
    let mut out = Vec::new();
    for (role, values) in [(LatentRole::Alpha, &latents.alpha), (LatentRole::Beta, &latents.beta)] {
        out.extend(ind.iter().zip(values).map(|(i, v)| (role, i.id.clone(), *v)));
    }
    for (k, d) in design.dyads().iter().enumerate() {
        let id = format!("{}:{}", ind[d.actor].id, ind[d.partner].id);
        out.push((LatentRole::Gamma, id, latents.gamma_of(design, k)));
    }
    out
}

fn write_true_latents(rows: &[(LatentRole, String, f64)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    w.write_record(["id", "role", "value"])?;
    for (role, id, v) in rows {
        w.write_record([id.clone(), role.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_true_latents(path: &Path) -> Result<BTreeMap<(String, String), f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: k as u64 + 2,
            message,
        };
        if rec.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", rec.len())));
        }
        let v: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("'{}' is not a number", &rec[2])))?;
        out.insert((rec[1].trim().to_string(), rec[0].trim().to_string()), v);
    }
    Ok(out)
}

/// Correlation between EAP scores and generating traits per role, matched
/// by id. Roles with fewer than two matches are skipped.
pub fn score_truth_correlations(
    scores: &[LatentScore],
    truth: &BTreeMap<(String, String), f64>,
) -> Vec<(LatentRole, usize, f64)> {
    let mut out = Vec::new();
    for role in [LatentRole::Alpha, LatentRole::Beta, LatentRole::Gamma] {
        let (eap, tv): (Vec<f64>, Vec<f64>) = scores
            .iter()
            .filter(|s| s.role == role)
            .filter_map(|s| truth.get(&(role.to_string(), s.id.clone())).map(|t| (s.eap, *t)))
            .unzip();
        if eap.len() > 1 {
            out.push((role, eap.len(), pearson(&eap, &tv)));
        }
    }
    out
}

pub fn cmd_score(args: &ScoreArgs) -> Result<Status> {
    let path = args.fit_dir.join("latent_moments.json");
    if !path.exists() {
        return Err(Error::InvalidState(format!(
            "{} not found; refit with mcmc.latent_moments = true",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let moments: LatentMoments = serde_json::from_str(&text)?;
    let scores = scores_from_moments(&moments)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit_dir.join("scores.csv"));
    write_scores_csv(&scores, &out)?;
    println!("{} scores written to {}", scores.len(), out.display());
    if let Some(t) = &args.truth {
        let truth = read_true_latents(t)?;
        for (role, n, r) in score_truth_correlations(&scores, &truth) {
            println!("correlation of {role} scores with the generating values ({n} traits): {r:.3}");
        }
    }
    Ok(Status::Ok)
}

pub fn cmd_recover(args: &RecoverArgs) -> Result<Status> {
    let (config, inputs) = load_config::<RecoverConfig>(
        "recover",
        &args.run,
        |t| {
            if let Some(s) = args.run.seed {
                set_override(t, "master_seed", &s.to_string())?;
            }
            if let Some(r) = args.replications {
                set_override(t, "replications", &r.to_string())?;
            }
            if let Some(n) = args.self_test {
                set_override(t, "self_test", &n.to_string())?;
            }
            Ok(())
        },
        |c: &mut RecoverConfig, base| c.simulation.resolve_paths(base),
    )?;
    let simulation = config.simulation.build()?;
    let study = StudyConfig {
        spec: config.model.clone().unwrap_or_else(|| simulation.implied_spec()),
        simulation,
        mcmc: config.mcmc.clone(),
        replications: config.replications,
        master_seed: config.master_seed,
        estimator: config
            .self_test
            .map_or(Estimator::Posterior, |n| Estimator::SelfTest { n }),
    };
    let result = run_replications(&study)?;
    create_dir(&args.run.out)?;
    let hash = sha256_hex(serde_json::to_string(&serde_json::to_value(&config)?)?.as_bytes());
    let report = write_study(&result, &args.run.out, &hash)?;
    let mut outputs: Vec<String> = result
        .results
        .iter()
        .map(|r| format!("replications/rep_{:04}.csv", r.index + 1))
        .collect();
    outputs.extend(
        [
            "study.json",
            "report.csv",
            "report.txt",
            "plot_bias.csv",
            "plot_rel_se_bias.csv",
        ]
        .map(String::from),
    );
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&args.run.out, "recover", &config, inputs, &outputs, None)?;
    print!("{}", render_report(&report, &args.parameters));
    Ok(Status::Ok)
}

pub fn cmd_summarize(args: &SummarizeArgs) -> Result<Status> {
    let mut draws = read_draws_csv(&args.draws)?;
    draws.config.split_rhat = args.split;
    draws.config.rhat_threshold = args.rhat_threshold;
    let summary = summarize(&draws)?;
    match &args.out {
        Some(p) => write_summary_csv(&summary, p)?,
        None => {
            println!(
                "{:<18} {:>10} {:>10} {:>10} {:>10} {:>8}",
                "parameter", "mean", "sd", "q2.5", "q97.5", "rhat"
            );
            for r in &summary.rows {
                println!(
                    "{:<18} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8}",
                    r.parameter,
                    r.mean,
                    r.sd,
                    r.q025,
                    r.q975,
                    r.rhat.to_string()
                );
            }
        }
    }
    if let Some([a, b, g]) = summary.variance_partition() {
        println!(
            "variance partition (actor, partner, dyad): {:.1}%, {:.1}%, {:.1}%",
            100.0 * a,
            100.0 * b,
            100.0 * g
        );
    }
    let bad = summary.unconverged(args.rhat_threshold);
    if !bad.is_empty() {
        let names: Vec<&str> = bad.iter().map(|r| r.parameter.as_str()).collect();
        eprintln!("R-hat at or above {}: {}", args.rhat_threshold, names.join(", "));
        if args.strict {
            return Ok(Status::DiagnosticFailure);
        }
    }
    Ok(Status::Ok)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::CheckDesign { design } => cmd_check_design(design),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Summarize(a) => cmd_summarize(a),
    }
}

/// Entry point of the `dirt` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::DiagnosticFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_nested_tables_and_parse_values() {
        let mut t: toml::Table = toml::from_str("[mcmc]\nchains = 4\n").unwrap();
        set_override(&mut t, "mcmc.chains", "2").unwrap();
        set_override(&mut t, "model.distal", "\"joint\"").unwrap();
        set_override(&mut t, "data.responses", "r.csv").unwrap();
        set_override(&mut t, "hyper.rho_gamma", "0.3").unwrap();
        assert_eq!(t["mcmc"]["chains"].as_integer(), Some(2));
        assert_eq!(t["model"]["distal"].as_str(), Some("joint"));
        assert_eq!(t["data"]["responses"].as_str(), Some("r.csv"));
        assert_eq!(t["hyper"]["rho_gamma"].as_float(), Some(0.3));
    }

    #[test]
    fn overrides_reject_bad_keys() {
        let mut t: toml::Table = toml::from_str("seed = 1\n").unwrap();
        assert!(set_override(&mut t, "seed.x", "1").is_err());
        assert!(set_override(&mut t, "a..b", "1").is_err());
        assert!(apply_sets(&mut t, &["novalue".into()]).is_err());
    }

    #[test]
    fn distal_presets_and_explicit_coefficients() {
        let preset = DistalSpec {
            preset: Some("without_interactions".into()),
            ..DistalSpec::default()
        };
        let c = preset.build().unwrap();
        assert!(!c.form.interactions);
        assert_eq!(c.b, DistalCoefficients::speed_dating_without_interactions().b);

        let explicit = DistalSpec {
            b: Some(vec![0.1; 10]),
            exchangeable: true,
            ..DistalSpec::default()
        };
        assert!(explicit.build().unwrap().form.exchangeable);

        let short = DistalSpec {
            b: Some(vec![0.1; 3]),
            ..DistalSpec::default()
        };
        assert!(short.build().is_err());
        assert!(DistalSpec::default().build().is_err());
    }

    #[test]
    fn simulate_config_defaults() {
        let c: SimulateConfig = toml::from_str("[design]\nkind = \"round_robin\"\nn = 4\n").unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.hyper, Hyperparameters::speed_dating());
        let sim = c.build().unwrap();
        assert_eq!(sim.design.num_individuals(), 4);
        assert_eq!(sim.item_bank.len(), 5);
        assert!(sim.distal.is_none());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Identification("x".into())), 2);
        assert_eq!(exit_code(&Error::Diagnostic("x".into())), 2);
        assert_eq!(exit_code(&Error::invalid("x")), 1);
        assert_eq!(exit_code(&Error::Domain("x".into())), 1);
    }
}
