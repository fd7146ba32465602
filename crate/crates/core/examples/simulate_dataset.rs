//! Simulate a dataset with gender labels, clusters and distal outcomes and
//! write it as CSV files.
//!
//! Usage: `cargo run --example simulate_dataset -- [out-dir] [seed]`

use std::path::PathBuf;

use dyadic_irt::data::export_dataset;
use dyadic_irt::design::{make_k_group, DesignKind, GroupSize};
use dyadic_irt::model::{DistalCoefficients, Hyperparameters, ItemBank};
use dyadic_irt::simulate::{simulate, SimulationConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| PathBuf::from("simulated"), PathBuf::from);
    let seed = args.next().map_or(Ok(1), |s| s.parse())?;
    let design = make_k_group(DesignKind::Block, &[GroupSize::Block(6, 6); 4])?
        .with_block_genders()
        .with_group_clusters();
    let hyper = Hyperparameters::speed_dating().with_mu_male(0.08);
    let mut config = SimulationConfig::new(design, ItemBank::five_by_five(), hyper, seed);
    config.distal = Some(DistalCoefficients::speed_dating_without_interactions());
    config.cluster_sd = Some(0.3);
    let sim = simulate(&config)?;
    let sources = export_dataset(&sim.data, &out)?;
    std::fs::write(out.join("truth.json"), sim.truth.to_json()?)?;
    let rate = sim.data.distal.as_ref().map_or(0.0, |d| d.base_rate());
    println!(
        "{} responses, {} distal outcomes (rate {rate:.2}) written:",
        sim.data.responses.len(),
        sim.data.distal.as_ref().map_or(0, |d| d.len())
    );
    for p in sources.paths() {
        println!("  {}", p.display());
    }
    Ok(())
}
