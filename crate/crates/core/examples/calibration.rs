//! One simulate-then-fit cycle at desk scale: ten groups of a (6,6) block
//! design, five items with five categories and, unless `--no-distal` is
//! given, joint distal outcomes with interactions. Prints every generating
//! value next to its 95% credible interval.
//!
//! Usage: `cargo run --release --example calibration -- [seed] [--no-distal]`

use std::time::Instant;

use dyadic_irt::design::{make_k_group, DesignKind, GroupSize};
use dyadic_irt::inference::{fit, summarize, McmcConfig};
use dyadic_irt::model::{DistalCoefficients, Hyperparameters, ItemBank};
use dyadic_irt::simulate::{simulate, SimulationConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let with_distal = !args.iter().any(|a| a == "--no-distal");
    let seed = match args.iter().find(|a| !a.starts_with("--")) {
        Some(s) => s.parse()?,
        None => 2024,
    };
    let design = make_k_group(DesignKind::Block, &vec![GroupSize::Block(6, 6); 10])?;
    let mut config = SimulationConfig::new(
        design,
        ItemBank::five_by_five(),
        Hyperparameters::speed_dating(),
        seed,
    );
    if with_distal {
        config.distal = Some(DistalCoefficients::speed_dating_with_interactions());
    }
    let sim = simulate(&config)?;
    let mcmc = McmcConfig {
        seed,
        ..McmcConfig::default()
    };
    let start = Instant::now();
    let draws = fit(&config.implied_spec(), &sim.data, &mcmc)?;
    let elapsed = start.elapsed();
    let summary = summarize(&draws)?;
    let truth = sim.truth.parameter_values();
    let mut covered = 0;
    let mut total = 0;
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "parameter", "truth", "mean", "q2.5", "q97.5", "rhat"
    );
    for row in &summary.rows {
        let Some(t) = truth.get(&row.parameter) else { continue };
        total += 1;
        let inside = row.contains(*t);
        covered += usize::from(inside);
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>7} {}",
            row.parameter,
            t,
            row.mean,
            row.q025,
            row.q975,
            row.rhat.to_string(),
            if inside { "" } else { "MISS" }
        );
    }
    println!("coverage {covered}/{total}; fit took {:.1}s", elapsed.as_secs_f64());
    for (block, rate) in &draws.acceptance {
        println!("acceptance {block:<16} {rate:.3}");
    }
    Ok(())
}
