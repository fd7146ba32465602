//! Fit the measurement model to a simulated dataset, then report the
//! posterior summary, the variance partition and EAP scores of a few actors.
//!
//! Usage: `cargo run --release --example fit_and_score -- [seed]`

use dyadic_irt::design::{make_k_group, DesignKind, GroupSize};
use dyadic_irt::inference::{eap_latent_scores, fit, summarize, LatentRole, McmcConfig};
use dyadic_irt::model::{Hyperparameters, ItemBank};
use dyadic_irt::simulate::{simulate, SimulationConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let design = make_k_group(DesignKind::Block, &[GroupSize::Block(6, 6); 4])?;
    let config = SimulationConfig::new(design, ItemBank::five_by_five(), Hyperparameters::speed_dating(), seed);
    let sim = simulate(&config)?;
    let mcmc = McmcConfig {
        seed,
        latent_moments: true,
        ..McmcConfig::default()
    };
    let draws = fit(&config.implied_spec(), &sim.data, &mcmc)?;
    let summary = summarize(&draws)?;
    let truth = config.truth_values();
    println!("{:<16}{:>8}{:>8}{:>18}{:>8}", "parameter", "truth", "mean", "95% interval", "R-hat");
    for row in summary.rows.iter().filter(|r| !r.parameter.starts_with("delta")) {
        println!(
            "{:<16}{:>8.3}{:>8.3}   [{:>6.3}, {:>6.3}]{:>8}",
            row.parameter,
            truth.get(&row.parameter).copied().unwrap_or(f64::NAN),
            row.mean,
            row.q025,
            row.q975,
            row.rhat.to_string()
        );
    }
    if let Some([a, b, g]) = summary.variance_partition() {
        println!("variance partition: {:.0}% / {:.0}% / {:.0}%", 100.0 * a, 100.0 * b, 100.0 * g);
    }
    let scores = eap_latent_scores(&draws)?;
    println!("\nactor EAP scores (first five) vs generating values:");
    for (s, t) in scores
        .iter()
        .filter(|s| s.role == LatentRole::Alpha)
        .zip(&sim.truth.latents.alpha)
        .take(5)
    {
        println!("  {:<6}{:>7.3} (sd {:.3})  truth {t:>7.3}", s.id, s.eap, s.posterior_sd);
    }
    Ok(())
}
