//! Category probability curves of a five-category partial credit item.
//!
//! Usage: `cargo run --example pcm_curves`

use dyadic_irt::model::{pcm_category_probs, ItemBank};

fn main() -> anyhow::Result<()> {
    let bank = ItemBank::five_by_five();
    let delta = bank.steps(0);
    let shown: Vec<String> = delta.iter().map(|d| format!("{d:.2}")).collect();
    println!("steps {}", shown.join(", "));
    println!("{:>6} {}", "theta", (0..=delta.len()).map(|k| format!("{:>7}", format!("P({k})"))).collect::<String>());
    for i in -8..=8 {
        let theta = f64::from(i) * 0.5;
        let p = pcm_category_probs(theta, delta)?;
        let row: String = p.iter().map(|x| format!("{x:>7.3}")).collect();
        println!("{theta:>6.1} {row}");
    }
    Ok(())
}
