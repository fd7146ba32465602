//! Covariances of the composite trait between two directed dyads, and the
//! hyperparameters recovered from them.
//!
//! Usage: `cargo run --example covariance_algebra`

use dyadic_irt::design::{solve_hyperparameters, theoretical_covariance, ReducedForm, Relation};
use dyadic_irt::model::Hyperparameters;

fn main() -> anyhow::Result<()> {
    let h = Hyperparameters::speed_dating();
    println!("{h:?}\n");
    for rel in [
        Relation::Same,
        Relation::Reciprocal,
        Relation::SharedActor,
        Relation::SharedPartner,
        Relation::ActorAsPartner,
        Relation::Disjoint,
    ] {
        println!("{:<18}{:>9.4}", rel.to_string(), theoretical_covariance(&h, rel));
    }
    let reduced = ReducedForm::from_hyperparameters(&h);
    println!("\nsolved back: {:?}", solve_hyperparameters(&reduced)?);

    let [a, b, g] = h.variance_partition();
    println!(
        "\nvariance partition: actor {:.1}%, partner {:.1}%, dyad {:.1}%",
        100.0 * a,
        100.0 * b,
        100.0 * g
    );
    Ok(())
}
