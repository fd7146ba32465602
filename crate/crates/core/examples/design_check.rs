//! Which hyperparameters common dyadic designs identify.
//!
//! Usage: `cargo run --example design_check`

use dyadic_irt::design::{check_identification, make_block, make_k_group, make_round_robin, DesignKind, DyadDesign, GroupSize};

fn main() -> anyhow::Result<()> {
    // raters score examinees; nobody is rated back
    let rater_edges: Vec<(String, String)> = (0..3)
        .flat_map(|r| (0..4).map(move |e| (format!("rater{r}"), format!("examinee{e}"))))
        .collect();
    let designs: Vec<(&str, DyadDesign)> = vec![
        ("round robin, n = 4", make_round_robin(4)?),
        ("block 6 x 6", make_block(6, 6)?),
        (
            "ten block groups of 6 x 6",
            make_k_group(DesignKind::Block, &vec![GroupSize::Block(6, 6); 10])?,
        ),
        ("single pair", make_round_robin(2)?),
        ("rater x examinee", DyadDesign::from_id_edges(&rater_edges)?),
    ];
    for (name, design) in designs {
        let report = check_identification(&design);
        println!(
            "== {name}: {} individuals, {} directed dyads",
            design.num_individuals(),
            design.num_dyads()
        );
        print!("{report}");
        if !report.all_identified() {
            let missing: Vec<String> = report.missing_patterns().iter().map(|r| r.to_string()).collect();
            println!("missing: {}", missing.join(", "));
        }
        println!();
    }
    Ok(())
}
