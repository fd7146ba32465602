//! Read long-format CSV files with a category remapping (ten raw points
//! collapsed to five categories) and an invalid row that is dropped together
//! with its counterpart rating.
//!
//! Usage: `cargo run --example ingest_data`

use dyadic_irt::data::{ingest, DataSources};
use dyadic_irt::design::check_identification;

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join(format!("dirt-ingest-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let ids = ["ann", "bob", "cat", "dan"];
    let mut responses = String::from("actor_id,partner_id,item_id,response\n");
    for (i, a) in ids.iter().enumerate() {
        for (j, p) in ids.iter().enumerate() {
            if i != j {
                for item in ["fun", "kind"] {
                    responses.push_str(&format!("{a},{p},{item},{}\n", 1 + (3 * i + 5 * j) % 10));
                }
            }
        }
    }
    responses.push_str("ann,bob,shy,eleven\n");
    responses.push_str("bob,ann,shy,4\n");
    std::fs::write(dir.join("responses.csv"), responses)?;
    let map: String = (1..=10).map(|k| format!("{k},{}\n", (k - 1) / 2)).collect();
    std::fs::write(dir.join("map.csv"), format!("from,to\n{map}"))?;

    let sources = DataSources {
        responses: dir.join("responses.csv"),
        category_map: Some(dir.join("map.csv")),
        drop_invalid: true,
        drop_counterpart: true,
        ..DataSources::default()
    };
    let (data, log) = ingest(&sources)?;
    println!("{log:?}");
    println!(
        "{} individuals, {} directed dyads, {} responses on items {:?} with categories {:?}",
        data.design.num_individuals(),
        data.design.num_dyads(),
        data.responses.len(),
        data.responses.item_ids,
        data.responses.categories
    );
    print!("{}", check_identification(&data.design));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
