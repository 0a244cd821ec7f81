//! Generate a synthetic dataset with the eight default scenarios and write it
//! next to its manifest.
//!
//!     cargo run --release --example generate_dataset -- [out_dir]

use std::path::PathBuf;

use bid2x::data::load_dataset;
use bid2x::synth::{default_scenarios, generate_dataset, write_generated};

fn main() -> bid2x::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "bid2x-data".into()));
    let specs = default_scenarios(48, 42);
    let per_scenario = 20;
    let ds = generate_dataset(&specs, per_scenario)?;
    write_generated(&out, &specs, per_scenario, &ds)?;

    println!("{:<6} {:>9} {:>10} {:>10}", "name", "records", "lost", "mean cost");
    for s in &specs {
        let recs: Vec<_> = ds
            .pairs
            .iter()
            .filter(|p| p.campaign.scenario == s.id)
            .flat_map(|p| &p.today.records)
            .collect();
        let lost = recs.iter().filter(|r| r.cost == 0.0).count() as f64 / recs.len() as f64;
        let mean = recs.iter().map(|r| r.cost).sum::<f64>() / recs.len() as f64;
        println!("{:<6} {:>9} {:>10.3} {:>10.2}", s.name, recs.len(), lost, mean);
    }

    let back = load_dataset(out.join("dataset.jsonl"))?;
    assert_eq!(back.pairs.len(), ds.pairs.len());
    println!("{} campaign-days in {}", back.pairs.len(), out.display());
    Ok(())
}
