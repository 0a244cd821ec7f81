//! Train only the classifier and magnitude heads on oracle samples and compare
//! the learned win probability and expected cost with the true ones.

use bid2x::consistency::{run_consistency, ConsistencyConfig};
use bid2x::synth::default_scenarios;

fn main() -> bid2x::Result<()> {
    let spec = &default_scenarios(48, 0)[0];
    let r = run_consistency(spec, &ConsistencyConfig::default())?;
    println!("scenario {}", spec.name);
    println!("mean |p - p_true|            {:.4}", r.mean_abs_p_error);
    println!("mean relative error of p*y   {:.4}", r.mean_rel_product_error);
    println!("{:>8} {:>5} {:>8} {:>8} {:>9} {:>9}", "bid", "tick", "p_true", "p", "p*g true", "p*y");
    for q in r.points.iter().step_by(37) {
        println!(
            "{:>8.2} {:>5} {:>8.3} {:>8.3} {:>9.4} {:>9.4}",
            q.bid, q.tick, q.p_true, q.p_learned, q.product_true, q.product_learned
        );
    }
    Ok(())
}
