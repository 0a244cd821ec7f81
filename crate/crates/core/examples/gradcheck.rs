//! Finite-difference check of the full model loss against the tape gradients.

use bid2x::gradcheck::{run_gradcheck, GradcheckConfig};

fn main() -> bid2x::Result<()> {
    let r = run_gradcheck(&GradcheckConfig::default())?;
    for t in &r.tensors {
        println!("{:<28} {:>3} entries  max rel err {:.2e}", t.name, t.checked, t.max_rel_error);
    }
    println!("overall max relative error {:.2e} over {} entries", r.max_rel_error, r.checked);
    Ok(())
}
