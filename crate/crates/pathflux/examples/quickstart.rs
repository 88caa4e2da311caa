//! Exact decomposition of a built-in model, then recovery from data.
//!
//! ```
//! cargo run --release --example quickstart
//! ```

use pathflux::estimator::{decompose_paths, EstimateConfig};
use pathflux::{builtin, oracle};

fn main() -> pathflux::Result<()> {
    let scm = builtin::scm_t1();

    let truth = oracle::path_decomposition(&scm)?;
    println!("exact decomposition:");
    println!("  theta     = {:+.6}", truth.theta);
    println!("  p1        = {:+.6}  (A -> Y)", truth.p1);
    println!("  p2        = {:+.6}  (A -> Z -> Y)", truth.p2);
    println!("  p3        = {:+.6}  (A -> Z -> M -> Y)", truth.p3);
    println!("  p4        = {:+.6}  (A -> M -> Y)", truth.p4);
    println!("  p2 v p3   = {:+.6}", truth.p23);

    let data = scm.sample(4000, 1)?;
    let est = decompose_paths(&data, &EstimateConfig::default())?;
    println!("\none-step estimates from {} rows:", data.len());
    for (name, r) in est.rows() {
        println!(
            "  {name:<10} {:+.4}  [{:+.4}, {:+.4}]",
            r.point, r.ci_lo, r.ci_hi
        );
    }
    Ok(())
}
