//! Recursive out-of-sample exercise on the synthetic pseudo-Thai dataset.
//!
//! cargo run --release --example pseudo_thai

use mixfreq::empirical::{pseudo_thai, run_recursive, PseudoThaiConfig, RecursiveConfig};

fn main() -> anyhow::Result<()> {
    let ds = pseudo_thai(&PseudoThaiConfig::default())?;
    let res = run_recursive(&ds, &RecursiveConfig::default())?;
    for w in &res.windows {
        println!("== {} ({} targets)", w.window, w.targets.len());
        for e in &w.report.entries {
            let uni = e.relative_rmsfe.get("UNI-LSTM").copied().unwrap_or(f64::NAN);
            let ar = e.relative_rmsfe.get("AR(1)").copied().unwrap_or(f64::NAN);
            let p = e.dm_vs_benchmark.as_ref().map(|d| d.p_value).unwrap_or(f64::NAN);
            println!(
                "h_m={:>2} {:<9} n={:>2} rmsfe={:.3} rel_uni={:.3} rel_ar1={:.3} rel_mse={:.3} dm_p={:.3}",
                e.h_m,
                e.model,
                e.n,
                e.rmsfe,
                uni,
                ar,
                e.relative_mse.unwrap_or(f64::NAN),
                p
            );
        }
    }
    println!("failures: {}", res.failures.len());
    for f in &res.failures {
        println!("  {} h_m={} target={}: {}", f.model, f.h_m, f.target, f.error);
    }
    Ok(())
}
