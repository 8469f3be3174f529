//! Identical budgets across `eps`; prints the rows of sweep.csv.
//!
//! `cargo run --release --example epsilon_sweep -- [iterations] [out_dir]`

use std::path::PathBuf;

use rte_apnn::experiment::{self, Overrides, RunConfig};

fn main() -> rte_apnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|a| a.parse().ok()).or(Some(100));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/example-sweep"));
    let mut cfg = RunConfig::preset("sweep_1d")?;
    cfg.apply(&Overrides { seed: None, iterations, out_dir: None });

    let rows = experiment::sweep(&cfg, &out)?;
    println!("{:>8} {:>10} {:>10} {:>12} {:>14}", "eps", "rel_l2", "loss", "loss/eps", "loss+eps^2");
    for r in &rows {
        println!("{:>8.0e} {:>10.3e} {:>10.3e} {:>12.3e} {:>14.3e}", r.epsilon, r.rel_l2, r.loss, r.loss_over_eps(), r.loss_plus_eps2());
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_l2).collect();
    let ratio = errs.iter().cloned().fold(0.0, f64::max) / errs.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("max/min error ratio {ratio:.2}; table in {}", out.join("sweep.csv").display());
    Ok(())
}
