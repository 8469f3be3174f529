//! Runs a bundled preset end to end and lists the artifacts.
//!
//! `cargo run --release --example run_preset -- [preset] [iterations] [out_dir]`

use std::path::PathBuf;

use rte_apnn::experiment::{self, preset_names, Overrides, RunConfig};

fn main() -> rte_apnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "1d_eps1".into());
    let iterations = args.next().and_then(|a| a.parse().ok()).or(Some(200));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs").join(format!("example-{name}")));
    println!("presets: {:?}", preset_names());

    let mut cfg = RunConfig::preset(&name)?;
    cfg.apply(&Overrides { seed: None, iterations, out_dir: None });
    let outcome = experiment::run(&cfg, &out)?;
    println!("eps {:e}: final loss {:.4e}, rel_l2 {:.4e}", outcome.epsilon, outcome.final_loss, outcome.final_rel_l2);
    let mut files: Vec<PathBuf> = Vec::new();
    for dir in [out.clone(), out.join("plots")] {
        for e in std::fs::read_dir(&dir).map_err(|e| rte_apnn::Error::io(&dir, e))? {
            files.push(e.map_err(|e| rte_apnn::Error::io(&dir, e))?.path());
        }
    }
    files.sort();
    for f in files.iter().filter(|f| f.is_file()) {
        println!("  {}", f.display());
    }
    Ok(())
}
