//! Renders a loss curve from a hand-written CSV.

use rte_apnn::plot::{self, PlotKind, LOSS_HEADER};

fn main() -> rte_apnn::Result<()> {
    let dir = std::env::temp_dir().join("rte-plot-example");
    std::fs::create_dir_all(&dir).map_err(|e| rte_apnn::Error::io(&dir, e))?;
    let csv = dir.join("loss_history.csv");
    let mut text = LOSS_HEADER.join(",") + "\n";
    for it in (0..=1000).step_by(100) {
        let total = 2.0 * (-(it as f64) / 180.0).exp() + 1e-3;
        text += &format!("{it},{total},{},{},0\n", 0.6 * total, 0.4 * total);
    }
    std::fs::write(&csv, text).map_err(|e| rte_apnn::Error::io(&csv, e))?;

    let out = dir.join("loss.svg");
    plot::plot(&csv, "loss".parse::<PlotKind>()?, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
