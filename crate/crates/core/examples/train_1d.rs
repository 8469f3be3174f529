//! A short training run written against the library API: sampler, AP loss
//! and Adam, with the error against the reference logged as it goes.
//!
//! `cargo run --release --example train_1d -- [iterations]`

use rte_apnn::nets::{InputEncoding, SurrogateConfig, SurrogateSet1D};
use rte_apnn::physics::{InitialCondition1D, LossOptions};
use rte_apnn::quadrature::VelocitySet;
use rte_apnn::reference::{relative_l2, solve_kinetic_fd_1d, Grid};
use rte_apnn::sampler::SamplerConfig;
use rte_apnn::train::{init_rng, train, Schedule, TrainSettings};

fn main() -> rte_apnn::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(300);
    let (eps, horizon) = (1.0, 0.1);
    let ic = InitialCondition1D::cosine_gaussian();

    let grid = Grid::with_default_step(200, 1, eps, horizon)?;
    let sol = solve_kinetic_fd_1d(eps, &grid, &ic, &VelocitySet::slab(16)?, &[horizon])?;
    let points: Vec<(f64, f64)> = sol.x.iter().map(|&x| (horizon, x)).collect();
    let reference = sol.snapshots[0].rho.clone();

    let cfg = SurrogateConfig { width: 24, blocks: 2, encoding: InputEncoding::periodic(4).with_time_scale(1.0 / horizon) };
    let mut set = SurrogateSet1D::new(cfg, eps, VelocitySet::slab(8)?, &mut init_rng(1))?;
    let settings = TrainSettings {
        epsilon: eps,
        iterations,
        seed: 1,
        schedule: Schedule { eta0: 3e-3, gamma: 0.9, period: 300 },
        sampler: SamplerConfig { dimension: 1, interior: 256, initial: 128, horizon },
        loss: LossOptions { chunk: 8, ..Default::default() },
        log_every: 50,
    };
    let mut evaluate = |m: &SurrogateSet1D| relative_l2(&m.density(&points)?, &reference);
    let history = train(&mut set, &ic, &settings, Some(&mut evaluate))?;
    for r in &history.rows {
        println!("iter {:5}  loss {:.4e}  rel_l2(rho(T)) {:.4e}", r.iter, r.loss.total(), r.rel_l2.unwrap_or(f64::NAN));
    }
    Ok(())
}
