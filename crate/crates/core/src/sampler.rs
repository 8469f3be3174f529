//! Seeded collocation batches.
//!
//! Every batch comes from a ChaCha8 stream keyed by `(seed, iteration)`:
//! the generator is seeded with `seed` and switched to stream `iteration`,
//! so any batch can be regenerated without replaying earlier ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// 1 or 2.
    pub dimension: usize,
    pub interior: usize,
    pub initial: usize,
    pub horizon: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { dimension: 1, interior: 4096, initial: 1024, horizon: 0.1 }
    }
}

/// Interior points `(t, x, y)` and initial points `(x, y)`; `y = 0` in 1D.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationBatch {
    pub interior: Vec<[f64; 3]>,
    pub initial: Vec<[f64; 2]>,
}

pub fn batch_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

pub fn sample_batch(cfg: &SamplerConfig, seed: u64, iteration: u64) -> Result<CollocationBatch> {
    if cfg.interior == 0 || cfg.initial == 0 {
        return Err(Error::InvalidArgument("collocation counts must be positive".into()));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    if !(1..=2).contains(&cfg.dimension) {
        return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {}", cfg.dimension)));
    }
    let two = cfg.dimension == 2;
    let mut rng = batch_rng(seed, iteration);
    let interior = (0..cfg.interior)
        .map(|_| {
            let t = cfg.horizon * rng.gen::<f64>();
            let x = rng.gen::<f64>();
            let y = if two { rng.gen::<f64>() } else { 0.0 };
            [t, x, y]
        })
        .collect();
    let initial = (0..cfg.initial)
        .map(|_| {
            let x = rng.gen::<f64>();
            let y = if two { rng.gen::<f64>() } else { 0.0 };
            [x, y]
        })
        .collect();
    Ok(CollocationBatch { interior, initial })
}
