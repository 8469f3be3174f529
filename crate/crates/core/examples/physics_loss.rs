//! The AP loss of an untrained 1D surrogate, term by term, and its behaviour
//! as `eps -> 0`: the residual part converges to its limit at rate `eps^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rte_apnn::nets::{InputEncoding, SurrogateConfig, SurrogateSet1D};
use rte_apnn::physics::{loss_total_1d, InitialCondition1D, LossOptions};
use rte_apnn::quadrature::VelocitySet;
use rte_apnn::sampler::{sample_batch, SamplerConfig};

fn main() -> rte_apnn::Result<()> {
    let cfg = SurrogateConfig { width: 16, blocks: 2, encoding: InputEncoding::periodic(4) };
    let set = SurrogateSet1D::new(cfg, 1e-2, VelocitySet::slab(16)?, &mut ChaCha8Rng::seed_from_u64(5))?;
    let batch = sample_batch(&SamplerConfig { dimension: 1, interior: 256, initial: 64, horizon: 0.1 }, 5, 0)?;
    let ic = InitialCondition1D::cosine_gaussian();
    let opts = LossOptions::default();

    let b = loss_total_1d(&set, &batch, 1e-2, &ic, &opts, None)?;
    println!("eps = 1e-2: total {:.4e}", b.total());
    println!(
        "  residual terms |d1|^2, |d2|^2, |d3|^2: {:.4e} {:.4e} {:.4e}",
        b.residual_terms[0], b.residual_terms[1], b.residual_terms[2]
    );
    println!("  initial terms (density, kinetic):     {:.4e} {:.4e}", b.initial_terms[0], b.initial_terms[1]);

    let r0 = loss_total_1d(&set, &batch, 0.0, &ic, &opts, None)?.residual;
    println!("residual loss gap to eps = 0:");
    for eps in [1e-1, 1e-2, 1e-3] {
        let r = loss_total_1d(&set, &batch, eps, &ic, &opts, None)?.residual;
        println!("  eps {eps:.0e}: |R - R0| = {:.4e}", (r - r0).abs());
    }
    Ok(())
}
