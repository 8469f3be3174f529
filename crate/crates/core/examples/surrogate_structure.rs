//! Parity-preserving wrappers: the symmetries hold exactly for any weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rte_apnn::nets::{InputEncoding, NetBundle, SurrogateConfig, SurrogateSet1D, SurrogateSet2D};
use rte_apnn::quadrature::VelocitySet;

fn main() -> rte_apnn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SurrogateConfig { width: 16, blocks: 2, encoding: InputEncoding::periodic(4) };

    let slab = SurrogateSet1D::new(cfg, 1e-2, VelocitySet::slab(16)?, &mut rng)?;
    println!("1D set: {} parameters in {:?}", slab.param_count(), slab.names());
    let [p, m] = slab.wrap(0.05, 0.3, 0.6)?;
    println!("  j(+v) = {:+.6e}   j(-v) = {:+.6e}", p.j.value, m.j.value);
    println!("  w(+v) = {:+.6e}   w(-v) = {:+.6e}", p.w.value, m.w.value);
    println!("  rho   = {:.6e} (softplus, always positive)", p.rho.value);
    // Exact for dyadic x, where x + 1 rounds to nothing.
    println!("  x = 0.375 and x + 1 agree: {}", slab.wrap(0.05, 1.375, 0.6)? == slab.wrap(0.05, 0.375, 0.6)?);

    let planar = SurrogateSet2D::new(cfg, 1e-2, VelocitySet::quarter_circle(8)?, &mut rng)?;
    let f = planar.wrap(0.05, 0.3, 0.7, 0.6, 0.8)?;
    println!("2D set: {} parameters in {:?}", planar.param_count(), planar.names());
    for (s, label) in ["( xi,  eta)", "(-xi, -eta)", "(-xi,  eta)", "( xi, -eta)"].iter().enumerate() {
        println!("  {label}: phi {:+.6e}  j1 {:+.6e}  j2 {:+.6e}  w {:+.6e}", f[s].phi.value, f[s].j1.value, f[s].j2.value, f[s].w.value);
    }
    Ok(())
}
