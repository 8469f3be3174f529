//! Saves a surrogate set to the text checkpoint format and loads it back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rte_apnn::nets::{checkpoint, InputEncoding, NetBundle, SurrogateConfig, SurrogateSet1D};
use rte_apnn::quadrature::VelocitySet;

fn main() -> rte_apnn::Result<()> {
    let cfg = SurrogateConfig { width: 4, blocks: 1, encoding: InputEncoding::periodic(1) };
    let vel = VelocitySet::slab(4)?;
    let set = SurrogateSet1D::new(cfg, 1.0, vel.clone(), &mut ChaCha8Rng::seed_from_u64(1))?;

    let dir = std::env::temp_dir().join("rte-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| rte_apnn::Error::io(&dir, e))?;
    let path = dir.join("params.ckpt");
    checkpoint::save(&path, &set, &[("epsilon", "1".into())])?;

    let mut other = SurrogateSet1D::new(cfg, 1.0, vel, &mut ChaCha8Rng::seed_from_u64(2))?;
    let ck = checkpoint::load(&path, &mut other)?;
    println!("wrote {}", path.display());
    println!("meta {:?}, {} arrays", ck.meta, ck.arrays.len());
    println!("bit-identical after reload: {}", other.flat_params() == set.flat_params());

    let text = checkpoint::to_text(&set, &[]);
    for line in text.lines().take(5) {
        println!("| {line}");
    }
    Ok(())
}
