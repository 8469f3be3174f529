//! Forward tangents and a reverse sweep on the tape.
//!
//! Records `y = tanh(W x + b)` with one forward tangent `dy/dx`, then takes
//! the parameter gradient of `sum((dy/dx)^2)`, a loss built from an input
//! derivative.

use ndarray::array;
use rte_apnn::autodiff::Tape;

fn main() -> rte_apnn::Result<()> {
    let params = [0.7, -0.4, 0.1, 0.3];
    let mut tape = Tape::new();
    let w = tape.param(0, 2, 1, &params[..2]);
    let b = tape.param(2, 2, 1, &params[2..]);
    // One point x = 0.5, seeded with dx/dx = 1 in the tangent block.
    let x = tape.input(array![[0.5, 1.0]], 1);
    let z = tape.affine(w, x, Some(b));
    let y = tape.tanh(z);
    let y0 = tape.block(y, 0);
    let dy = tape.block(y, 1);
    let sq = tape.square(dy);
    let loss = tape.sum(sq);

    println!("y      = {:?}", tape.value(y0).iter().collect::<Vec<_>>());
    println!("dy/dx  = {:?}", tape.value(dy).iter().collect::<Vec<_>>());
    println!("loss   = {:.6}", tape.scalar(loss));
    println!("dloss/dtheta = {:?}", tape.grad_params(loss, params.len())?);
    Ok(())
}
