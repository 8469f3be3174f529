//! Gauss-Legendre rules and the two velocity averages.

use rte_apnn::quadrature::{gauss_legendre, VelocitySet};

fn main() -> rte_apnn::Result<()> {
    let rule = gauss_legendre(4, -1.0, 1.0)?;
    println!("4-point rule on [-1, 1]");
    for (x, w) in rule.nodes().iter().zip(rule.weights()) {
        println!("  node {x:+.16}  weight {w:.16}");
    }
    println!("  integral of x^6 = {:.16} (exact 2/7 = {:.16})", rule.integrate(|x| x.powi(6)), 2.0 / 7.0);

    let slab = VelocitySet::slab(16)?;
    let v2: Vec<f64> = slab.xi().iter().map(|v| v * v).collect();
    println!("slab, 16 nodes:          <v^2>  = {:.16}", slab.average(&v2)?);

    let circle = VelocitySet::quarter_circle(16)?;
    let xi2: Vec<f64> = circle.xi().iter().map(|v| v * v).collect();
    let xieta: Vec<f64> = circle.coords.iter().map(|c| c[0] * c[1]).collect();
    println!("quarter circle, 16 nodes: <xi^2> = {:.16}", circle.average(&xi2)?);
    println!("                          <xi eta> = {:.16} (2/pi)", circle.average(&xieta)?);
    Ok(())
}
