use std::f64::consts::TAU;

use super::initial::{CosineSeries1D, CosineSeries2D};

/// `(ρ, w)` of the diffusion limit `∂tρ = ρxx/3`, `w = (v² − 1/3)ρxx`,
/// started from the density series `rho0`.
pub fn limit_solution_1d(t: f64, x: f64, v: f64, rho0: &CosineSeries1D) -> (f64, f64) {
    let mut rho = 0.0;
    let mut rho_xx = 0.0;
    for &(k, a) in &rho0.terms {
        let kk = TAU * k as f64;
        let mode = a * (-kk * kk * t / 3.0).exp() * (kk * x).cos();
        rho += mode;
        rho_xx -= kk * kk * mode;
    }
    (rho, (v * v - 1.0 / 3.0) * rho_xx)
}

/// `(ρ, w)` of `∂tρ = ½Δρ`, `w = (ξ² − ½)ρxx + (η² − ½)ρyy`.
pub fn limit_solution_2d(t: f64, x: f64, y: f64, xi: f64, eta: f64, rho0: &CosineSeries2D) -> (f64, f64) {
    let mut rho = 0.0;
    let mut rho_xx = 0.0;
    let mut rho_yy = 0.0;
    for &(k, l, a) in &rho0.terms {
        let (kx, ky) = (TAU * k as f64, TAU * l as f64);
        let mode = a * (-(kx * kx + ky * ky) * t / 2.0).exp() * (kx * x).cos() * (ky * y).cos();
        rho += mode;
        rho_xx -= kx * kx * mode;
        rho_yy -= ky * ky * mode;
    }
    (rho, (xi * xi - 0.5) * rho_xx + (eta * eta - 0.5) * rho_yy)
}
