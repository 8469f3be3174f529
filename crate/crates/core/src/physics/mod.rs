//! Parity systems, residuals, loss assembly, reconstruction and the
//! diffusion limit.
//!
//! In 1D the unknowns are `ρ`, the odd flux `j` and the even correction `w`
//! with `f(±v) = ρ + ε²w ± εj`. In 2D, with velocities `(ξ, η)` on the first
//! quadrant of the unit circle, the extra unknown `φ = r₂ − r₁` separates the
//! two even parities and `j₁, j₂` are the odd parities across the two
//! diagonals.
//!
//! All scalar residual functions accept `ε = 0`, which gives the limiting
//! system.

mod initial;
mod limit;
mod loss;

pub use initial::{
    initial_fields_1d, initial_fields_2d, CosineSeries1D, CosineSeries2D, InitialCondition1D, InitialCondition2D, InitialFields1D,
    InitialFields2D, VelocityProfile,
};
pub use limit::{limit_solution_1d, limit_solution_2d};
pub use loss::{loss_total_1d, loss_total_2d, residual_vars_1d, residual_vars_2d, LossBreakdown, LossOptions, LossWeights};

use serde::{Deserialize, Serialize};

/// Value of a field with its first partials.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Self { value, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParityFields1D {
    pub rho: Jet,
    pub j: Jet,
    pub w: Jet,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParityFields2D {
    pub rho: Jet,
    pub phi: Jet,
    pub j1: Jet,
    pub j2: Jet,
    pub w: Jet,
}

/// Convention for the `φ` equation in 2D.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D3Form {
    /// `ε²∂tφ + ε²ξ∂x(j₂−j₁) + ε²η∂y(j₁+j₂) + φ`
    #[default]
    NonStiff,
    /// `∂tφ + ξ∂x(j₂−j₁) + η∂y(j₁+j₂) + φ/ε²`
    Stiff,
}

/// `(d1, d2, d3)` at velocity `v`, given `avg_vjx = ⟨v ∂x j⟩` at the same
/// `(t, x)`.
pub fn residuals_1d(f: &ParityFields1D, eps: f64, v: f64, avg_vjx: f64) -> [f64; 3] {
    let e2 = eps * eps;
    let vjx = v * f.j.dx;
    [f.rho.dt + avg_vjx, e2 * f.j.dt + v * f.rho.dx + e2 * v * f.w.dx + f.j.value, e2 * f.w.dt + f.w.value + vjx - avg_vjx]
}

/// `ξ∂x(j₁+j₂) + η∂y(j₂−j₁)`, the transport term averaged inside `d1`.
pub fn transport_2d(f: &ParityFields2D, xi: f64, eta: f64) -> f64 {
    xi * (f.j1.dx + f.j2.dx) + eta * (f.j2.dy - f.j1.dy)
}

/// `(d1, …, d5)` at `(ξ, η)`, given `avg_a = ⟨ξ∂x(j₁+j₂) + η∂y(j₂−j₁)⟩`.
///
/// `d1` carries the factor 2 on `∂tρ` that the continuity equation has when
/// the two even parities are summed; without it the diffusion limit
/// `∂tρ = ½Δρ` is not a zero of the residual.
pub fn residuals_2d(f: &ParityFields2D, eps: f64, xi: f64, eta: f64, avg_a: f64, form: D3Form) -> [f64; 5] {
    let e2 = eps * eps;
    let a = transport_2d(f, xi, eta);
    let s = |j: fn(&Jet) -> f64| j(&f.j1) + j(&f.j2);
    let d = |j: fn(&Jet) -> f64| j(&f.j2) - j(&f.j1);
    let d3 = match form {
        D3Form::NonStiff => e2 * f.phi.dt + e2 * xi * d(|j| j.dx) + e2 * eta * s(|j| j.dy) + f.phi.value,
        D3Form::Stiff => f.phi.dt + xi * d(|j| j.dx) + eta * s(|j| j.dy) + f.phi.value / e2,
    };
    [
        2.0 * f.rho.dt + avg_a,
        2.0 * e2 * f.w.dt + a - avg_a + 2.0 * f.w.value,
        d3,
        e2 * s(|j| j.dt) + s(|j| j.value) + 2.0 * xi * (f.rho.dx + e2 * f.w.dx) + eta * f.phi.dy,
        e2 * d(|j| j.dt) + d(|j| j.value) + xi * f.phi.dx + 2.0 * eta * (f.rho.dy + e2 * f.w.dy),
    ]
}

/// `(f(+v), f(−v))` from parity values.
pub fn reconstruct_f_1d(rho: f64, j: f64, w: f64, eps: f64) -> (f64, f64) {
    let r = rho + eps * eps * w;
    (r + eps * j, r - eps * j)
}

/// `f` at `[(ξ,η), (−ξ,−η), (−ξ,η), (ξ,−η)]`.
pub fn reconstruct_f_2d(rho: f64, phi: f64, j1: f64, j2: f64, w: f64, eps: f64) -> [f64; 4] {
    let base = rho + eps * eps * w;
    let r2 = base + 0.5 * phi;
    let r1 = base - 0.5 * phi;
    [r2 + eps * j2, r2 - eps * j2, r1 - eps * j1, r1 + eps * j1]
}

#[cfg(test)]
mod tests;
