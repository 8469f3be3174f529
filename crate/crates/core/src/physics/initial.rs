use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::VelocitySet;

/// `Σ a_k cos(2πkx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries1D {
    pub terms: Vec<(u32, f64)>,
}

impl CosineSeries1D {
    pub fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(k, a)| a * (TAU * k as f64 * x).cos()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { terms: self.terms.iter().map(|&(k, a)| (k, c * a)).collect() }
    }
}

/// `Σ a_{kl} cos(2πkx) cos(2πly)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries2D {
    pub terms: Vec<(u32, u32, f64)>,
}

impl CosineSeries2D {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|&(k, l, a)| a * (TAU * k as f64 * x).cos() * (TAU * l as f64 * y).cos()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { terms: self.terms.iter().map(|&(k, l, a)| (k, l, c * a)).collect() }
    }
}

/// Velocity factor of a separable initial condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VelocityProfile {
    /// `exp(−|v|²/2)/√(2π)`
    Gaussian,
    Constant(f64),
}

impl VelocityProfile {
    pub fn value(&self, v: [f64; 2]) -> f64 {
        match *self {
            VelocityProfile::Gaussian => (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp() / (2.0 * PI).sqrt(),
            VelocityProfile::Constant(c) => c,
        }
    }
}

type Kinetic1D = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Kinetic2D = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// `f_IC(x, v)` on the slab.
#[derive(Clone)]
pub enum InitialCondition1D {
    Separable { profile: CosineSeries1D, velocity: VelocityProfile },
    Custom(Kinetic1D),
}

impl fmt::Debug for InitialCondition1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Separable { profile, velocity } => {
                f.debug_struct("Separable").field("profile", profile).field("velocity", velocity).finish()
            }
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InitialCondition1D {
    /// `(1 + cos 4πx) exp(−v²/2)/√(2π)`.
    pub fn cosine_gaussian() -> Self {
        Self::Separable { profile: CosineSeries1D { terms: vec![(0, 1.0), (2, 1.0)] }, velocity: VelocityProfile::Gaussian }
    }

    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn f(&self, x: f64, v: f64) -> f64 {
        match self {
            Self::Separable { profile, velocity } => profile.value(x) * velocity.value([v, 0.0]),
            Self::Custom(g) => g(x, v),
        }
    }

    /// Cosine series of `ρ_IC = ⟨r_IC⟩` under `vel`.
    pub fn density_series(&self, vel: &VelocitySet) -> Result<CosineSeries1D> {
        match self {
            Self::Separable { profile, velocity } => {
                let even: Vec<f64> =
                    vel.coords.iter().map(|c| 0.5 * (velocity.value([c[0], 0.0]) + velocity.value([-c[0], 0.0]))).collect();
                Ok(profile.scaled(vel.average(&even)?))
            }
            Self::Custom(_) => Err(Error::Unsupported("initial condition is not a finite cosine series".into())),
        }
    }
}

/// `f_IC(x, y, ξ, η)` on the unit square.
#[derive(Clone)]
pub enum InitialCondition2D {
    Separable { profile: CosineSeries2D, velocity: VelocityProfile },
    Custom(Kinetic2D),
}

impl fmt::Debug for InitialCondition2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Separable { profile, velocity } => {
                f.debug_struct("Separable").field("profile", profile).field("velocity", velocity).finish()
            }
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InitialCondition2D {
    /// `(1 + (cos 2πx + cos 2πy)/2) exp(−|v|²/2)/√(2π)`.
    pub fn cosine_gaussian() -> Self {
        Self::Separable {
            profile: CosineSeries2D { terms: vec![(0, 0, 1.0), (1, 0, 0.5), (0, 1, 0.5)] },
            velocity: VelocityProfile::Gaussian,
        }
    }

    pub fn custom(f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn f(&self, x: f64, y: f64, xi: f64, eta: f64) -> f64 {
        match self {
            Self::Separable { profile, velocity } => profile.value(x, y) * velocity.value([xi, eta]),
            Self::Custom(g) => g(x, y, xi, eta),
        }
    }

    pub fn density_series(&self, vel: &VelocitySet) -> Result<CosineSeries2D> {
        match self {
            Self::Separable { profile, velocity } => {
                let even: Vec<f64> = vel
                    .coords
                    .iter()
                    .map(|&[a, b]| {
                        0.25 * (velocity.value([a, b]) + velocity.value([-a, -b]) + velocity.value([-a, b]) + velocity.value([a, -b]))
                    })
                    .collect();
                Ok(profile.scaled(vel.average(&even)?))
            }
            Self::Custom(_) => Err(Error::Unsupported("initial condition is not a finite cosine series".into())),
        }
    }
}

/// Parity decomposition of `f_IC` at one `x`, evaluated at the velocity
/// nodes. `r` and `odd = εj` are kept unscaled so the initial loss can be
/// formed without dividing by `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialFields1D {
    pub rho: f64,
    pub r: Vec<f64>,
    pub odd: Vec<f64>,
    pub j: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn initial_fields_1d(ic: &InitialCondition1D, eps: f64, x: f64, vel: &VelocitySet) -> Result<InitialFields1D> {
    let mut r = Vec::with_capacity(vel.len());
    let mut odd = Vec::with_capacity(vel.len());
    for c in &vel.coords {
        let (fp, fm) = (ic.f(x, c[0]), ic.f(x, -c[0]));
        r.push(0.5 * (fp + fm));
        odd.push(0.5 * (fp - fm));
    }
    let rho = vel.average(&r)?;
    let e2 = eps * eps;
    Ok(InitialFields1D { rho, j: odd.iter().map(|o| o / eps).collect(), w: r.iter().map(|ri| (ri - rho) / e2).collect(), r, odd })
}

/// 2D analogue of [`InitialFields1D`]: `r1, r2` are the even parities across
/// the two diagonals, `odd1 = εj₁`, `odd2 = εj₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialFields2D {
    pub rho: f64,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub odd1: Vec<f64>,
    pub odd2: Vec<f64>,
    pub phi: Vec<f64>,
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub w: Vec<f64>,
}

impl InitialFields2D {
    /// `(r₁ + r₂)/2 − ρ = ε²w`.
    pub fn scaled_w(&self) -> Vec<f64> {
        self.r1.iter().zip(&self.r2).map(|(a, b)| 0.5 * (a + b) - self.rho).collect()
    }
}

pub fn initial_fields_2d(ic: &InitialCondition2D, eps: f64, x: f64, y: f64, vel: &VelocitySet) -> Result<InitialFields2D> {
    let n = vel.len();
    let (mut r1, mut r2, mut odd1, mut odd2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &[a, b] in &vel.coords {
        let f_pp = ic.f(x, y, a, b);
        let f_mm = ic.f(x, y, -a, -b);
        let f_pm = ic.f(x, y, a, -b);
        let f_mp = ic.f(x, y, -a, b);
        r2.push(0.5 * (f_pp + f_mm));
        odd2.push(0.5 * (f_pp - f_mm));
        r1.push(0.5 * (f_pm + f_mp));
        odd1.push(0.5 * (f_pm - f_mp));
    }
    let mean: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 0.5 * (a + b)).collect();
    let rho = vel.average(&mean)?;
    let e2 = eps * eps;
    Ok(InitialFields2D {
        rho,
        phi: r2.iter().zip(&r1).map(|(a, b)| a - b).collect(),
        j1: odd1.iter().map(|o| o / eps).collect(),
        j2: odd2.iter().map(|o| o / eps).collect(),
        w: mean.iter().map(|m| (m - rho) / e2).collect(),
        r1,
        r2,
        odd1,
        odd2,
    })
}
