//! Finite-difference ground truth and the relative ℓ² metric.
//!
//! The kinetic equation is advanced in parity variables with a diffusive
//! relaxation splitting. Each step is a non-stiff transport sub-step
//!
//! ```text
//! ∂t r + v ∂x j = 0,    ∂t j + φ v ∂x r = 0,    φ = min(1, 1/ε²),
//! ```
//!
//! upwinded in the characteristic variables `√φ r ± j`, followed by an
//! implicit pointwise relaxation
//!
//! ```text
//! r' = (ε² r + Δt ρ) / (ε² + Δt)
//! j' = (ε² j − Δt (1 − ε²φ) v Dx r') / (ε² + Δt)
//! ```
//!
//! with `Dx` the central difference. The relaxation leaves `ρ = ⟨r⟩`
//! untouched and the fluxes are conservative, so mass is preserved up to
//! rounding. As `ε → 0` the scheme collapses onto an explicit discretisation
//! of the diffusion limit, which is why the default step carries a parabolic
//! cap.
//!
//! In 2D the transport is split by direction, `X(Δt/2) Y(Δt) X(Δt/2)`, with
//! the option of averaging that with the `Y X Y` ordering so the scheme
//! commutes with the axis swap.

use ndarray::{Array2, Array3, ArrayViewMut1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{InitialCondition1D, InitialCondition2D};
use crate::quadrature::VelocitySet;

/// Hard bound on `√φ Δt / Δx`.
pub const CFL_LIMIT: f64 = 1.0;
/// Hard bound on the diffusive number, see [`diffusive_number`].
pub const DIFFUSIVE_LIMIT: f64 = 1.0;
/// `Δt = 0.4 Δx` unless the parabolic cap is tighter.
pub const DEFAULT_CFL: f64 = 0.4;
/// Default parabolic cap on the diffusive number.
pub const DEFAULT_DIFFUSIVE: f64 = 0.2;

/// Periodic grid on the unit interval or square. `ny == 1` in 1D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub horizon: f64,
}

fn phi(eps: f64) -> f64 {
    (1.0 / (eps * eps)).min(1.0)
}

/// `Δt² (1 − ε²φ) / ((ε² + Δt) Δx²)`: the explicit diffusion number the
/// relaxation hands to the transport step. It tends to `Δt/Δx²` as `ε → 0`
/// and vanishes for `ε ≥ 1`.
pub fn diffusive_number(dt: f64, dx: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    dt * dt * (1.0 - e2 * phi(eps)).max(0.0) / ((e2 + dt) * dx * dx)
}

/// Largest step with `√φ Δt/Δx ≤ 0.4` and diffusive number `≤ 0.2`.
pub fn default_step(dx: f64, eps: f64) -> f64 {
    let dt = DEFAULT_CFL * dx / phi(eps).sqrt();
    if diffusive_number(dt, dx, eps) <= DEFAULT_DIFFUSIVE {
        return dt;
    }
    let e2 = eps * eps;
    let a = 1.0 - e2 * phi(eps);
    let c = DEFAULT_DIFFUSIVE * dx * dx;
    (c + (c * c + 4.0 * a * c * e2).sqrt()) / (2.0 * a)
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dt: f64, horizon: f64) -> Result<Self> {
        if nx < 3 {
            return Err(Error::config("nx", format!("need at least 3 cells, got {nx}")));
        }
        if ny != 1 && ny < 3 {
            return Err(Error::config("ny", format!("need 1 or at least 3 cells, got {ny}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("horizon", format!("must be positive, got {horizon}")));
        }
        Ok(Self { nx, ny, dt, horizon })
    }

    /// Grid with the default step for `eps` on the finer of the two axes.
    pub fn with_default_step(nx: usize, ny: usize, eps: f64, horizon: f64) -> Result<Self> {
        let h = 1.0 / nx.max(ny) as f64;
        Self::new(nx, ny, default_step(h, eps), horizon)
    }

    pub fn dimension(&self) -> usize {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    /// Node positions `i Δx`.
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 * self.dx()).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|i| i as f64 * self.dy()).collect()
    }

    /// Rejects steps outside the stability region for `eps`.
    pub fn check_stability(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("epsilon", format!("must be positive, got {eps}")));
        }
        let h = if self.dimension() == 1 { self.dx() } else { self.dx().min(self.dy()) };
        let cfl = phi(eps).sqrt() * self.dt / h;
        if cfl > CFL_LIMIT {
            return Err(Error::config("dt", format!("transport CFL number {cfl:.3} exceeds {CFL_LIMIT}")));
        }
        let d = self.dimension() as f64 * diffusive_number(self.dt, h, eps);
        if d > DIFFUSIVE_LIMIT {
            return Err(Error::config("dt", format!("diffusive number {d:.3} exceeds {DIFFUSIVE_LIMIT}")));
        }
        Ok(())
    }
}

pub fn relative_l2(candidate: &[f64], reference: &[f64]) -> Result<f64> {
    if candidate.len() != reference.len() {
        return Err(Error::InvalidArgument(format!("sample layouts differ: {} vs {}", candidate.len(), reference.len())));
    }
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference has zero norm".into()));
    }
    let num: f64 = candidate.iter().zip(reference).map(|(c, r)| (c - r) * (c - r)).sum();
    Ok((num / den).sqrt())
}

/// `Σ ρ Δx` (times `Δy` in 2D) over a periodic grid.
pub fn total_mass(rho: &[f64], cell_volume: f64) -> f64 {
    rho.iter().sum::<f64>() * cell_volume
}

/// `r`, `j` indexed `[node, cell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticState1D {
    pub r: Array2<f64>,
    pub j: Array2<f64>,
}

/// Diagonal parities indexed `[node, ix, iy]`; `r₂, j₂` pair `±(ξ, η)` and
/// `r₁, j₁` pair `±(ξ, −η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticState2D {
    pub r1: Array3<f64>,
    pub r2: Array3<f64>,
    pub j1: Array3<f64>,
    pub j2: Array3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot1D {
    pub t: f64,
    pub rho: Vec<f64>,
    pub state: KineticState1D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution1D {
    pub x: Vec<f64>,
    pub snapshots: Vec<Snapshot1D>,
}

/// `rho` is indexed `[ix, iy]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot2D {
    pub t: f64,
    pub rho: Array2<f64>,
    pub state: KineticState2D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution2D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub snapshots: Vec<Snapshot2D>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// `X(Δt/2) Y(Δt) X(Δt/2)`.
    #[default]
    Strang,
    /// Mean of the `XYX` and `YXY` orderings.
    Symmetrized,
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    let mut prev = 0.0;
    for &t in times {
        if !(t >= prev && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::config("times", format!("output times must be ascending within [0, {horizon}], got {t}")));
        }
        prev = t;
    }
    Ok(())
}

enum Event {
    Step(f64),
    Emit(f64),
}

/// Steps from 0 to each output time in turn, shortening the last step
/// before each output so it lands exactly.
fn schedule(times: &[f64], dt: f64) -> Vec<Event> {
    let mut events = Vec::new();
    let mut t = 0.0;
    for &target in times {
        while target - t > 1e-12 * dt {
            let h = dt.min(target - t);
            events.push(Event::Step(h));
            t = if target - t - h <= 1e-12 * dt { target } else { t + h };
        }
        events.push(Event::Emit(target));
    }
    events
}

struct Lane {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Lane {
    fn new(n: usize) -> Self {
        Self { u: vec![0.0; n], v: vec![0.0; n] }
    }

    /// First-order upwind step of `∂t r + a ∂x j = 0`, `∂t j + φ a ∂x r = 0`
    /// along one periodic lane; `ratio = Δt/Δx`.
    fn transport(&mut self, mut r: ArrayViewMut1<f64>, mut j: ArrayViewMut1<f64>, a: f64, sq: f64, ratio: f64) {
        let n = r.len();
        let s = a.signum();
        let c = a.abs() * sq * ratio;
        for i in 0..n {
            self.u[i] = sq * r[i] + s * j[i];
            self.v[i] = sq * r[i] - s * j[i];
        }
        for i in 0..n {
            let um = self.u[(i + n - 1) % n];
            let vp = self.v[(i + 1) % n];
            let u = self.u[i] - c * (self.u[i] - um);
            let v = self.v[i] + c * (vp - self.v[i]);
            r[i] = (u + v) / (2.0 * sq);
            j[i] = s * 0.5 * (u - v);
        }
    }
}

fn validate(eps: f64, grid: &Grid, vel: &VelocitySet, dimension: usize) -> Result<()> {
    if grid.dimension() != dimension {
        return Err(Error::config("grid", format!("expected a {dimension}D grid")));
    }
    if vel.is_empty() {
        return Err(Error::config("velocity_nodes", "need at least one node"));
    }
    grid.check_stability(eps)
}

pub fn solve_kinetic_fd_1d(eps: f64, grid: &Grid, ic: &InitialCondition1D, vel: &VelocitySet, times: &[f64]) -> Result<Solution1D> {
    validate(eps, grid, vel, 1)?;
    check_times(times, grid.horizon)?;
    let (q, n) = (vel.len(), grid.nx);
    let x = grid.xs();
    let mut state = KineticState1D { r: Array2::zeros((q, n)), j: Array2::zeros((q, n)) };
    for (k, c) in vel.coords.iter().enumerate() {
        for (i, &xi) in x.iter().enumerate() {
            let (fp, fm) = (ic.f(xi, c[0]), ic.f(xi, -c[0]));
            state.r[[k, i]] = 0.5 * (fp + fm);
            state.j[[k, i]] = 0.5 * (fp - fm) / eps;
        }
    }

    let sq = phi(eps).sqrt();
    let e2 = eps * eps;
    let drive = 1.0 - e2 * phi(eps);
    let dx = grid.dx();
    let mut lane = Lane::new(n);
    let mut rho = vec![0.0; n];
    let mut snapshots = Vec::with_capacity(times.len());

    let density = |r: &Array2<f64>, rho: &mut [f64]| {
        rho.fill(0.0);
        for (k, w) in vel.weights.iter().enumerate() {
            for (d, s) in rho.iter_mut().zip(r.row(k)) {
                *d += w * s;
            }
        }
    };

    let step = |h: f64, state: &mut KineticState1D, lane: &mut Lane, rho: &mut [f64]| {
        for (k, c) in vel.coords.iter().enumerate() {
            lane.transport(state.r.row_mut(k), state.j.row_mut(k), c[0], sq, h / dx);
        }
        density(&state.r, rho);
        let inv = 1.0 / (e2 + h);
        for (k, c) in vel.coords.iter().enumerate() {
            let mut r = state.r.row_mut(k);
            for i in 0..n {
                r[i] = (e2 * r[i] + h * rho[i]) * inv;
            }
            let r = state.r.row(k);
            let mut j = state.j.row_mut(k);
            for i in 0..n {
                let dr = (r[(i + 1) % n] - r[(i + n - 1) % n]) / (2.0 * dx);
                j[i] = (e2 * j[i] - h * drive * c[0] * dr) * inv;
            }
        }
    };

    for event in schedule(times, grid.dt) {
        match event {
            Event::Step(h) => step(h, &mut state, &mut lane, &mut rho),
            Event::Emit(t) => {
                density(&state.r, &mut rho);
                snapshots.push(Snapshot1D { t, rho: rho.clone(), state: state.clone() });
            }
        }
    }
    Ok(Solution1D { x, snapshots })
}

struct Solver2D<'a> {
    vel: &'a VelocitySet,
    sq: f64,
    e2: f64,
    drive: f64,
    dx: f64,
    dy: f64,
    lane_x: Lane,
    lane_y: Lane,
}

impl Solver2D<'_> {
    fn sweep_x(&mut self, s: &mut KineticState2D, h: f64) {
        let ratio = h / self.dx;
        for (k, c) in self.vel.coords.iter().enumerate() {
            for (r, j) in [(&mut s.r2, &mut s.j2), (&mut s.r1, &mut s.j1)] {
                let mut r = r.index_axis_mut(Axis(0), k);
                let mut j = j.index_axis_mut(Axis(0), k);
                let lane = &mut self.lane_x;
                let sq = self.sq;
                Zip::from(r.lanes_mut(Axis(0))).and(j.lanes_mut(Axis(0))).for_each(|r, j| lane.transport(r, j, c[0], sq, ratio));
            }
        }
    }

    fn sweep_y(&mut self, s: &mut KineticState2D, h: f64) {
        let ratio = h / self.dy;
        for (k, c) in self.vel.coords.iter().enumerate() {
            for (r, j, a) in [(&mut s.r2, &mut s.j2, c[1]), (&mut s.r1, &mut s.j1, -c[1])] {
                let mut r = r.index_axis_mut(Axis(0), k);
                let mut j = j.index_axis_mut(Axis(0), k);
                let lane = &mut self.lane_y;
                let sq = self.sq;
                Zip::from(r.lanes_mut(Axis(1))).and(j.lanes_mut(Axis(1))).for_each(|r, j| lane.transport(r, j, a, sq, ratio));
            }
        }
    }

    fn density(&self, s: &KineticState2D) -> Array2<f64> {
        let (_, nx, ny) = s.r1.dim();
        let mut rho = Array2::zeros((nx, ny));
        for (k, w) in self.vel.weights.iter().enumerate() {
            rho.scaled_add(0.5 * w, &s.r1.index_axis(Axis(0), k));
            rho.scaled_add(0.5 * w, &s.r2.index_axis(Axis(0), k));
        }
        rho
    }

    fn relax(&self, s: &mut KineticState2D, h: f64) {
        let rho = self.density(s);
        let (e2, inv) = (self.e2, 1.0 / (self.e2 + h));
        let (_, nx, ny) = s.r1.dim();
        for (k, c) in self.vel.coords.iter().enumerate() {
            for (r, j, b) in [(&mut s.r2, &mut s.j2, c[1]), (&mut s.r1, &mut s.j1, -c[1])] {
                let mut r = r.index_axis_mut(Axis(0), k);
                Zip::from(&mut r).and(&rho).for_each(|r, &p| *r = (e2 * *r + h * p) * inv);
                let mut j = j.index_axis_mut(Axis(0), k);
                for ix in 0..nx {
                    let (xm, xp) = ((ix + nx - 1) % nx, (ix + 1) % nx);
                    for iy in 0..ny {
                        let (ym, yp) = ((iy + ny - 1) % ny, (iy + 1) % ny);
                        let drx = (r[[xp, iy]] - r[[xm, iy]]) / (2.0 * self.dx);
                        let dry = (r[[ix, yp]] - r[[ix, ym]]) / (2.0 * self.dy);
                        let g = c[0] * drx + b * dry;
                        j[[ix, iy]] = (e2 * j[[ix, iy]] - h * self.drive * g) * inv;
                    }
                }
            }
        }
    }

    fn step(&mut self, s: &mut KineticState2D, h: f64, splitting: Splitting) {
        match splitting {
            Splitting::Strang => {
                self.sweep_x(s, 0.5 * h);
                self.sweep_y(s, h);
                self.sweep_x(s, 0.5 * h);
            }
            Splitting::Symmetrized => {
                let mut other = s.clone();
                self.sweep_x(s, 0.5 * h);
                self.sweep_y(s, h);
                self.sweep_x(s, 0.5 * h);
                self.sweep_y(&mut other, 0.5 * h);
                self.sweep_x(&mut other, h);
                self.sweep_y(&mut other, 0.5 * h);
                for (a, b) in [(&mut s.r1, &other.r1), (&mut s.r2, &other.r2), (&mut s.j1, &other.j1), (&mut s.j2, &other.j2)] {
                    Zip::from(a).and(b).for_each(|a, &b| *a = 0.5 * (*a + b));
                }
            }
        }
        self.relax(s, h);
    }
}

pub fn solve_kinetic_fd_2d(
    eps: f64,
    grid: &Grid,
    ic: &InitialCondition2D,
    vel: &VelocitySet,
    times: &[f64],
    splitting: Splitting,
) -> Result<Solution2D> {
    validate(eps, grid, vel, 2)?;
    check_times(times, grid.horizon)?;
    let (q, nx, ny) = (vel.len(), grid.nx, grid.ny);
    let (x, y) = (grid.xs(), grid.ys());
    let mut state = KineticState2D {
        r1: Array3::zeros((q, nx, ny)),
        r2: Array3::zeros((q, nx, ny)),
        j1: Array3::zeros((q, nx, ny)),
        j2: Array3::zeros((q, nx, ny)),
    };
    for (k, &[a, b]) in vel.coords.iter().enumerate() {
        for (ix, &xv) in x.iter().enumerate() {
            for (iy, &yv) in y.iter().enumerate() {
                let f_pp = ic.f(xv, yv, a, b);
                let f_mm = ic.f(xv, yv, -a, -b);
                let f_pm = ic.f(xv, yv, a, -b);
                let f_mp = ic.f(xv, yv, -a, b);
                state.r2[[k, ix, iy]] = 0.5 * (f_pp + f_mm);
                state.j2[[k, ix, iy]] = 0.5 * (f_pp - f_mm) / eps;
                state.r1[[k, ix, iy]] = 0.5 * (f_pm + f_mp);
                state.j1[[k, ix, iy]] = 0.5 * (f_pm - f_mp) / eps;
            }
        }
    }

    let mut solver = Solver2D {
        vel,
        sq: phi(eps).sqrt(),
        e2: eps * eps,
        drive: 1.0 - eps * eps * phi(eps),
        dx: grid.dx(),
        dy: grid.dy(),
        lane_x: Lane::new(nx),
        lane_y: Lane::new(ny),
    };
    let mut snapshots = Vec::with_capacity(times.len());
    for event in schedule(times, grid.dt) {
        match event {
            Event::Step(h) => solver.step(&mut state, h, splitting),
            Event::Emit(t) => snapshots.push(Snapshot2D { t, rho: solver.density(&state), state: state.clone() }),
        }
    }
    Ok(Solution2D { x, y, snapshots })
}
