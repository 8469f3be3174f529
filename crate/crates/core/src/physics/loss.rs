//! Batched residuals and the physics-informed loss.
//!
//! Points are processed in chunks, each on its own tape; chunk values and
//! gradients are accumulated in chunk order so the result does not depend on
//! the chunk size beyond rounding, and is bit-reproducible for a fixed one.
//! Velocity integrals use the quadrature weights of the surrogate's
//! [`VelocitySet`], so `(1/|Ω⁺|)∫ dv` becomes `⟨·⟩`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::initial::{initial_fields_1d, initial_fields_2d, InitialCondition1D, InitialCondition2D};
use super::D3Form;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nets::{FieldVars1D, FieldVars2D, SurrogateSet1D, SurrogateSet2D};
use crate::quadrature::VelocitySet;
use crate::sampler::CollocationBatch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 10.0, lambda2: 1.0, lambda3: 1.0, lambda4: 1.0 }
    }
}

/// Loss components. Sub-terms are unweighted means; the three totals carry
/// the `λ` weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub residual: f64,
    pub initial: f64,
    pub boundary: f64,
    /// `mean |d_i|²`, one entry per equation.
    pub residual_terms: Vec<f64>,
    /// `[density mismatch, velocity-resolved mismatch]`.
    pub initial_terms: Vec<f64>,
    /// `[density mismatch, velocity-resolved mismatch]`; zero when periodic.
    pub boundary_terms: Vec<f64>,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.residual + self.initial + self.boundary
    }

    fn from_slots(slots: &[f64], equations: usize, weights: LossWeights) -> Self {
        let residual_terms = slots[..equations].to_vec();
        let initial_terms = slots[equations..equations + 2].to_vec();
        let boundary_terms = slots[equations + 2..equations + 4].to_vec();
        Self {
            residual: residual_terms.iter().sum(),
            initial: weights.lambda1 * initial_terms[0] + weights.lambda2 * initial_terms[1],
            boundary: weights.lambda3 * boundary_terms[0] + weights.lambda4 * boundary_terms[1],
            residual_terms,
            initial_terms,
            boundary_terms,
            weights,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub weights: LossWeights,
    pub d3: D3Form,
    /// Points per tape.
    pub chunk: usize,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self { weights: LossWeights::default(), d3: D3Form::NonStiff, chunk: 64 }
    }
}

/// `(slot, scalar node, mean factor, λ)` contributions of one chunk.
struct Chunk {
    tape: Tape,
    terms: Vec<(usize, Var, f64, f64)>,
}

impl Chunk {
    fn new() -> Self {
        Self { tape: Tape::new(), terms: Vec::new() }
    }

    fn finish(mut self, slots: &mut [f64], grad: Option<&mut [f64]>) -> Result<()> {
        let mut root: Option<Var> = None;
        for &(slot, v, mean, lambda) in &self.terms {
            slots[slot] += mean * self.tape.scalar(v);
            let s = self.tape.scale(v, lambda * mean);
            root = Some(match root {
                None => s,
                Some(r) => self.tape.add(r, s),
            });
        }
        if let (Some(g), Some(r)) = (grad, root) {
            self.tape.accumulate_grad(r, g)?;
        }
        Ok(())
    }
}

fn row(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((1, n), values).expect("row shape")
}

fn sq_sum(tape: &mut Tape, x: Var) -> Var {
    let s = tape.square(x);
    tape.sum(s)
}

fn sq_avg(tape: &mut Tape, xs: &[Var], weights: &[f64]) -> Var {
    let mut acc = tape.square(xs[0]);
    for &x in &xs[1..] {
        let s = tape.square(x);
        acc = tape.add(acc, s);
    }
    tape.sum_cycle(acc, weights)
}

fn diff_const(tape: &mut Tape, x: Var, scale: f64, target: Vec<f64>) -> Var {
    let a = tape.scale(x, scale);
    let b = tape.constant(row(target));
    tape.sub(a, b)
}

fn check_batch(batch: &CollocationBatch, chunk: usize) -> Result<()> {
    if batch.interior.is_empty() || batch.initial.is_empty() {
        return Err(Error::InvalidArgument("empty collocation batch".into()));
    }
    if chunk == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    Ok(())
}

fn prepare_grad(grad: &mut Option<&mut Vec<f64>>, len: usize) {
    if let Some(g) = grad {
        g.clear();
        g.resize(len, 0.0);
    }
}

/// `(d1, d2, d3)` on a tape. `d1` has one column per point, `d2, d3` one
/// per `(point, node)`. Fields need tangent blocks `(∂t, ∂x)`.
pub fn residual_vars_1d(tape: &mut Tape, f: &FieldVars1D, eps: f64, vel: &VelocitySet) -> [Var; 3] {
    let e2 = eps * eps;
    let v = vel.xi();
    let q = v.len();
    let vjx = tape.scale_cycle(f.j[2], &v);
    let avg = tape.group_average(vjx, &vel.weights);
    let d1 = tape.add(f.rho[1], avg);

    let rho_x = tape.repeat(f.rho[2], q);
    let v_rho_x = tape.scale_cycle(rho_x, &v);
    let jt = tape.scale(f.j[1], e2);
    let v_wx = tape.scale_cycle(f.w[2], &v);
    let v_wx = tape.scale(v_wx, e2);
    let d2 = tape.add(jt, v_rho_x);
    let d2 = tape.add(d2, v_wx);
    let d2 = tape.add(d2, f.j[0]);

    let wt = tape.scale(f.w[1], e2);
    let avg_rep = tape.repeat(avg, q);
    let d3 = tape.add(wt, f.w[0]);
    let d3 = tape.add(d3, vjx);
    let d3 = tape.sub(d3, avg_rep);
    [d1, d2, d3]
}

/// `(d1, …, d5)` on a tape. Fields need tangent blocks `(∂t, ∂x, ∂y)`.
pub fn residual_vars_2d(tape: &mut Tape, f: &FieldVars2D, eps: f64, vel: &VelocitySet, form: D3Form) -> [Var; 5] {
    let e2 = eps * eps;
    let xi = vel.xi();
    let eta = vel.eta();
    let q = xi.len();
    let sum = |tape: &mut Tape, b: usize| tape.add(f.j1[b], f.j2[b]);
    let dif = |tape: &mut Tape, b: usize| tape.sub(f.j2[b], f.j1[b]);
    let (s0, st, sx, sy) = (sum(tape, 0), sum(tape, 1), sum(tape, 2), sum(tape, 3));
    let (g0, gt, gx, gy) = (dif(tape, 0), dif(tape, 1), dif(tape, 2), dif(tape, 3));

    let xi_sx = tape.scale_cycle(sx, &xi);
    let eta_gy = tape.scale_cycle(gy, &eta);
    let a = tape.add(xi_sx, eta_gy);
    let avg = tape.group_average(a, &vel.weights);
    let rho_t2 = tape.scale(f.rho[1], 2.0);
    let d1 = tape.add(rho_t2, avg);

    let wt = tape.scale(f.w[1], 2.0 * e2);
    let avg_rep = tape.repeat(avg, q);
    let w2 = tape.scale(f.w[0], 2.0);
    let d2 = tape.add(wt, a);
    let d2 = tape.sub(d2, avg_rep);
    let d2 = tape.add(d2, w2);

    let xi_gx = tape.scale_cycle(gx, &xi);
    let eta_sy = tape.scale_cycle(sy, &eta);
    let flux = tape.add(xi_gx, eta_sy);
    let d3 = match form {
        D3Form::NonStiff => {
            let pt = tape.scale(f.phi[1], e2);
            let fl = tape.scale(flux, e2);
            let d = tape.add(pt, fl);
            tape.add(d, f.phi[0])
        }
        D3Form::Stiff => {
            let p = tape.scale(f.phi[0], 1.0 / e2);
            let d = tape.add(f.phi[1], flux);
            tape.add(d, p)
        }
    };

    let grad_r = |tape: &mut Tape, b: usize| {
        let r = tape.repeat(f.rho[b], q);
        let w = tape.scale(f.w[b], e2);
        tape.add(r, w)
    };
    let rx = grad_r(tape, 2);
    let ry = grad_r(tape, 3);

    let st = tape.scale(st, e2);
    let xr = tape.scale_cycle(rx, &xi);
    let xr = tape.scale(xr, 2.0);
    let ep = tape.scale_cycle(f.phi[3], &eta);
    let d4 = tape.add(st, s0);
    let d4 = tape.add(d4, xr);
    let d4 = tape.add(d4, ep);

    let gt = tape.scale(gt, e2);
    let xp = tape.scale_cycle(f.phi[2], &xi);
    let yr = tape.scale_cycle(ry, &eta);
    let yr = tape.scale(yr, 2.0);
    let d5 = tape.add(gt, g0);
    let d5 = tape.add(d5, xp);
    let d5 = tape.add(d5, yr);
    [d1, d2, d3, d4, d5]
}

/// Total 1D loss over `batch`. With `grad`, the parameter gradient (in
/// [`crate::nets::NetBundle::flat_params`] order) is written there.
pub fn loss_total_1d(
    set: &SurrogateSet1D,
    batch: &CollocationBatch,
    eps: f64,
    ic: &InitialCondition1D,
    opts: &LossOptions,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<LossBreakdown> {
    use crate::nets::NetBundle;
    check_batch(batch, opts.chunk)?;
    prepare_grad(&mut grad, set.param_count());
    let vel = &set.velocities;
    let wts = opts.weights;
    let e2 = eps * eps;
    let mut slots = [0.0; 7];
    let n_int = batch.interior.len() as f64;
    let n_ini = batch.initial.len() as f64;

    for pts in batch.interior.chunks(opts.chunk) {
        let mut c = Chunk::new();
        let tx: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], p[1])).collect();
        let fv = set.record_fields(&mut c.tape, &tx, true)?;
        let [d1, d2, d3] = residual_vars_1d(&mut c.tape, &fv, eps, vel);
        let s1 = sq_sum(&mut c.tape, d1);
        let s2 = sq_avg(&mut c.tape, &[d2], &vel.weights);
        let s3 = sq_avg(&mut c.tape, &[d3], &vel.weights);
        c.terms.extend([(0, s1, 1.0 / n_int, 1.0), (1, s2, 1.0 / n_int, 1.0), (2, s3, 1.0 / n_int, 1.0)]);

        if !set.encoding.is_periodic() {
            let left: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], 0.0)).collect();
            let right: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], 1.0)).collect();
            let l = set.record_fields(&mut c.tape, &left, false)?;
            let r = set.record_fields(&mut c.tape, &right, false)?;
            let dr = c.tape.sub(l.rho[0], r.rho[0]);
            let dj = c.tape.sub(l.j[0], r.j[0]);
            let dw = c.tape.sub(l.w[0], r.w[0]);
            let b0 = sq_sum(&mut c.tape, dr);
            let b1 = sq_avg(&mut c.tape, &[dw, dj], &vel.weights);
            c.terms.extend([(5, b0, 1.0 / n_int, wts.lambda3), (6, b1, 1.0 / n_int, wts.lambda4)]);
        }
        c.finish(&mut slots, grad.as_deref_mut().map(|g| g.as_mut_slice()))?;
    }

    for pts in batch.initial.chunks(opts.chunk) {
        let mut c = Chunk::new();
        let tx: Vec<(f64, f64)> = pts.iter().map(|p| (0.0, p[0])).collect();
        let fv = set.record_fields(&mut c.tape, &tx, false)?;
        let mut rho_ic = Vec::with_capacity(pts.len());
        let mut odd_ic = Vec::with_capacity(pts.len() * vel.len());
        let mut w_ic = Vec::with_capacity(pts.len() * vel.len());
        for p in pts {
            let f = initial_fields_1d(ic, eps, p[0], vel)?;
            w_ic.extend(f.r.iter().map(|r| r - f.rho));
            odd_ic.extend(f.odd);
            rho_ic.push(f.rho);
        }
        let dr = diff_const(&mut c.tape, fv.rho[0], 1.0, rho_ic);
        let dj = diff_const(&mut c.tape, fv.j[0], eps, odd_ic);
        let dw = diff_const(&mut c.tape, fv.w[0], e2, w_ic);
        let i0 = sq_sum(&mut c.tape, dr);
        let i1 = sq_avg(&mut c.tape, &[dj, dw], &vel.weights);
        c.terms.extend([(3, i0, 1.0 / n_ini, wts.lambda1), (4, i1, 1.0 / n_ini, wts.lambda2)]);
        c.finish(&mut slots, grad.as_deref_mut().map(|g| g.as_mut_slice()))?;
    }
    Ok(LossBreakdown::from_slots(&slots, 3, wts))
}

/// Total 2D loss over `batch`; see [`loss_total_1d`].
pub fn loss_total_2d(
    set: &SurrogateSet2D,
    batch: &CollocationBatch,
    eps: f64,
    ic: &InitialCondition2D,
    opts: &LossOptions,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<LossBreakdown> {
    use crate::nets::NetBundle;
    check_batch(batch, opts.chunk)?;
    prepare_grad(&mut grad, set.param_count());
    let vel = &set.velocities;
    let wts = opts.weights;
    let e2 = eps * eps;
    let mut slots = [0.0; 9];
    let n_int = batch.interior.len() as f64;
    let n_ini = batch.initial.len() as f64;

    for pts in batch.interior.chunks(opts.chunk) {
        let mut c = Chunk::new();
        let txy: Vec<(f64, f64, f64)> = pts.iter().map(|p| (p[0], p[1], p[2])).collect();
        let fv = set.record_fields(&mut c.tape, &txy, true)?;
        let d = residual_vars_2d(&mut c.tape, &fv, eps, vel, opts.d3);
        let s1 = sq_sum(&mut c.tape, d[0]);
        c.terms.push((0, s1, 1.0 / n_int, 1.0));
        for (k, &dk) in d.iter().enumerate().skip(1) {
            let s = sq_avg(&mut c.tape, &[dk], &vel.weights);
            c.terms.push((k, s, 1.0 / n_int, 1.0));
        }

        if !set.encoding.is_periodic() {
            let half = 0.5 / n_int;
            let sides: [(Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>); 2] = [
                (pts.iter().map(|p| (p[0], 0.0, p[2])).collect(), pts.iter().map(|p| (p[0], 1.0, p[2])).collect()),
                (pts.iter().map(|p| (p[0], p[1], 0.0)).collect(), pts.iter().map(|p| (p[0], p[1], 1.0)).collect()),
            ];
            for (lo, hi) in &sides {
                let l = set.record_fields(&mut c.tape, lo, false)?;
                let h = set.record_fields(&mut c.tape, hi, false)?;
                let dr = c.tape.sub(l.rho[0], h.rho[0]);
                let dw = c.tape.sub(l.w[0], h.w[0]);
                let dp = c.tape.sub(l.phi[0], h.phi[0]);
                let ls = c.tape.add(l.j1[0], l.j2[0]);
                let hs = c.tape.add(h.j1[0], h.j2[0]);
                let ds = c.tape.sub(ls, hs);
                let lg = c.tape.sub(l.j2[0], l.j1[0]);
                let hg = c.tape.sub(h.j2[0], h.j1[0]);
                let dg = c.tape.sub(lg, hg);
                let b0 = sq_sum(&mut c.tape, dr);
                let b1 = sq_avg(&mut c.tape, &[dw, dp, ds, dg], &vel.weights);
                c.terms.extend([(7, b0, half, wts.lambda3), (8, b1, half, wts.lambda4)]);
            }
        }
        c.finish(&mut slots, grad.as_deref_mut().map(|g| g.as_mut_slice()))?;
    }

    for pts in batch.initial.chunks(opts.chunk) {
        let mut c = Chunk::new();
        let txy: Vec<(f64, f64, f64)> = pts.iter().map(|p| (0.0, p[0], p[1])).collect();
        let fv = set.record_fields(&mut c.tape, &txy, false)?;
        let cap = pts.len() * vel.len();
        let mut rho_ic = Vec::with_capacity(pts.len());
        let (mut w_ic, mut phi_ic, mut s_ic, mut g_ic) =
            (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
        for p in pts {
            let f = initial_fields_2d(ic, eps, p[0], p[1], vel)?;
            w_ic.extend(f.scaled_w());
            phi_ic.extend_from_slice(&f.phi);
            s_ic.extend(f.odd1.iter().zip(&f.odd2).map(|(a, b)| a + b));
            g_ic.extend(f.odd1.iter().zip(&f.odd2).map(|(a, b)| b - a));
            rho_ic.push(f.rho);
        }
        let dr = diff_const(&mut c.tape, fv.rho[0], 1.0, rho_ic);
        let dw = diff_const(&mut c.tape, fv.w[0], e2, w_ic);
        let dp = diff_const(&mut c.tape, fv.phi[0], 1.0, phi_ic);
        let s = c.tape.add(fv.j1[0], fv.j2[0]);
        let g = c.tape.sub(fv.j2[0], fv.j1[0]);
        let ds = diff_const(&mut c.tape, s, eps, s_ic);
        let dg = diff_const(&mut c.tape, g, eps, g_ic);
        let i0 = sq_sum(&mut c.tape, dr);
        let i1 = sq_avg(&mut c.tape, &[dw, dp, ds, dg], &vel.weights);
        c.terms.extend([(5, i0, 1.0 / n_ini, wts.lambda1), (6, i1, 1.0 / n_ini, wts.lambda2)]);
        c.finish(&mut slots, grad.as_deref_mut().map(|g| g.as_mut_slice()))?;
    }
    Ok(LossBreakdown::from_slots(&slots, 5, wts))
}
