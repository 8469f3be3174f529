//! Structure-preserving surrogate sets.
//!
//! Each unknown of the parity system has its own [`AdaptiveResNet`]. The raw
//! outputs are wrapped so that the symmetries of the unknowns hold exactly:
//! fluxes are odd under velocity reversal, the correction `w` is even with
//! zero velocity average, and the density goes through softplus.
//!
//! The wrappers are evaluated in a fixed pairing order (`(a + b) - (c + d)`)
//! so the symmetry identities hold bit for bit, not just to rounding.

use rand::Rng;

use super::encoding::InputEncoding;
use super::resnet::{AdaptiveResNet, ResNetShape};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::physics::{Jet, ParityFields1D, ParityFields2D};
use crate::quadrature::VelocitySet;

/// Common parameter plumbing for a bundle of sub-networks.
pub trait NetBundle {
    fn nets(&self) -> Vec<&AdaptiveResNet>;
    fn nets_mut(&mut self) -> Vec<&mut AdaptiveResNet>;
    /// Checkpoint prefixes, one per sub-network.
    fn names(&self) -> &'static [&'static str];

    fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.params().len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.nets()
            .iter()
            .map(|n| {
                let o = acc;
                acc += n.params().len();
                o
            })
            .collect()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.nets().iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let mut start = 0;
        for net in self.nets_mut() {
            let n = net.params().len();
            net.params_mut().copy_from_slice(&flat[start..start + n]);
            start += n;
        }
        Ok(())
    }

    /// Flat indices of every `β`.
    fn beta_indices(&self) -> Vec<usize> {
        self.nets().iter().zip(self.offsets()).flat_map(|(n, o)| n.beta_offsets().into_iter().map(move |b| b + o)).collect()
    }
}

/// Sub-network sizing shared by both dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub width: usize,
    pub blocks: usize,
    pub encoding: InputEncoding,
}

/// Records one sub-network over `patterns × points × velocities` columns.
/// Returns the raw output node and the column count of one pattern.
fn record_velocity_net(
    tape: &mut Tape,
    net: &AdaptiveResNet,
    base: usize,
    encoding: &InputEncoding,
    points: &[(f64, [f64; 2])],
    spatial_dims: usize,
    patterns: &[Vec<Vec<f64>>],
    tangents: bool,
) -> Result<(Var, usize)> {
    let vdim = patterns[0][0].len();
    let mut samples: Vec<(f64, &[f64], &[f64])> = Vec::with_capacity(patterns.len() * points.len() * patterns[0].len());
    for pat in patterns {
        for (t, xs) in points {
            for vel in pat {
                samples.push((*t, &xs[..spatial_dims], vel.as_slice()));
            }
        }
    }
    let per_pattern = points.len() * patterns[0].len();
    let input = encoding.encode(&samples, spatial_dims, vdim, tangents);
    let k = if tangents { 1 + spatial_dims } else { 0 };
    let x = tape.input(input, k);
    Ok((net.record(tape, base, x)?, per_pattern))
}

fn record_point_net(
    tape: &mut Tape,
    net: &AdaptiveResNet,
    base: usize,
    encoding: &InputEncoding,
    points: &[(f64, [f64; 2])],
    spatial_dims: usize,
    tangents: bool,
) -> Result<Var> {
    let samples: Vec<(f64, &[f64], &[f64])> = points.iter().map(|(t, xs)| (*t, &xs[..spatial_dims], &[][..])).collect();
    let input = encoding.encode(&samples, spatial_dims, 0, tangents);
    let k = if tangents { 1 + spatial_dims } else { 0 };
    let x = tape.input(input, k);
    net.record(tape, base, x)
}

/// Slices pattern `s` of tangent block `b` out of a velocity-net output.
fn pattern(tape: &mut Tape, out: Var, patterns: usize, per_pattern: usize, b: usize, s: usize) -> Var {
    let start = b * patterns * per_pattern + s * per_pattern;
    tape.slice_cols(out, start, per_pattern)
}

/// Batched wrapped fields on a tape. Index 0 of every vector is the value,
/// then `∂t`, `∂x` (and `∂y` in 2D) when tangents were requested. Velocity
/// fields have `points × nodes` columns, point-major.
#[derive(Clone, Debug)]
pub struct FieldVars1D {
    pub rho: Vec<Var>,
    pub j: Vec<Var>,
    pub w: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct FieldVars2D {
    pub rho: Vec<Var>,
    pub phi: Vec<Var>,
    pub j1: Vec<Var>,
    pub j2: Vec<Var>,
    pub w: Vec<Var>,
}

fn blocks(tangents: bool, spatial_dims: usize) -> usize {
    if tangents {
        2 + spatial_dims
    } else {
        1
    }
}

fn jet_from(values: &[f64]) -> Jet {
    Jet {
        value: values[0],
        dt: values.get(1).copied().unwrap_or(0.0),
        dx: values.get(2).copied().unwrap_or(0.0),
        dy: values.get(3).copied().unwrap_or(0.0),
    }
}

/// `(ρ_θ, j_θ, w_θ)` for the slab problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateSet1D {
    pub rho: AdaptiveResNet,
    pub j: AdaptiveResNet,
    pub w: AdaptiveResNet,
    pub epsilon: f64,
    pub encoding: InputEncoding,
    pub velocities: VelocitySet,
}

impl NetBundle for SurrogateSet1D {
    fn nets(&self) -> Vec<&AdaptiveResNet> {
        vec![&self.rho, &self.j, &self.w]
    }

    fn nets_mut(&mut self) -> Vec<&mut AdaptiveResNet> {
        vec![&mut self.rho, &mut self.j, &mut self.w]
    }

    fn names(&self) -> &'static [&'static str] {
        &["rho", "j", "w"]
    }
}

impl SurrogateSet1D {
    pub fn new<R: Rng + ?Sized>(cfg: SurrogateConfig, epsilon: f64, velocities: VelocitySet, rng: &mut R) -> Result<Self> {
        let enc = cfg.encoding;
        let point_shape = ResNetShape::new(enc.feature_dim(1, 0), cfg.width, cfg.blocks, 1)?;
        let vel_shape = ResNetShape::new(enc.feature_dim(1, 1), cfg.width, cfg.blocks, 1)?;
        Ok(Self {
            rho: AdaptiveResNet::xavier(point_shape, rng),
            j: AdaptiveResNet::xavier(vel_shape, rng),
            w: AdaptiveResNet::xavier(vel_shape, rng),
            epsilon,
            encoding: enc,
            velocities,
        })
    }

    /// Wrapped fields at `(t, x)` for every point and every velocity node.
    pub fn record_fields(&self, tape: &mut Tape, points: &[(f64, f64)], tangents: bool) -> Result<FieldVars1D> {
        let pts: Vec<(f64, [f64; 2])> = points.iter().map(|&(t, x)| (t, [x, 0.0])).collect();
        let offs = self.offsets();
        let q = self.velocities.len();
        let nodes = self.velocities.xi();
        let plus: Vec<Vec<f64>> = nodes.iter().map(|&v| vec![v]).collect();
        let minus: Vec<Vec<f64>> = nodes.iter().map(|&v| vec![-v]).collect();
        let patterns = vec![plus, minus];
        let weights = &self.velocities.weights;
        let nb = blocks(tangents, 1);

        let rho_raw = record_point_net(tape, &self.rho, offs[0], &self.encoding, &pts, 1, tangents)?;
        let rho_sp = tape.softplus(rho_raw);
        let rho = (0..nb).map(|b| tape.block(rho_sp, b)).collect();

        let (j_raw, per) = record_velocity_net(tape, &self.j, offs[1], &self.encoding, &pts, 1, &patterns, tangents)?;
        let j = (0..nb)
            .map(|b| {
                let p = pattern(tape, j_raw, 2, per, b, 0);
                let m = pattern(tape, j_raw, 2, per, b, 1);
                let d = tape.sub(p, m);
                tape.scale(d, 0.5)
            })
            .collect();

        let (w_raw, per) = record_velocity_net(tape, &self.w, offs[2], &self.encoding, &pts, 1, &patterns, tangents)?;
        let w = (0..nb)
            .map(|b| {
                let p = pattern(tape, w_raw, 2, per, b, 0);
                let m = pattern(tape, w_raw, 2, per, b, 1);
                let ap = tape.group_average(p, weights);
                let am = tape.group_average(m, weights);
                let sum = tape.add(p, m);
                let avg = tape.add(ap, am);
                let avg = tape.repeat(avg, q);
                let d = tape.sub(sum, avg);
                tape.scale(d, 0.5)
            })
            .collect();
        Ok(FieldVars1D { rho, j, w })
    }

    /// Wrapped fields with `(∂t, ∂x)` at `(t, x, +v)` and `(t, x, −v)`, from
    /// one paired evaluation. `v` may be any velocity; the zero-mean shift of
    /// `w` uses the set's quadrature nodes.
    pub fn wrap(&self, t: f64, x: f64, v: f64) -> Result<[ParityFields1D; 2]> {
        let pts = [(t, [x, 0.0])];
        let offs = self.offsets();
        let nodes = self.velocities.xi();
        let mut tape = Tape::new();

        let rho_raw = record_point_net(&mut tape, &self.rho, offs[0], &self.encoding, &pts, 1, true)?;
        let rho_sp = tape.softplus(rho_raw);
        let rho = jet_from(&tape.value(rho_sp).row(0).to_vec());

        let pm = vec![vec![vec![v]], vec![vec![-v]]];
        let (j_raw, _) = record_velocity_net(&mut tape, &self.j, offs[1], &self.encoding, &pts, 1, &pm, true)?;
        let jv = tape.value(j_raw).row(0).to_vec();
        // Columns per block: [+v, -v].
        let jp: Vec<f64> = (0..3).map(|b| 0.5 * (jv[2 * b] - jv[2 * b + 1])).collect();
        let jm: Vec<f64> = (0..3).map(|b| 0.5 * (jv[2 * b + 1] - jv[2 * b])).collect();

        let mut plus = vec![vec![v]];
        let mut minus = vec![vec![-v]];
        plus.extend(nodes.iter().map(|&u| vec![u]));
        minus.extend(nodes.iter().map(|&u| vec![-u]));
        let (w_raw, per) = record_velocity_net(&mut tape, &self.w, offs[2], &self.encoding, &pts, 1, &[plus, minus], true)?;
        let wv = tape.value(w_raw).row(0).to_vec();
        let q = nodes.len();
        let mut wp = vec![0.0; 3];
        let mut wm = vec![0.0; 3];
        for b in 0..3 {
            let at = |s: usize, i: usize| wv[b * 2 * per + s * per + i];
            let avg = |s: usize| (0..q).map(|i| self.velocities.weights[i] * at(s, 1 + i)).sum::<f64>();
            let (np, nm) = (at(0, 0), at(1, 0));
            let (ap, am) = (avg(0), avg(1));
            wp[b] = 0.5 * ((np + nm) - (ap + am));
            wm[b] = 0.5 * ((nm + np) - (am + ap));
        }
        Ok([ParityFields1D { rho, j: jet_from(&jp), w: jet_from(&wp) }, ParityFields1D { rho, j: jet_from(&jm), w: jet_from(&wm) }])
    }

    /// `ρ_θ(t, x)` at many points, no derivatives.
    pub fn density(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        let pts: Vec<(f64, [f64; 2])> = points.iter().map(|&(t, x)| (t, [x, 0.0])).collect();
        let mut tape = Tape::new();
        let raw = record_point_net(&mut tape, &self.rho, 0, &self.encoding, &pts, 1, false)?;
        let sp = tape.softplus(raw);
        Ok(tape.value(sp).row(0).to_vec())
    }
}

/// Sign patterns applied to a node `(ξ, η)`, in wrapper order.
pub const SIGN_PATTERNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0)];

/// `(ρ_θ, φ_θ, j1_θ, j2_θ, w_θ)` for the planar problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateSet2D {
    pub rho: AdaptiveResNet,
    pub phi: AdaptiveResNet,
    pub j1: AdaptiveResNet,
    pub j2: AdaptiveResNet,
    pub w: AdaptiveResNet,
    pub epsilon: f64,
    pub encoding: InputEncoding,
    pub velocities: VelocitySet,
}

impl NetBundle for SurrogateSet2D {
    fn nets(&self) -> Vec<&AdaptiveResNet> {
        vec![&self.rho, &self.phi, &self.j1, &self.j2, &self.w]
    }

    fn nets_mut(&mut self) -> Vec<&mut AdaptiveResNet> {
        vec![&mut self.rho, &mut self.phi, &mut self.j1, &mut self.j2, &mut self.w]
    }

    fn names(&self) -> &'static [&'static str] {
        &["rho", "phi", "j1", "j2", "w"]
    }
}

fn signed(nodes: &[[f64; 2]], sx: f64, sy: f64) -> Vec<Vec<f64>> {
    nodes.iter().map(|c| vec![sx * c[0], sy * c[1]]).collect()
}

impl SurrogateSet2D {
    pub fn new<R: Rng + ?Sized>(cfg: SurrogateConfig, epsilon: f64, velocities: VelocitySet, rng: &mut R) -> Result<Self> {
        let enc = cfg.encoding;
        let point_shape = ResNetShape::new(enc.feature_dim(2, 0), cfg.width, cfg.blocks, 1)?;
        let vel_shape = ResNetShape::new(enc.feature_dim(2, 2), cfg.width, cfg.blocks, 1)?;
        Ok(Self {
            rho: AdaptiveResNet::xavier(point_shape, rng),
            phi: AdaptiveResNet::xavier(vel_shape, rng),
            j1: AdaptiveResNet::xavier(vel_shape, rng),
            j2: AdaptiveResNet::xavier(vel_shape, rng),
            w: AdaptiveResNet::xavier(vel_shape, rng),
            epsilon,
            encoding: enc,
            velocities,
        })
    }

    pub fn record_fields(&self, tape: &mut Tape, points: &[(f64, f64, f64)], tangents: bool) -> Result<FieldVars2D> {
        let pts: Vec<(f64, [f64; 2])> = points.iter().map(|&(t, x, y)| (t, [x, y])).collect();
        let offs = self.offsets();
        let q = self.velocities.len();
        let nodes = &self.velocities.coords;
        let weights = &self.velocities.weights;
        let nb = blocks(tangents, 2);
        let four: Vec<Vec<Vec<f64>>> = SIGN_PATTERNS.iter().map(|&(a, b)| signed(nodes, a, b)).collect();

        let rho_raw = record_point_net(tape, &self.rho, offs[0], &self.encoding, &pts, 2, tangents)?;
        let rho_sp = tape.softplus(rho_raw);
        let rho = (0..nb).map(|b| tape.block(rho_sp, b)).collect();

        let (phi_raw, per) = record_velocity_net(tape, &self.phi, offs[1], &self.encoding, &pts, 2, &four, tangents)?;
        let phi = (0..nb)
            .map(|b| {
                let p: Vec<Var> = (0..4).map(|s| pattern(tape, phi_raw, 4, per, b, s)).collect();
                let even = tape.add(p[0], p[1]);
                let odd = tape.add(p[2], p[3]);
                let d = tape.sub(even, odd);
                tape.scale(d, 0.5)
            })
            .collect();

        let j1_pats = vec![signed(nodes, 1.0, -1.0), signed(nodes, -1.0, 1.0)];
        let (j1_raw, per) = record_velocity_net(tape, &self.j1, offs[2], &self.encoding, &pts, 2, &j1_pats, tangents)?;
        let j1 = (0..nb)
            .map(|b| {
                let a = pattern(tape, j1_raw, 2, per, b, 0);
                let c = pattern(tape, j1_raw, 2, per, b, 1);
                let d = tape.sub(a, c);
                tape.scale(d, 0.5)
            })
            .collect();

        let j2_pats = vec![signed(nodes, 1.0, 1.0), signed(nodes, -1.0, -1.0)];
        let (j2_raw, per) = record_velocity_net(tape, &self.j2, offs[3], &self.encoding, &pts, 2, &j2_pats, tangents)?;
        let j2 = (0..nb)
            .map(|b| {
                let a = pattern(tape, j2_raw, 2, per, b, 0);
                let c = pattern(tape, j2_raw, 2, per, b, 1);
                let d = tape.sub(a, c);
                tape.scale(d, 0.5)
            })
            .collect();

        let (w_raw, per) = record_velocity_net(tape, &self.w, offs[4], &self.encoding, &pts, 2, &four, tangents)?;
        let w = (0..nb)
            .map(|b| {
                let p: Vec<Var> = (0..4).map(|s| pattern(tape, w_raw, 4, per, b, s)).collect();
                let a: Vec<Var> = p.iter().map(|&pv| tape.group_average(pv, weights)).collect();
                let s01 = tape.add(p[0], p[1]);
                let s23 = tape.add(p[2], p[3]);
                let sum = tape.add(s01, s23);
                let a01 = tape.add(a[0], a[1]);
                let a23 = tape.add(a[2], a[3]);
                let avg = tape.add(a01, a23);
                let avg = tape.repeat(avg, q);
                let d = tape.sub(sum, avg);
                tape.scale(d, 0.5)
            })
            .collect();
        Ok(FieldVars2D { rho, phi, j1, j2, w })
    }

    /// Wrapped fields with `(∂t, ∂x, ∂y)` at the four sign patterns of
    /// `(ξ, η)`, in [`SIGN_PATTERNS`] order, from one paired evaluation.
    pub fn wrap(&self, t: f64, x: f64, y: f64, xi: f64, eta: f64) -> Result<[ParityFields2D; 4]> {
        let pts = [(t, [x, y])];
        let offs = self.offsets();
        let mut tape = Tape::new();
        let nb = 4;

        let rho_raw = record_point_net(&mut tape, &self.rho, offs[0], &self.encoding, &pts, 2, true)?;
        let rho_sp = tape.softplus(rho_raw);
        let rho = jet_from(&tape.value(rho_sp).row(0).to_vec());

        // Raw outputs at the four patterns, per tangent block.
        let eval4 = |tape: &mut Tape, net: &AdaptiveResNet, base: usize, extra: &[[f64; 2]]| -> Result<(Vec<[f64; 4]>, Vec<[f64; 4]>)> {
            let mut coords = vec![[xi, eta]];
            coords.extend_from_slice(extra);
            let pats: Vec<Vec<Vec<f64>>> = SIGN_PATTERNS.iter().map(|&(a, b)| signed(&coords, a, b)).collect();
            let (out, per) = record_velocity_net(tape, net, base, &self.encoding, &pts, 2, &pats, true)?;
            let v = tape.value(out).row(0).to_vec();
            let mut at_point = vec![[0.0; 4]; nb];
            let mut avgs = vec![[0.0; 4]; nb];
            for b in 0..nb {
                for s in 0..4 {
                    let base_col = b * 4 * per + s * per;
                    at_point[b][s] = v[base_col];
                    avgs[b][s] = (0..extra.len()).map(|i| self.velocities.weights[i] * v[base_col + 1 + i]).sum();
                }
            }
            Ok((at_point, avgs))
        };

        let (phi_n, _) = eval4(&mut tape, &self.phi, offs[1], &[])?;
        let (j1_n, _) = eval4(&mut tape, &self.j1, offs[2], &[])?;
        let (j2_n, _) = eval4(&mut tape, &self.j2, offs[3], &[])?;
        let (w_n, w_a) = eval4(&mut tape, &self.w, offs[4], &self.velocities.coords)?;

        // Pattern index of (σξ, τη) composed with each base pattern.
        let compose = |base: usize, s: usize| -> usize {
            let (a, b) = SIGN_PATTERNS[base];
            let (c, d) = SIGN_PATTERNS[s];
            SIGN_PATTERNS.iter().position(|&(e, f)| e == a * c && f == b * d).unwrap()
        };
        let mut out = [ParityFields2D::default(); 4];
        for (base, slot) in out.iter_mut().enumerate() {
            let idx = |s: usize| compose(base, s);
            let mut phi = [0.0; 4];
            let mut j1 = [0.0; 4];
            let mut j2 = [0.0; 4];
            let mut w = [0.0; 4];
            for b in 0..nb {
                let n = &phi_n[b];
                phi[b] = 0.5 * ((n[idx(0)] + n[idx(1)]) - (n[idx(2)] + n[idx(3)]));
                // j1 pairs (ξ, −η) with (−ξ, η); j2 pairs (ξ, η) with (−ξ, −η).
                j1[b] = 0.5 * (j1_n[b][idx(3)] - j1_n[b][idx(2)]);
                j2[b] = 0.5 * (j2_n[b][idx(0)] - j2_n[b][idx(1)]);
                let (wn, wa) = (&w_n[b], &w_a[b]);
                let sum = (wn[idx(0)] + wn[idx(1)]) + (wn[idx(2)] + wn[idx(3)]);
                let avg = (wa[idx(0)] + wa[idx(1)]) + (wa[idx(2)] + wa[idx(3)]);
                w[b] = 0.5 * (sum - avg);
            }
            *slot = ParityFields2D { rho, phi: jet_from(&phi), j1: jet_from(&j1), j2: jet_from(&j2), w: jet_from(&w) };
        }
        Ok(out)
    }

    pub fn density(&self, points: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
        let pts: Vec<(f64, [f64; 2])> = points.iter().map(|&(t, x, y)| (t, [x, y])).collect();
        let mut tape = Tape::new();
        let raw = record_point_net(&mut tape, &self.rho, 0, &self.encoding, &pts, 2, false)?;
        let sp = tape.softplus(raw);
        Ok(tape.value(sp).row(0).to_vec())
    }
}

/// Values of a `1 × n` node as a vector.
pub fn row(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).row(0).to_vec()
}
