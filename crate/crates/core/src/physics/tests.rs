use std::f64::consts::{PI, TAU};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::Tape;
use crate::nets::{row, InputEncoding, NetBundle, SurrogateConfig, SurrogateSet1D, SurrogateSet2D};
use crate::quadrature::VelocitySet;
use crate::sampler::{sample_batch, SamplerConfig};

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

fn set_1d(seed: u64, width: usize, encoding: InputEncoding, q: usize) -> SurrogateSet1D {
    let cfg = SurrogateConfig { width, blocks: 2, encoding };
    SurrogateSet1D::new(cfg, 0.5, VelocitySet::slab(q).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn set_2d(seed: u64, width: usize, encoding: InputEncoding, q: usize) -> SurrogateSet2D {
    let cfg = SurrogateConfig { width, blocks: 2, encoding };
    SurrogateSet2D::new(cfg, 0.5, VelocitySet::quarter_circle(q).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn jet(value: f64, dt: f64, dx: f64, dy: f64) -> Jet {
    Jet { value, dt, dx, dy }
}

#[test]
fn constant_state_has_zero_residuals() {
    let f = ParityFields1D { rho: Jet::constant(2.5), ..Default::default() };
    assert_eq!(residuals_1d(&f, 0.3, 0.7, 0.0), [0.0; 3]);
    let g = ParityFields2D { rho: Jet::constant(1.5), ..Default::default() };
    for form in [D3Form::NonStiff, D3Form::Stiff] {
        assert_eq!(residuals_2d(&g, 0.3, 0.6, 0.8, 0.0, form), [0.0; 5]);
    }
}

#[test]
fn diffusion_limit_leaves_only_order_eps2_terms_1d() {
    let eps: f64 = 1e-3;
    let e2 = eps * eps;
    let k = 2.0 * TAU;
    let lam = k * k / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (t, x, v) = (rng.gen::<f64>() * 0.1, rng.gen::<f64>(), rng.gen::<f64>());
        let d = (-lam * t).exp();
        let rho = |tt: f64| (k * x).cos() * (-lam * tt).exp();
        let rho_x = -k * (k * x).sin() * d;
        let rho_xx = -k * k * rho(t);
        let rho_xxx = k * k * k * (k * x).sin() * d;
        let f = ParityFields1D {
            rho: jet(rho(t), -lam * rho(t), rho_x, 0.0),
            j: jet(-v * rho_x, lam * v * rho_x, -v * rho_xx, 0.0),
            w: jet((v * v - 1.0 / 3.0) * rho_xx, -lam * (v * v - 1.0 / 3.0) * rho_xx, (v * v - 1.0 / 3.0) * rho_xxx, 0.0),
        };
        let avg = -rho_xx / 3.0;
        let r = residuals_1d(&f, eps, v, avg);
        let scale = rho_xx.abs().max(1.0);
        assert!(r[0].abs() <= 1e-12 * scale);
        assert!((r[1] - e2 * (f.j.dt + v * f.w.dx)).abs() <= 1e-12 * scale);
        assert!((r[2] - e2 * f.w.dt).abs() <= 1e-12 * scale);
        // The leftovers are ε² times third derivatives of cos 4πx.
        for ri in r {
            assert!(ri.abs() <= e2 * 2.0 * k.powi(3), "{ri}");
        }
    }
}

#[test]
fn diffusion_limit_leaves_only_order_eps2_terms_2d() {
    let eps: f64 = 1e-3;
    let e2 = eps * eps;
    let k = TAU;
    let lam = k * k / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let (t, x) = (rng.gen::<f64>() * 0.1, rng.gen::<f64>());
        let th = rng.gen::<f64>() * PI / 2.0;
        let (xi, eta) = (th.cos(), th.sin());
        let d = (-lam * t).exp();
        let rho = (k * x).cos() * d;
        let rho_x = -k * (k * x).sin() * d;
        let rho_xx = -k * k * rho;
        let rho_xxx = k * k * k * (k * x).sin() * d;
        // j1 + j2 = −2ξρx, j2 − j1 = −2ηρy = 0.
        let s = jet(-2.0 * xi * rho_x, 2.0 * lam * xi * rho_x, -2.0 * xi * rho_xx, 0.0);
        let j2 = jet(0.5 * s.value, 0.5 * s.dt, 0.5 * s.dx, 0.0);
        let c = xi * xi - 0.5;
        let f = ParityFields2D {
            rho: jet(rho, -lam * rho, rho_x, 0.0),
            phi: Jet::default(),
            j1: j2,
            j2,
            w: jet(c * rho_xx, -lam * c * rho_xx, c * rho_xxx, 0.0),
        };
        let avg = -rho_xx;
        let r = residuals_2d(&f, eps, xi, eta, avg, D3Form::NonStiff);
        let scale = rho_xx.abs().max(1.0);
        assert!(r[0].abs() <= 1e-12 * scale);
        assert!((r[1] - 2.0 * e2 * f.w.dt).abs() <= 1e-12 * scale);
        assert_eq!(r[2], 0.0);
        assert!((r[3] - e2 * (s.dt + 2.0 * xi * f.w.dx)).abs() <= 1e-12 * scale);
        assert!(r[4].abs() <= 1e-12 * scale);
        for ri in r {
            assert!(ri.abs() <= e2 * 4.0 * k.powi(3), "{ri}");
        }
    }
}

/// Closed-form manufactured fields with partials taken by central
/// differences.
fn fd_jet(g: &dyn Fn(f64, f64, f64) -> f64, t: f64, x: f64, y: f64) -> Jet {
    let h = 1e-5;
    Jet {
        value: g(t, x, y),
        dt: (g(t + h, x, y) - g(t - h, x, y)) / (2.0 * h),
        dx: (g(t, x + h, y) - g(t, x - h, y)) / (2.0 * h),
        dy: (g(t, x, y + h) - g(t, x, y - h)) / (2.0 * h),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn residuals_match_finite_difference_oracle_1d() {
    let vel = VelocitySet::slab(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let (t, x, eps) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen_range(0.05..1.0));
        let rho = move |t: f64, x: f64, _: f64| 2.0 + c[0] * (TAU * x + t).sin();
        let j =
            move |v: f64| move |t: f64, x: f64, _: f64| v * c[1] * (TAU * x).cos() * (-t).exp() + v.powi(3) * c[2] * (2.0 * TAU * x).sin();
        let w = move |v: f64| move |t: f64, x: f64, _: f64| (v * v - 1.0 / 3.0) * (c[3] * (TAU * x).cos() + c[4] * t * x);
        // Symbolic partials.
        let sym_j = |v: f64| {
            let vv = v * c[1] * (TAU * x).cos() * (-t).exp();
            jet(
                vv + v.powi(3) * c[2] * (2.0 * TAU * x).sin(),
                -vv,
                -v * c[1] * TAU * (TAU * x).sin() * (-t).exp() + v.powi(3) * c[2] * 2.0 * TAU * (2.0 * TAU * x).cos(),
                0.0,
            )
        };
        let sym_w = |v: f64| {
            let a = v * v - 1.0 / 3.0;
            jet(a * (c[3] * (TAU * x).cos() + c[4] * t * x), a * c[4] * x, a * (-c[3] * TAU * (TAU * x).sin() + c[4] * t), 0.0)
        };
        let sym_rho = jet(rho(t, x, 0.0), c[0] * (TAU * x + t).cos(), c[0] * TAU * (TAU * x + t).cos(), 0.0);
        let nodes = vel.xi();
        let avg_sym = vel.average(&nodes.iter().map(|&v| v * sym_j(v).dx).collect::<Vec<_>>()).unwrap();
        let avg_fd = vel.average(&nodes.iter().map(|&v| v * fd_jet(&j(v), t, x, 0.0).dx).collect::<Vec<_>>()).unwrap();
        for &v in &nodes {
            let sym = ParityFields1D { rho: sym_rho, j: sym_j(v), w: sym_w(v) };
            let fd = ParityFields1D { rho: fd_jet(&rho, t, x, 0.0), j: fd_jet(&j(v), t, x, 0.0), w: fd_jet(&w(v), t, x, 0.0) };
            let a = residuals_1d(&sym, eps, v, avg_sym);
            let b = residuals_1d(&fd, eps, v, avg_fd);
            for (p, q) in a.iter().zip(b) {
                assert!(rel_close(*p, q, 1e-6), "{p} vs {q}");
            }
        }
    }
}

#[test]
fn residuals_match_finite_difference_oracle_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let c: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let (t, x, y, eps) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen_range(0.05..1.0));
        let th = rng.gen::<f64>() * PI / 2.0;
        let (xi, eta) = (th.cos(), th.sin());
        let g = |a: f64, b: f64, kx: f64, ky: f64| move |t: f64, x: f64, y: f64| a * (TAU * kx * x + TAU * ky * y + b * t).sin();
        let fields =
            [g(c[0], c[1], 1.0, 0.0), g(c[2], c[3], 1.0, 1.0), g(c[4], c[5], 0.0, 2.0), g(c[6], c[7], 2.0, 1.0), g(c[1], c[6], 1.0, 2.0)];
        let sym = |i: usize, a: f64, b: f64, kx: f64, ky: f64| {
            let _ = i;
            let arg = TAU * kx * x + TAU * ky * y + b * t;
            jet(a * arg.sin(), a * b * arg.cos(), a * TAU * kx * arg.cos(), a * TAU * ky * arg.cos())
        };
        let params =
            [(c[0], c[1], 1.0, 0.0), (c[2], c[3], 1.0, 1.0), (c[4], c[5], 0.0, 2.0), (c[6], c[7], 2.0, 1.0), (c[1], c[6], 1.0, 2.0)];
        let sj: Vec<Jet> = params.iter().enumerate().map(|(i, &(a, b, kx, ky))| sym(i, a, b, kx, ky)).collect();
        let fj: Vec<Jet> = fields.iter().map(|f| fd_jet(f, t, x, y)).collect();
        let mk = |j: &[Jet]| ParityFields2D { rho: j[0], phi: j[1], j1: j[2], j2: j[3], w: j[4] };
        let (a, b) = (mk(&sj), mk(&fj));
        for form in [D3Form::NonStiff, D3Form::Stiff] {
            let ra = residuals_2d(&a, eps, xi, eta, 0.3, form);
            let rb = residuals_2d(&b, eps, xi, eta, 0.3, form);
            for (p, q) in ra.iter().zip(rb) {
                assert!(rel_close(*p, q, 1e-6), "{p} vs {q}");
            }
        }
    }
}

#[test]
fn mass_is_conserved_when_continuity_holds() {
    let vel = VelocitySet::slab(16).unwrap();
    let n = 64;
    for t in [0.0f64, 0.3, 1.7] {
        let mut total = 0.0;
        for i in 0..n {
            let x = i as f64 / n as f64;
            let vjx: Vec<f64> = vel
                .xi()
                .iter()
                .map(|&v| {
                    let jx = v * TAU * (TAU * x).cos() * (-t).exp() - v.powi(3) * 2.0 * TAU * (2.0 * TAU * x).sin();
                    v * jx
                })
                .collect();
            // d1 = 0 fixes ∂tρ = −⟨v∂x j⟩.
            total -= vel.average(&vjx).unwrap() / n as f64;
        }
        assert!(total.abs() <= 1e-10, "{total}");
    }
}

#[test]
fn tape_residuals_agree_with_pointwise_wrappers_1d() {
    let set = set_1d(5, 6, InputEncoding::periodic(2), 4);
    let pts = [(0.03, 0.2), (0.07, 0.61)];
    let eps = 0.3;
    let mut tape = Tape::new();
    let fv = set.record_fields(&mut tape, &pts, true).unwrap();
    let d = residual_vars_1d(&mut tape, &fv, eps, &set.velocities);
    let d1 = row(&tape, d[0]);
    let d2 = row(&tape, d[1]);
    let d3 = row(&tape, d[2]);
    let nodes = set.velocities.xi();
    for (p, &(t, x)) in pts.iter().enumerate() {
        let pf: Vec<ParityFields1D> = nodes.iter().map(|&v| set.wrap(t, x, v).unwrap()[0]).collect();
        let avg = set.velocities.average(&pf.iter().zip(&nodes).map(|(f, v)| v * f.j.dx).collect::<Vec<_>>()).unwrap();
        for (i, &v) in nodes.iter().enumerate() {
            let r = residuals_1d(&pf[i], eps, v, avg);
            assert_abs_diff_eq!(r[0], d1[p], epsilon = 1e-12);
            assert_abs_diff_eq!(r[1], d2[p * nodes.len() + i], epsilon = 1e-12);
            assert_abs_diff_eq!(r[2], d3[p * nodes.len() + i], epsilon = 1e-12);
        }
    }
}

#[test]
fn tape_residuals_agree_with_pointwise_wrappers_2d() {
    let set = set_2d(6, 5, InputEncoding::periodic(1), 3);
    let pts = [(0.03, 0.2, 0.9), (0.07, 0.61, 0.35)];
    let eps = 0.4;
    for form in [D3Form::NonStiff, D3Form::Stiff] {
        let mut tape = Tape::new();
        let fv = set.record_fields(&mut tape, &pts, true).unwrap();
        let d = residual_vars_2d(&mut tape, &fv, eps, &set.velocities, form);
        let rows: Vec<Vec<f64>> = d.iter().map(|&v| row(&tape, v)).collect();
        let q = set.velocities.len();
        for (p, &(t, x, y)) in pts.iter().enumerate() {
            let pf: Vec<ParityFields2D> = set.velocities.coords.iter().map(|c| set.wrap(t, x, y, c[0], c[1]).unwrap()[0]).collect();
            let a: Vec<f64> = pf.iter().zip(&set.velocities.coords).map(|(f, c)| transport_2d(f, c[0], c[1])).collect();
            let avg = set.velocities.average(&a).unwrap();
            for (i, c) in set.velocities.coords.iter().enumerate() {
                let r = residuals_2d(&pf[i], eps, c[0], c[1], avg, form);
                assert_abs_diff_eq!(r[0], rows[0][p], epsilon = 1e-11);
                for k in 1..5 {
                    assert_abs_diff_eq!(r[k], rows[k][p * q + i], epsilon = 1e-11);
                }
            }
        }
    }
}

#[test]
fn wrapped_partials_match_finite_differences() {
    let set = set_1d(7, 6, InputEncoding::periodic(2).with_time_scale(3.0), 4);
    let (t, x, v, h) = (0.04, 0.37, 0.55, 1e-5);
    let f = set.wrap(t, x, v).unwrap()[0];
    let at = |t: f64, x: f64| set.wrap(t, x, v).unwrap()[0];
    let (tp, tm, xp, xm) = (at(t + h, x), at(t - h, x), at(t, x + h), at(t, x - h));
    for (jet, p, m, dir) in [
        (f.rho, tp.rho, tm.rho, 0),
        (f.j, tp.j, tm.j, 0),
        (f.w, tp.w, tm.w, 0),
        (f.rho, xp.rho, xm.rho, 1),
        (f.j, xp.j, xm.j, 1),
        (f.w, xp.w, xm.w, 1),
    ] {
        let fd = (p.value - m.value) / (2.0 * h);
        let d = if dir == 0 { jet.dt } else { jet.dx };
        assert!(rel_close(d, fd, 1e-6), "{d} vs {fd}");
    }
}

#[test]
fn d3_has_zero_velocity_average_for_any_network() {
    for seed in 0..5 {
        let set = set_1d(seed, 7, InputEncoding::periodic(2), 6);
        let mut tape = Tape::new();
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (0.01 * i as f64, 0.17 * i as f64)).collect();
        let fv = set.record_fields(&mut tape, &pts, true).unwrap();
        let d = residual_vars_1d(&mut tape, &fv, 0.2, &set.velocities);
        let avg = tape.group_average(d[2], &set.velocities.weights);
        for a in row(&tape, avg) {
            assert!(a.abs() <= 1e-12, "{a}");
        }
    }
}

fn batch(dim: usize, n: usize, m: usize, horizon: f64, seed: u64) -> crate::sampler::CollocationBatch {
    sample_batch(&SamplerConfig { dimension: dim, interior: n, initial: m, horizon }, seed, 0).unwrap()
}

#[test]
fn constant_network_has_zero_residual_loss() {
    let mut set = set_1d(8, 4, InputEncoding::periodic(2), 4);
    let mut set2 = set_2d(8, 4, InputEncoding::periodic(1), 3);
    for net in set.nets_mut().into_iter().chain(set2.nets_mut()) {
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        net.array_mut("output.bias").unwrap()[0] = 0.7;
    }
    let ic = InitialCondition1D::cosine_gaussian();
    let b = batch(1, 40, 10, 0.1, 1);
    let l = loss_total_1d(&set, &b, 0.3, &ic, &LossOptions::default(), None).unwrap();
    assert!(l.residual.abs() <= 1e-12);
    let ic2 = InitialCondition2D::cosine_gaussian();
    let b2 = batch(2, 40, 10, 0.1, 1);
    let l2 = loss_total_2d(&set2, &b2, 0.3, &ic2, &LossOptions::default(), None).unwrap();
    assert!(l2.residual.abs() <= 1e-12);
}

#[test]
fn zero_network_initial_loss_matches_direct_sum() {
    let mut set = set_1d(9, 4, InputEncoding::periodic(2), 5);
    for net in set.nets_mut() {
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    }
    let eps = 0.4;
    let ic = InitialCondition1D::cosine_gaussian();
    let b = batch(1, 8, 33, 0.1, 2);
    let l = loss_total_1d(&set, &b, eps, &ic, &LossOptions { chunk: 7, ..Default::default() }, None).unwrap();

    let vel = &set.velocities;
    let ln2 = 2f64.ln();
    let (mut rho_term, mut vel_term) = (0.0, 0.0);
    for p in &b.initial {
        let x = p[0];
        let r: Vec<f64> = vel.xi().iter().map(|&v| 0.5 * (ic.f(x, v) + ic.f(x, -v))).collect();
        let o: Vec<f64> = vel.xi().iter().map(|&v| 0.5 * (ic.f(x, v) - ic.f(x, -v))).collect();
        let rho: f64 = vel.weights.iter().zip(&r).map(|(w, r)| w * r).sum();
        rho_term += (ln2 - rho).powi(2);
        for i in 0..vel.len() {
            // ε²|0 − j_IC|² + ε⁴|0 − w_IC|²
            vel_term += vel.weights[i] * (o[i].powi(2) + (r[i] - rho).powi(2));
        }
    }
    let m = b.initial.len() as f64;
    assert!((l.initial_terms[0] - rho_term / m).abs() <= 1e-14);
    assert!((l.initial_terms[1] - vel_term / m).abs() <= 1e-14);
    assert!((l.initial - (10.0 * rho_term + vel_term) / m).abs() <= 1e-13);
}

#[test]
fn breakdown_applies_lambda_weights() {
    let set = set_1d(10, 5, InputEncoding::raw(), 4);
    let ic = InitialCondition1D::cosine_gaussian();
    let b = batch(1, 20, 10, 0.1, 3);
    let w = LossWeights { lambda1: 10.0, lambda2: 1.0, lambda3: 1.0, lambda4: 1.0 };
    let l = loss_total_1d(&set, &b, 0.5, &ic, &LossOptions { weights: w, ..Default::default() }, None).unwrap();
    assert_eq!(l.weights, LossWeights::default());
    assert_eq!(l.initial, 10.0 * l.initial_terms[0] + l.initial_terms[1]);
    assert_eq!(l.boundary, l.boundary_terms[0] + l.boundary_terms[1]);
    assert!(l.boundary > 0.0);
    assert_eq!(l.total(), l.residual + l.initial + l.boundary);
}

#[test]
fn periodic_embedding_has_no_boundary_loss() {
    let set = set_1d(11, 5, InputEncoding::periodic(2), 4);
    let b = batch(1, 20, 10, 0.1, 3);
    let l = loss_total_1d(&set, &b, 0.5, &InitialCondition1D::cosine_gaussian(), &LossOptions::default(), None).unwrap();
    assert_eq!(l.boundary, 0.0);
    let set = set_2d(11, 4, InputEncoding::raw(), 3);
    let b = batch(2, 12, 6, 0.1, 3);
    let l = loss_total_2d(&set, &b, 0.5, &InitialCondition2D::cosine_gaussian(), &LossOptions::default(), None).unwrap();
    assert!(l.boundary > 0.0);
}

#[test]
fn empty_batch_is_rejected() {
    let set = set_1d(12, 4, InputEncoding::periodic(1), 2);
    let mut b = batch(1, 4, 4, 0.1, 0);
    b.interior.clear();
    let r = loss_total_1d(&set, &b, 0.5, &InitialCondition1D::cosine_gaussian(), &LossOptions::default(), None);
    assert!(matches!(r, Err(crate::Error::InvalidArgument(_))));
}

#[test]
fn chunking_does_not_change_the_loss() {
    let set = set_2d(13, 5, InputEncoding::raw(), 3);
    let b = batch(2, 30, 11, 0.1, 4);
    let ic = InitialCondition2D::cosine_gaussian();
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    let a = loss_total_2d(&set, &b, 0.2, &ic, &LossOptions { chunk: 4, ..Default::default() }, Some(&mut g1)).unwrap();
    let c = loss_total_2d(&set, &b, 0.2, &ic, &LossOptions { chunk: 64, ..Default::default() }, Some(&mut g2)).unwrap();
    assert!((a.total() - c.total()).abs() <= 1e-12 * c.total());
    for (x, y) in g1.iter().zip(&g2) {
        assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
    }
}

fn check_gradient(loss: &dyn Fn(&[f64]) -> f64, grad: &[f64], params: &[f64], picks: &[usize]) {
    for &i in picks {
        let h = 1e-5 * (1.0 + params[i].abs());
        let mut p = params.to_vec();
        p[i] += h;
        let up = loss(&p);
        p[i] -= 2.0 * h;
        let dn = loss(&p);
        let fd = (up - dn) / (2.0 * h);
        assert!((grad[i] - fd).abs() <= 1e-5 * grad[i].abs().max(fd.abs()).max(1e-3), "param {i}: {} vs {fd}", grad[i]);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let set = set_1d(14, 4, InputEncoding::raw().with_time_scale(2.0), 3);
    let b = batch(1, 9, 5, 0.1, 5);
    let ic = InitialCondition1D::cosine_gaussian();
    let opts = LossOptions { chunk: 4, ..Default::default() };
    let mut grad = Vec::new();
    loss_total_1d(&set, &b, 0.3, &ic, &opts, Some(&mut grad)).unwrap();
    let params = set.flat_params();
    let betas = set.beta_indices();
    let f = |p: &[f64]| {
        let mut s = set.clone();
        s.set_flat_params(p).unwrap();
        loss_total_1d(&s, &b, 0.3, &ic, &opts, None).unwrap().total()
    };
    let picks: Vec<usize> = (0..params.len()).step_by(7).filter(|i| !betas.contains(i)).collect();
    check_gradient(&f, &grad, &params, &picks);

    let set2 = set_2d(15, 3, InputEncoding::raw(), 2);
    let b2 = batch(2, 5, 4, 0.1, 6);
    let ic2 = InitialCondition2D::cosine_gaussian();
    let mut grad2 = Vec::new();
    loss_total_2d(&set2, &b2, 0.4, &ic2, &opts, Some(&mut grad2)).unwrap();
    let params2 = set2.flat_params();
    let f2 = |p: &[f64]| {
        let mut s = set2.clone();
        s.set_flat_params(p).unwrap();
        loss_total_2d(&s, &b2, 0.4, &ic2, &opts, None).unwrap().total()
    };
    let picks2: Vec<usize> = (0..params2.len()).step_by(11).collect();
    check_gradient(&f2, &grad2, &params2, &picks2);
}

#[test]
fn residual_loss_converges_to_limit_at_second_order() {
    let set = set_1d(16, 8, InputEncoding::periodic(2), 8);
    let b = batch(1, 64, 8, 0.1, 7);
    let ic = InitialCondition1D::cosine_gaussian();
    let r = |eps: f64| loss_total_1d(&set, &b, eps, &ic, &LossOptions::default(), None).unwrap().residual;
    let r0 = r(0.0);
    let eps = [1e-1, 1e-2, 1e-3];
    let gaps: Vec<f64> = eps.iter().map(|&e| (r(e) - r0).abs()).collect();
    let slope = fitted_slope(&eps, &gaps);
    assert!(slope >= 1.9, "slope {slope}, gaps {gaps:?}");
}

fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn initial_fields_examples() {
    let vel = VelocitySet::slab(16).unwrap();
    let even = InitialCondition1D::custom(|x, v| (1.0 + x) * (1.0 + v * v));
    let f = initial_fields_1d(&even, 0.1, 0.3, &vel).unwrap();
    assert!(f.j.iter().all(|&j| j == 0.0));

    let flat = InitialCondition1D::custom(|x, _| 2.0 + x);
    let f = initial_fields_1d(&flat, 1e-3, 0.3, &vel).unwrap();
    assert!(f.w.iter().all(|&w| w.abs() <= 1e-9));

    let gauss = |v: f64| (-v * v / 2.0).exp() / (2.0 * PI).sqrt();
    let oracle = simpson(&gauss, 0.0, 1.0, 1e-14);
    assert!((oracle - 0.3413447).abs() <= 1e-7);
    let ic = InitialCondition1D::cosine_gaussian();
    for x in [0.0, 0.1, 0.37, 0.5, 0.9] {
        let f = initial_fields_1d(&ic, 1e-4, x, &vel).unwrap();
        let p = 1.0 + (2.0 * TAU * x).cos();
        assert!((f.rho - oracle * p).abs() <= 1e-7);
    }
}

#[test]
fn initial_fields_2d_decomposition() {
    let vel = VelocitySet::quarter_circle(8).unwrap();
    let ic = InitialCondition2D::custom(|x, y, a, b| 1.0 + x * a + y * b * b + 0.3 * a * b + a * a * b);
    let eps = 0.2;
    let f = initial_fields_2d(&ic, eps, 0.3, 0.6, &vel).unwrap();
    let avg_w = vel.average(&f.w).unwrap();
    assert!(avg_w.abs() <= 1e-12);
    for (i, c) in vel.coords.iter().enumerate() {
        let got = reconstruct_f_2d(f.rho, f.phi[i], f.j1[i], f.j2[i], f.w[i], eps);
        let want = [ic.f(0.3, 0.6, c[0], c[1]), ic.f(0.3, 0.6, -c[0], -c[1]), ic.f(0.3, 0.6, -c[0], c[1]), ic.f(0.3, 0.6, c[0], -c[1])];
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-12);
        }
    }
}

#[test]
fn reconstruction_hand_values() {
    let (p, m) = reconstruct_f_1d(1.0, 0.7, 0.0, 0.5);
    assert_abs_diff_eq!(p, 1.35, epsilon = 1e-15);
    assert_abs_diff_eq!(m, 0.65, epsilon = 1e-15);
    let (p, m) = reconstruct_f_1d(1.3, 0.0, 2.0, 0.1);
    assert_eq!(p, m);
    let f = reconstruct_f_2d(1.0, 0.2, 0.0, 1.0, 0.0, 0.1);
    assert_abs_diff_eq!(f[0], 1.2, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 1.0, epsilon = 1e-15);
    let f = reconstruct_f_2d(0.8, 0.0, 0.0, 0.0, 3.0, 0.1);
    assert!(f.iter().all(|&v| v == 0.8 + 0.01 * 3.0));
}

#[test]
fn limit_solution_examples() {
    let flat = CosineSeries1D { terms: vec![(0, 0.4)] };
    for t in [0.0, 0.5, 3.0] {
        assert_eq!(limit_solution_1d(t, 0.3, 0.2, &flat), (0.4, 0.0));
    }
    let vel = VelocitySet::slab(16).unwrap();
    let series = InitialCondition1D::cosine_gaussian().density_series(&vel).unwrap();
    let (rho, _) = limit_solution_1d(0.01, 0.0, 0.5, &series);
    let want = 0.3413447 * (1.0 + (-16.0 * PI * PI * 0.01 / 3.0).exp());
    assert!((rho - want).abs() <= 1e-7 * 2.0);
    let v = 1.0 / 3f64.sqrt();
    for x in [0.1, 0.4, 0.8] {
        let (_, w) = limit_solution_1d(0.02, x, v, &series);
        assert!(w.abs() <= 1e-12);
    }

    let flat2 = CosineSeries2D { terms: vec![(0, 0, 2.0)] };
    assert_eq!(limit_solution_2d(0.7, 0.1, 0.2, 0.6, 0.8, &flat2), (2.0, 0.0));
    let vel2 = VelocitySet::quarter_circle(16).unwrap();
    let s2 = InitialCondition2D::cosine_gaussian().density_series(&vel2).unwrap();
    let c = (-0.5f64).exp() / (2.0 * PI).sqrt();
    assert!((c - 0.2419707).abs() <= 1e-7);
    for &(t, x, y) in &[(0.0, 0.1, 0.2), (0.05, 0.7, 0.3), (0.1, 0.5, 0.5)] {
        let (rho, _) = limit_solution_2d(t, x, y, 0.6, 0.8, &s2);
        let want = c * (1.0 + (-2.0 * PI * PI * t).exp() * ((TAU * x).cos() + (TAU * y).cos()) / 2.0);
        assert!((rho - want).abs() <= 1e-12);
    }
    let h = 1.0 / 2f64.sqrt();
    let (_, w) = limit_solution_2d(0.03, 0.2, 0.7, h, h, &s2);
    assert!(w.abs() <= 1e-12);
}

#[test]
fn custom_initial_conditions_have_no_series() {
    let vel = VelocitySet::slab(4).unwrap();
    let ic = InitialCondition1D::custom(|x, v| x + v);
    assert!(matches!(ic.density_series(&vel), Err(crate::Error::Unsupported(_))));
}

proptest! {
    #[test]
    fn reconstruction_round_trip_1d(fp in -5.0f64..5.0, fm in -5.0f64..5.0, eps in 1e-3f64..1.0) {
        // Two-node decomposition with ρ taken as an arbitrary split.
        let r = 0.5 * (fp + fm);
        let j = (fp - fm) / (2.0 * eps);
        let rho = 0.3 * r;
        let w = (r - rho) / (eps * eps);
        let (a, b) = reconstruct_f_1d(rho, j, w, eps);
        prop_assert!((a - fp).abs() <= 1e-12 * (1.0 + fp.abs()) / eps.min(1.0));
        prop_assert!((b - fm).abs() <= 1e-12 * (1.0 + fm.abs()) / eps.min(1.0));
    }

    #[test]
    fn reconstruction_round_trip_2d(vals in proptest::array::uniform4(-3.0f64..3.0), eps in 0.05f64..1.0) {
        let [pp, mm, mp, pm] = vals;
        let r2 = 0.5 * (pp + mm);
        let r1 = 0.5 * (pm + mp);
        let j2 = (pp - mm) / (2.0 * eps);
        let j1 = (pm - mp) / (2.0 * eps);
        let rho = 0.25;
        let w = (0.5 * (r1 + r2) - rho) / (eps * eps);
        let f = reconstruct_f_2d(rho, r2 - r1, j1, j2, w, eps);
        for (g, want) in f.iter().zip([pp, mm, mp, pm]) {
            prop_assert!((g - want).abs() <= 1e-12);
        }
    }
}
