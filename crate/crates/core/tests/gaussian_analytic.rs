mod common;

use common::*;
use fpeot_core::gaussian::{f_lambda, g_lambda};
use fpeot_core::{ChebGrid, Error, GaussianSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// `g = e^{−t} − f`, from `u = e^{−τ}` and `∫ (1 + c u²)^{−3/2} du = u/√(1 + c u²)`.
fn g_closed(lambda: f64, t: f64) -> f64 {
    (-t).exp() - ((((-2.0 * t).exp()) * (lambda - 1.0) + 1.0) / lambda).sqrt()
}

fn rotated(seed: u64, d: usize) -> GaussianSpec {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    let sigma = &a * a.transpose() * 0.8 + DMatrix::identity(d, d) * 0.2;
    let a0 = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
    GaussianSpec::new(a0, sigma).unwrap()
}

fn draw(spec: &GaussianSpec, r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let d = spec.d();
    let l = spec.sigma0().clone().cholesky().unwrap().l();
    (0..n)
        .map(|_| {
            let z = DVector::from_vec(normals(r, d));
            let x = &l * z;
            x.iter().zip(spec.a0()).map(|(v, a)| v + a).collect()
        })
        .collect()
}

#[test]
fn moments_examples() {
    let spec = GaussianSpec::diagonal(vec![1.0, 0.0], &[2.0, 1.0]).unwrap();
    let (a, s) = spec.moments_at(0.0);
    assert_eq!(a, vec![1.0, 0.0]);
    assert_eq!(&s, spec.sigma0());
    let (a, s) = spec.moments_at(1.0);
    let e1 = (-1.0f64).exp();
    assert!((a[0] - e1).abs() <= 1e-15 && a[1] == 0.0);
    assert!((s[(0, 0)] - (1.0 + e1 * e1)).abs() <= 1e-15);
    assert!((s[(1, 1)] - 1.0).abs() <= 1e-15 && s[(0, 1)] == 0.0);

    let id = GaussianSpec::standard(3).unwrap();
    for t in [0.0, 0.7, 5.0, 40.0] {
        assert!((id.moments_at(t).1 - DMatrix::identity(3, 3)).abs().max() <= 1e-15);
    }
}

#[test]
fn f_examples() {
    for t in [0.0, 0.3, 2.0, 50.0] {
        assert_eq!(f_lambda(1.0, t).unwrap(), 1.0);
    }
    for l in [0.1, 0.5, 4.0, 30.0] {
        assert!((f_lambda(l, 0.0).unwrap() - 1.0).abs() <= 1e-15);
    }
    let f = f_lambda(4.0, 10.0).unwrap();
    // 0.5·(√(1 + 3e^{−20}) − 1) ≈ 0.75·e^{−20}
    let excess = 0.75 * (-20.0f64).exp();
    assert!((f - 0.5 - excess).abs() <= 1e-15);
    assert!((f - 0.5).abs() <= 1e-8);
    assert!(matches!(f_lambda(0.0, 1.0), Err(Error::InvalidInput(_))));
    assert!(f_lambda(-2.0, 1.0).is_err());
    assert!(f_lambda(2.0, -1.0).is_err());
}

#[test]
fn g_examples() {
    for l in [0.2, 1.0, 9.0] {
        assert_eq!(g_lambda(l, 0.0).unwrap(), 0.0);
    }
    for t in [0.1, 1.0, 3.0, 5.0, 12.0] {
        assert!((g_lambda(1.0, t).unwrap() + (1.0 - (-t).exp())).abs() <= 1e-10);
    }
    assert!((g_lambda(9.0, 20.0).unwrap() + 1.0 / 3.0).abs() <= 1e-8);
    assert!(matches!(g_lambda(0.0, 1.0), Err(Error::InvalidInput(_))));
    assert!(g_lambda(1.0, -0.5).is_err());
}

#[test]
fn g_matches_closed_form_antiderivative() {
    for &l in &[0.05, 0.3, 0.9, 1.0, 1.7, 4.0, 25.0, 400.0] {
        for &t in &[1e-3, 0.05, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0] {
            let (q, c) = (g_lambda(l, t).unwrap(), g_closed(l, t));
            assert!((q - c).abs() <= 1e-12, "λ={l} t={t}: {q} vs {c}");
        }
    }
}

#[test]
fn f_and_g_move_monotonically_toward_limits() {
    for &l in &[0.2f64, 0.7, 2.0, 9.0] {
        let (fl, gl) = (l.powf(-0.5), -l.powf(-0.5));
        let ts: Vec<f64> = (0..60).map(|i| 0.25 * i as f64).collect();
        let fs: Vec<f64> = ts.iter().map(|&t| f_lambda(l, t).unwrap()).collect();
        let gs: Vec<f64> = ts.iter().map(|&t| g_lambda(l, t).unwrap()).collect();
        for w in fs.windows(2) {
            assert!((w[1] - fl).abs() <= (w[0] - fl).abs() + 1e-15);
        }
        for w in gs.windows(2) {
            assert!((w[1] - gl).abs() <= (w[0] - gl).abs() + 1e-12);
        }
        assert!((fs[59] - fl).abs() <= 1e-5 && (gs[59] - gl).abs() <= 1e-5);
    }
}

#[test]
fn encoder_map_examples() {
    let shifted = GaussianSpec::new(vec![0.5, -1.0], DMatrix::identity(2, 2)).unwrap();
    let y = shifted.encoder_map(&[2.0, 3.0]);
    assert!(max_abs_diff(&y, &[1.5, 4.0]) <= 1e-15);
    let spec = rotated(1, 3);
    assert!(spec.encoder_map(spec.a0()).iter().all(|v| v.abs() <= 1e-14));
    let diag = GaussianSpec::diagonal(vec![0.0, 0.0], &[4.0, 1.0]).unwrap();
    assert!(max_abs_diff(&diag.encoder_map(&[2.0, 3.0]), &[1.0, 3.0]) <= 1e-14);
}

#[test]
fn encoder_map_whitens_the_covariance() {
    let spec = rotated(2, 4);
    let d = 4;
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut x = spec.a0().to_vec();
            x[j] += 1.0;
            spec.encoder_map(&x)
        })
        .collect();
    let e = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
    let white = &e * spec.sigma0() * e.transpose();
    assert!((white - DMatrix::identity(d, d)).abs().max() <= 1e-12);
    assert!((&e - e.transpose()).abs().max() <= 1e-12);
}

#[test]
fn finite_time_map_examples() {
    let spec = rotated(3, 3);
    let x = [0.4, -1.2, 2.0];
    assert!(max_abs_diff(&spec.finite_time_map(&x, 0.0), &x) <= 1e-14);
    assert!(max_abs_diff(&spec.finite_time_map(&x, 40.0), &spec.encoder_map(&x)) <= 1e-12);

    let a = vec![1.0, -2.0, 0.5];
    let shifted = GaussianSpec::new(a.clone(), DMatrix::identity(3, 3)).unwrap();
    for t in [0.5f64, 2.0, 5.0] {
        let want: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - ai * (1.0 - (-t).exp())).collect();
        assert!(max_abs_diff(&shifted.finite_time_map(&x, t), &want) <= 1e-10);
    }
}

#[test]
fn finite_time_map_solves_the_flow_ode() {
    // dx/dt = −(x + ∇log p_t(x)) along the exact map, by central differences.
    let spec = rotated(4, 2);
    let x0 = [0.7, -0.3];
    for t in [0.3, 1.0, 2.5] {
        let h = 1e-5;
        let xp = spec.finite_time_map(&x0, t + h);
        let xm = spec.finite_time_map(&x0, t - h);
        let x = spec.finite_time_map(&x0, t);
        let s = spec.score_at(t, &x);
        for k in 0..2 {
            let dxdt = (xp[k] - xm[k]) / (2.0 * h);
            assert!((dxdt + x[k] + s[k]).abs() <= 1e-8);
        }
    }
}

#[test]
fn ot_cost_examples() {
    assert!(GaussianSpec::standard(2).unwrap().gaussian_ot_cost().abs() <= 1e-15);
    let shift = GaussianSpec::new(vec![3.0, 4.0], DMatrix::identity(2, 2)).unwrap();
    assert!((shift.gaussian_ot_cost() - 25.0).abs() <= 1e-12);
    let diag = GaussianSpec::diagonal(vec![0.0, 0.0], &[4.0, 1.0]).unwrap();
    assert!((diag.gaussian_ot_cost() - 1.0).abs() <= 1e-12);
}

fn mc_pairing_cost(spec: &GaussianSpec, n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let costs: Vec<f64> = draw(spec, &mut r, n)
        .iter()
        .map(|x| {
            let y = spec.encoder_map(x);
            x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .collect();
    let mean = costs.iter().sum::<f64>() / n as f64;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[test]
fn ot_cost_matches_monte_carlo_pairing() {
    let diag = GaussianSpec::diagonal(vec![0.0, 0.0], &[4.0, 1.0]).unwrap();
    let (mean, se) = mc_pairing_cost(&diag, 1_000_000, 5);
    assert!((mean - 1.0).abs() <= 3.0 * se, "{mean} ± {se}");
    for seed in 6..9 {
        let spec = rotated(seed, 3);
        let (mean, se) = mc_pairing_cost(&spec, 100_000, seed);
        let want = spec.gaussian_ot_cost();
        assert!((mean - want).abs() <= 3.0 * se, "{mean} ± {se} vs {want}");
    }
}

#[test]
fn finite_time_pushforward_matches_moments() {
    let spec = rotated(10, 3);
    let n = 100_000;
    let mut r = rng(11);
    let xs = draw(&spec, &mut r, n);
    for t in [0.5, 2.0] {
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| spec.finite_time_map(x, t)).collect();
        let (a, s) = spec.moments_at(t);
        let mean: Vec<f64> = (0..3).map(|k| ys.iter().map(|y| y[k]).sum::<f64>() / n as f64).collect();
        for k in 0..3 {
            assert!((mean[k] - a[k]).abs() <= 3.0 * (s[(k, k)] / n as f64).sqrt());
        }
        for i in 0..3 {
            for j in 0..3 {
                let c = ys.iter().map(|y| (y[i] - mean[i]) * (y[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
                let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)] * s[(i, j)]) / n as f64).sqrt();
                assert!((c - s[(i, j)]).abs() <= 3.0 * se, "t={t} ({i},{j}): {c} vs {}", s[(i, j)]);
            }
        }
    }
}

#[test]
fn density_and_score_agree() {
    let spec = rotated(12, 2);
    let x = [0.3, -0.8];
    for t in [0.0, 1.0, 4.0] {
        let s = spec.score_at(t, &x);
        let h = 1e-6;
        for k in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let fd = (spec.density_at(t, &xp).ln() - spec.density_at(t, &xm).ln()) / (2.0 * h);
            assert!((fd - s[k]).abs() <= 1e-7);
        }
    }
    let id = GaussianSpec::standard(2).unwrap();
    assert!(max_abs_diff(&id.score_at(3.0, &x), &[-0.3, 0.8]) <= 1e-15);
}

/// `∫_a^b N(x; m, v) dx` by composite Simpson on a fine uniform mesh.
fn box_mass_1d(m: f64, v: f64, a: f64, b: f64) -> f64 {
    let n = 200_000;
    let h = (b - a) / n as f64;
    let pdf = |x: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let inner: f64 = (1..n).map(|i| pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (pdf(a) + pdf(b) + inner) * h / 3.0
}

#[test]
fn grid_density_integrates_to_box_mass() {
    let grid = ChebGrid::new(2, 128, -8.0, 8.0).unwrap();
    // Wide in x: 3.7e-7 of the mass lies beyond x = 8 at t = 0.
    let diag = GaussianSpec::diagonal(vec![1.0, 0.0], &[2.0, 0.5]).unwrap();
    for t in [0.0, 5.0] {
        let (a, s) = diag.moments_at(t);
        let want = box_mass_1d(a[0], s[(0, 0)], -8.0, 8.0) * box_mass_1d(a[1], s[(1, 1)], -8.0, 8.0);
        let mass = grid.integrate(&diag.grid_density(&grid, t, 1e-12).unwrap()).unwrap();
        assert!((mass - want).abs() <= 1e-10, "t={t} mass {mass} want {want}");
    }
    let spec = fpeot_core::density::gen_gaussian_spec(2, 13).unwrap();
    for t in [0.0, 5.0] {
        let mass = grid.integrate(&spec.grid_density(&grid, t, 1e-12).unwrap()).unwrap();
        assert!((mass - 1.0).abs() <= 1e-10, "t={t} mass {mass}");
    }
}

#[test]
fn invalid_covariances_are_rejected() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
    assert!(matches!(GaussianSpec::new(vec![0.0, 0.0], asym), Err(Error::InvalidInput(_))));
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(GaussianSpec::new(vec![0.0, 0.0], indefinite).is_err());
    assert!(GaussianSpec::new(vec![0.0], DMatrix::identity(2, 2)).is_err());
}

proptest! {
    #[test]
    fn encoder_map_is_affine(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let spec = rotated(seed, 3);
        let mut r = rng(seed ^ 9);
        let x: Vec<f64> = (0..3).map(|_| r.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| r.random_range(-4.0..4.0)).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let (ex, ey, e0) = (spec.encoder_map(&x), spec.encoder_map(&y), spec.encoder_map(&[0.0; 3]));
        let want: Vec<f64> = (0..3).map(|k| alpha * ex[k] + beta * ey[k] + (1.0 - alpha - beta) * e0[k]).collect();
        let scale = 1.0 + norm(&ex) * alpha.abs() + norm(&ey) * beta.abs() + norm(&e0) * (1.0 - alpha - beta).abs();
        prop_assert!(max_abs_diff(&spec.encoder_map(&combo), &want) <= 1e-13 * scale);
    }
}
