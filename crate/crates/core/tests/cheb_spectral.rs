mod common;

use common::*;
use fpeot_core::cheb::{cc_weights, cheb_diff, cheb_nodes, interp_eval, interp_grad, interp_value_and_grad};
use fpeot_core::{ChebGrid, Error, TtTensor};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn apply(m: &nalgebra::DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

#[test]
fn node_examples() {
    assert_eq!(cheb_nodes(2, -1.0, 1.0).unwrap(), vec![-1.0, 1.0]);
    let three = cheb_nodes(3, -1.0, 1.0).unwrap();
    assert_eq!((three[0], three[2]), (-1.0, 1.0));
    assert!(three[1].abs() <= 1e-16);
    let wide = cheb_nodes(3, -8.0, 8.0).unwrap();
    assert_eq!((wide[0], wide[2]), (-8.0, 8.0));
    assert!(wide[1].abs() <= 1e-15);
    assert!(matches!(cheb_nodes(1, -1.0, 1.0), Err(Error::InvalidInput(_))));
    assert!(cheb_nodes(4, 1.0, 1.0).is_err());
}

#[test]
fn nodes_match_cosine_formula_and_are_monotone() {
    for n in [2, 5, 16, 33, 128] {
        let x = cheb_nodes(n, -8.0, 8.0).unwrap();
        assert!(max_abs_diff(&x, &lobatto(n, -8.0, 8.0)) <= 1e-13);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        assert_eq!((x[0], x[n - 1]), (-8.0, 8.0));
    }
}

#[test]
fn differentiation_examples() {
    for n in [4, 9, 32, 64] {
        let d1 = cheb_diff(n, -8.0, 8.0, 1).unwrap();
        let x = cheb_nodes(n, -8.0, 8.0).unwrap();
        assert!(apply(&d1, &vec![3.0; n]).iter().all(|v| v.abs() <= 1e-12 * n as f64));
        assert!(apply(&d1, &x).iter().all(|v| (v - 1.0).abs() <= 1e-10));
    }
    let x = cheb_nodes(8, -1.0, 1.0).unwrap();
    let d2 = cheb_diff(8, -1.0, 1.0, 2).unwrap();
    let cubic: Vec<f64> = x.iter().map(|v| v * v * v).collect();
    let expect: Vec<f64> = x.iter().map(|v| 6.0 * v).collect();
    assert!(max_abs_diff(&apply(&d2, &cubic), &expect) <= 1e-9);
    assert!(matches!(cheb_diff(8, -1.0, 1.0, 3), Err(Error::InvalidInput(_))));
    assert!(cheb_diff(1, -1.0, 1.0, 1).is_err());
}

#[test]
fn quadrature_examples() {
    let w = cc_weights(17, -1.0, 1.0).unwrap();
    let x = cheb_nodes(17, -1.0, 1.0).unwrap();
    assert!((w.iter().sum::<f64>() - 2.0).abs() <= 1e-13);
    assert!(w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().abs() <= 1e-13);

    let w = cc_weights(64, -8.0, 8.0).unwrap();
    let x = cheb_nodes(64, -8.0, 8.0).unwrap();
    let gauss: f64 =
        w.iter().zip(&x).map(|(a, b)| a * (-0.5 * b * b).exp()).sum::<f64>() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((gauss - 1.0).abs() <= 1e-12);
    for n in [2, 3, 10, 101] {
        let w = cc_weights(n, -3.0, 5.0).unwrap();
        assert!((w.iter().sum::<f64>() - 8.0).abs() <= 1e-12 * 8.0);
    }
}

#[test]
fn interpolation_examples() {
    let grid = ChebGrid::new(2, 8, -1.0, 1.0).unwrap();
    let t = grid.rank_one(|k, x| if k == 0 { x * x } else { x }).unwrap();
    let v = interp_eval(&t, &grid, &[0.3, -0.7]).unwrap();
    assert!((v - 0.09 * -0.7).abs() <= 1e-12);

    let nodes = grid.nodes();
    for (i, j) in [(0, 0), (3, 5), (7, 2)] {
        let at = interp_eval(&t, &grid, &[nodes[i], nodes[j]]).unwrap();
        let want = t.eval(&[i, j]).unwrap();
        assert!((at - want).abs() <= 1e-13 * want.abs().max(1.0));
    }

    let c = TtTensor::constant(&grid.mode_sizes(), 4.25).unwrap();
    assert!((interp_eval(&c, &grid, &[0.123, -0.9]).unwrap() - 4.25).abs() <= 1e-13);
    assert!(matches!(interp_eval(&c, &grid, &[1.5, 0.0]), Err(Error::OutsideDomain { .. })));
    assert!(interp_eval(&c, &grid, &[0.0]).is_err());
}

#[test]
fn gradient_examples() {
    let grid = ChebGrid::new(2, 8, -2.0, 2.0).unwrap();
    let c = TtTensor::constant(&grid.mode_sizes(), 1.5).unwrap();
    assert!(interp_grad(&c, &grid, &[0.3, 1.1]).unwrap().iter().all(|g| g.abs() <= 1e-12));

    let t = grid.rank_one(|k, x| if k == 0 { x * x } else { x }).unwrap();
    let g = interp_grad(&t, &grid, &[0.5, 1.0]).unwrap();
    assert!((g[0] - 1.0).abs() <= 1e-10 && (g[1] - 0.25).abs() <= 1e-10);
    assert!(matches!(interp_grad(&t, &grid, &[0.0, -2.5]), Err(Error::OutsideDomain { .. })));

    // Even N keeps the origin off the grid.
    let grid = ChebGrid::new(3, 20, -6.0, 6.0).unwrap();
    let radial = grid.rank_one(|_, x| (-0.5 * x * x).exp()).unwrap();
    assert!(interp_grad(&radial, &grid, &[0.0; 3]).unwrap().iter().all(|g| g.abs() <= 1e-10));
}

#[test]
fn gradient_equals_differentiated_train() {
    let grid = ChebGrid::new(3, 12, -2.0, 3.0).unwrap();
    let t = random_tt(21, &grid.mode_sizes(), 3);
    let mut r = rng(22);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..3.0)).collect();
        let g = interp_grad(&t, &grid, &x).unwrap();
        for k in 0..3 {
            let dk = t.mode_apply(grid.d1(), k).unwrap();
            let want = interp_eval(&dk, &grid, &x).unwrap();
            assert!((g[k] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
        let (v, g2) = interp_value_and_grad(&t, &grid, &x).unwrap();
        assert!((v - interp_eval(&t, &grid, &x).unwrap()).abs() <= 1e-13 * v.abs().max(1.0));
        assert!(max_abs_diff(&g, &g2) <= 1e-13 * norm(&g).max(1.0));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let grid = ChebGrid::new(2, 48, -8.0, 8.0).unwrap();
    let t = grid
        .rank_one(|k, x| (-0.5 * (x - 0.5 * k as f64).powi(2) / (1.0 + k as f64)).exp())
        .unwrap()
        .add(&grid.rank_one(|_, x| 0.3 * (-(x + 1.0).powi(2)).exp()).unwrap())
        .unwrap();
    let mut r = rng(23);
    let h = 1e-5;
    for _ in 0..100 {
        let x = [r.random_range(-4.0..4.0), r.random_range(-4.0..4.0)];
        let g = interp_grad(&t, &grid, &x).unwrap();
        for k in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let fd = (interp_eval(&t, &grid, &xp).unwrap() - interp_eval(&t, &grid, &xm).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() <= 1e-5);
        }
    }
}

#[test]
fn interp_matrix_is_zero_outside_and_exact_at_nodes() {
    let grid = ChebGrid::new(1, 10, -1.0, 1.0).unwrap();
    let nodes = grid.nodes().to_vec();
    let m = grid.interp_matrix(&[nodes[3], 1.2, 0.25]);
    for j in 0..10 {
        assert_eq!(m[(0, j)], if j == 3 { 1.0 } else { 0.0 });
        assert_eq!(m[(1, j)], 0.0);
    }
    let row_sum: f64 = (0..10).map(|j| m[(2, j)]).sum();
    assert!((row_sum - 1.0).abs() <= 1e-14);
}

/// Polynomial `Σ c_k u^k` with `u` the affine image of `x` in `[-1, 1]`.
fn poly(c: &[f64], u: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for (k, &ck) in c.iter().enumerate() {
        let k = k as i32;
        p += ck * u.powi(k);
        if k >= 1 {
            dp += ck * k as f64 * u.powi(k - 1);
        }
        if k >= 2 {
            ddp += ck * (k * (k - 1)) as f64 * u.powi(k - 2);
        }
    }
    (p, dp, ddp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_exactness_on_polynomials(n in 4usize..=32, seed in any::<u64>(), a in -8.0f64..0.0, width in 0.5f64..16.0) {
        let b = a + width;
        let mut r = rng(seed);
        let deg = r.random_range(0..=n - 2);
        let c: Vec<f64> = (0..=deg).map(|_| r.random_range(-1.0..1.0)).collect();
        let half = 0.5 * (b - a);
        let u_of = |x: f64| (x - 0.5 * (a + b)) / half;
        let x = cheb_nodes(n, a, b).unwrap();
        let vals: Vec<f64> = x.iter().map(|&v| poly(&c, u_of(v)).0).collect();
        let d1: Vec<f64> = x.iter().map(|&v| poly(&c, u_of(v)).1 / half).collect();
        let d2: Vec<f64> = x.iter().map(|&v| poly(&c, u_of(v)).2 / (half * half)).collect();
        let got1 = apply(&cheb_diff(n, a, b, 1).unwrap(), &vals);
        let got2 = apply(&cheb_diff(n, a, b, 2).unwrap(), &vals);
        let s1 = d1.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let s2 = d2.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(max_abs_diff(&got1, &d1) <= 1e-9 * s1);
        prop_assert!(max_abs_diff(&got2, &d2) <= 1e-9 * s2);

        // ∫ u^k over [-1, 1] is 2/(k+1) for even k, 0 for odd k.
        let exact: f64 = c.iter().enumerate().map(|(k, ck)| if k % 2 == 0 { ck * 2.0 / (k as f64 + 1.0) } else { 0.0 }).sum::<f64>() * half;
        let w = cc_weights(n, a, b).unwrap();
        let quad: f64 = w.iter().zip(&vals).map(|(wi, v)| wi * v).sum();
        let scale = c.iter().map(|v| v.abs()).sum::<f64>() * half;
        prop_assert!((quad - exact).abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn interpolation_reproduces_node_values(seed in any::<u64>(), n in 3usize..20) {
        let grid = ChebGrid::new(3, n, -8.0, 8.0).unwrap();
        let t = random_tt(seed, &grid.mode_sizes(), 2);
        let mut r = rng(seed ^ 3);
        let nodes = grid.nodes();
        for _ in 0..20 {
            let idx: Vec<usize> = (0..3).map(|_| r.random_range(0..n)).collect();
            let x: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
            let want = entry(&t, &idx);
            let got = interp_eval(&t, &grid, &x).unwrap();
            prop_assert!((got - want).abs() <= 1e-13 * want.abs().max(1e-300) || (got - want).abs() <= 1e-15);
        }
    }
}
