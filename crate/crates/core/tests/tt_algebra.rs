mod common;

use common::*;
use fpeot_core::cheb::cc_weights;
use fpeot_core::density::gen_quartic_mixture;
use fpeot_core::tt::{cross, CrossOptions};
use fpeot_core::{ChebGrid, DenseTensor, Error, TtTensor};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn from_values(sizes: &[usize], values: Vec<f64>, tol: f64) -> TtTensor {
    TtTensor::from_dense(&DenseTensor::new(sizes.to_vec(), values).unwrap(), tol).unwrap()
}

fn random_matrix(seed: u64, n: usize) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0))
}

#[test]
fn from_dense_separable_has_rank_one() {
    let x = lobatto(8, -1.0, 1.0);
    let values: Vec<f64> = indices(&[8, 8]).iter().map(|i| x[i[0]].exp() * (2.0 * x[i[1]]).cos()).collect();
    let t = from_values(&[8, 8], values.clone(), 1e-12);
    assert_eq!(t.ranks(), &[1, 1, 1]);
    assert!(rel_diff(&dense(&t), &values) <= 1e-12);
}

#[test]
fn from_dense_zero_tensor_reconstructs_zero() {
    let t = from_values(&[4, 4, 4], vec![0.0; 64], 1e-12);
    assert!(dense(&t).iter().all(|&v| v == 0.0));
}

#[test]
fn from_dense_random_tensor_within_tolerance() {
    let mut r = rng(11);
    let values: Vec<f64> = (0..216).map(|_| r.random_range(-1.0..1.0)).collect();
    let t = from_values(&[6, 6, 6], values.clone(), 1e-10);
    assert!(rel_diff(&dense(&t), &values) <= 1e-10);
}

#[test]
fn from_dense_rejects_empty_shapes() {
    assert!(matches!(DenseTensor::new(vec![3, 0], vec![]), Err(Error::InvalidInput(_))));
    assert!(DenseTensor::new(vec![], vec![]).is_err());
}

#[test]
fn round_keeps_minimal_rank_one() {
    let t = TtTensor::rank_one(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5], vec![4.0, 1.0, 2.0]]).unwrap();
    let r = t.round(1e-12).unwrap();
    assert_eq!(r.ranks(), t.ranks());
    assert!(rel_diff(&dense(&r), &dense(&t)) <= 1e-14);
}

#[test]
fn round_undoes_self_sum_rank_doubling() {
    let a = random_tt(3, &[5, 6, 4], 3);
    let twice = a.add(&a).unwrap();
    assert_eq!(twice.ranks(), &[1, 6, 6, 1]);
    let r = twice.round(1e-12).unwrap();
    assert_eq!(r.ranks(), a.ranks());
    let expect: Vec<f64> = dense(&a).iter().map(|v| 2.0 * v).collect();
    assert!(rel_diff(&dense(&r), &expect) <= 1e-12);
}

#[test]
fn round_random_rank_five_at_coarse_tolerance() {
    let a = random_tt(5, &[8, 8, 8], 5);
    let r = a.round(1e-2).unwrap();
    assert!(rel_diff(&dense(&r), &dense(&a)) <= 1e-2);
    assert!(r.ranks().iter().zip(a.ranks()).all(|(x, y)| x <= y));
}

#[test]
fn add_examples() {
    let a = random_tt(7, &[4, 5, 3], 2);
    let zero = TtTensor::zeros(&[4, 5, 3]).unwrap();
    assert!(rel_diff(&dense(&a.add(&zero).unwrap()), &dense(&a)) <= 1e-15);

    let cancel = dense(&a.add(&a.scale(-1.0)).unwrap());
    let bound = 1e-14 * norm(&dense(&a));
    assert!(cancel.iter().all(|v| v.abs() <= bound));

    let b = random_tt(8, &[4, 5, 3], 2);
    let sum: Vec<f64> = dense(&a).iter().zip(dense(&b)).map(|(x, y)| x + y).collect();
    let c = a.add(&b).unwrap();
    assert!(rel_diff(&dense(&c), &sum) <= 1e-12);
    assert!(c.ranks().iter().zip(a.ranks().iter().zip(b.ranks())).all(|(r, (x, y))| *r <= x + y));
}

#[test]
fn add_and_hadamard_reject_mismatched_shapes() {
    let a = random_tt(1, &[4, 5], 2);
    let b = random_tt(2, &[4, 6], 2);
    assert!(matches!(a.add(&b), Err(Error::ShapeMismatch(_))));
    assert!(matches!(a.hadamard(&b), Err(Error::ShapeMismatch(_))));
}

#[test]
fn hadamard_examples() {
    let a = random_tt(9, &[3, 4, 5], 2);
    let ones = TtTensor::constant(&[3, 4, 5], 1.0).unwrap();
    assert!(rel_diff(&dense(&a.hadamard(&ones).unwrap()), &dense(&a)) <= 1e-15);
    let zero = TtTensor::zeros(&[3, 4, 5]).unwrap();
    assert!(dense(&a.hadamard(&zero).unwrap()).iter().all(|&v| v == 0.0));

    let b = random_tt(10, &[3, 4, 5], 2);
    let prod: Vec<f64> = dense(&a).iter().zip(dense(&b)).map(|(x, y)| x * y).collect();
    let c = a.hadamard(&b).unwrap();
    assert!(rel_diff(&dense(&c), &prod) <= 1e-12);
    assert!(c.ranks().iter().zip(a.ranks().iter().zip(b.ranks())).all(|(r, (x, y))| *r <= x * y));
}

#[test]
fn mode_apply_examples() {
    let sizes = [4, 5, 3];
    let a = random_tt(12, &sizes, 2);
    let same = a.mode_apply(&DMatrix::identity(5, 5), 1).unwrap();
    assert_eq!(dense(&same), dense(&a));

    // Row i of the permutation picks entry perm[i].
    let perm = [3, 0, 4, 1, 2];
    let p = DMatrix::from_fn(5, 5, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
    let permuted = a.mode_apply(&p, 1).unwrap();
    for idx in indices(&sizes) {
        let src = [idx[0], perm[idx[1]], idx[2]];
        assert_eq!(entry(&permuted, &idx), entry(&a, &src));
    }

    let m = random_matrix(13, 3);
    let out = a.mode_apply(&m, 2).unwrap();
    assert_eq!(out.ranks(), a.ranks());
    let expect: Vec<f64> =
        indices(&sizes).iter().map(|i| (0..3).map(|j| m[(i[2], j)] * entry(&a, &[i[0], i[1], j])).sum()).collect();
    assert!(rel_diff(&dense(&out), &expect) <= 1e-12);
}

#[test]
fn mode_apply_checks_mode_and_size() {
    let a = random_tt(14, &[4, 5], 2);
    assert!(matches!(
        a.mode_apply(&DMatrix::identity(4, 4), 2),
        Err(Error::IndexOutOfRange { .. }) | Err(Error::InvalidInput(_))
    ));
    assert!(matches!(a.mode_apply(&DMatrix::identity(4, 4), 1), Err(Error::ShapeMismatch(_))));
}

#[test]
fn eval_examples() {
    let u = vec![1.0, -2.0, 0.5];
    let v = vec![3.0, 4.0];
    let t = TtTensor::rank_one(&[u.clone(), v.clone()]).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            assert_eq!(t.eval(&[i, j]).unwrap(), u[i] * v[j]);
        }
    }
    let zero = TtTensor::zeros(&[3, 3, 3]).unwrap();
    assert_eq!(zero.eval(&[1, 2, 0]).unwrap(), 0.0);

    let a = random_tt(15, &[7, 6, 5, 4], 3);
    let mut r = rng(16);
    for _ in 0..20 {
        let idx: Vec<usize> = a.mode_sizes().iter().map(|&n| r.random_range(0..n)).collect();
        let want = entry(&a, &idx);
        assert!((a.eval(&idx).unwrap() - want).abs() <= 1e-14 * want.abs().max(1e-300));
    }
    assert!(matches!(a.eval(&[7, 0, 0, 0]), Err(Error::IndexOutOfRange { .. })));
    assert!(a.eval(&[0, 0, 0]).is_err());
}

#[test]
fn integrate_examples() {
    let ones = TtTensor::constant(&[3, 3], 1.0).unwrap();
    let w = [1.0; 3];
    assert_eq!(ones.integrate(&[&w, &w]).unwrap(), 9.0);

    let u = vec![1.0, 2.0, 3.0];
    let v = vec![-1.0, 0.5];
    let (w1, w2) = (vec![0.2, 0.3, 0.5], vec![2.0, 4.0]);
    let t = TtTensor::rank_one(&[u.clone(), v.clone()]).unwrap();
    let want = u.iter().zip(&w1).map(|(a, b)| a * b).sum::<f64>() * v.iter().zip(&w2).map(|(a, b)| a * b).sum::<f64>();
    assert!((t.integrate(&[&w1, &w2]).unwrap() - want).abs() <= 1e-15);

    let grid = ChebGrid::new(2, 64, -8.0, 8.0).unwrap();
    let g = grid.rank_one(|_, x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
    let w = cc_weights(64, -8.0, 8.0).unwrap();
    assert!((g.integrate(&[&w, &w]).unwrap() - 1.0).abs() <= 1e-10);
    assert!(g.integrate(&[&w]).is_err());
    assert!(g.integrate(&[&w, &w[..10]]).is_err());
}

#[test]
fn cross_separable_is_rank_one() {
    let x = lobatto(30, -2.0, 2.0);
    let y = lobatto(25, -2.0, 2.0);
    let out = cross(|i| x[i[0]].sin() * y[i[1]].cos(), &[30, 25], &CrossOptions { tol: 1e-10, ..Default::default() })
        .unwrap();
    assert_eq!(out.tensor.max_rank(), 1);
    let mut r = rng(17);
    for _ in 0..1000 {
        let (i, j) = (r.random_range(0..30), r.random_range(0..25));
        assert!((out.tensor.eval(&[i, j]).unwrap() - x[i].sin() * y[j].cos()).abs() <= 1e-10);
    }
}

#[test]
fn cross_constant_is_exact_rank_one() {
    let out = cross(|_| 2.5, &[6, 7, 8], &CrossOptions::default()).unwrap();
    assert_eq!(out.tensor.max_rank(), 1);
    assert!(dense(&out.tensor).iter().all(|v| (v - 2.5).abs() <= 1e-14));
}

#[test]
fn cross_mixture_density_held_out_error() {
    let mix = gen_quartic_mixture(3, 4).unwrap();
    let grid = ChebGrid::new(3, 40, -8.0, 8.0).unwrap();
    let nodes = grid.nodes().to_vec();
    let f = |i: &[usize]| mix.density(&[nodes[i[0]], nodes[i[1]], nodes[i[2]]]);
    let out = cross(f, &grid.mode_sizes(), &CrossOptions { tol: 1e-8, ..Default::default() }).unwrap();
    assert!(!out.rank_capped);
    // Fresh validation set, independent of the one inside `cross`.
    let mut r = rng(99);
    let idx: Vec<Vec<usize>> = (0..2000).map(|_| (0..3).map(|_| r.random_range(0..40)).collect()).collect();
    let want: Vec<f64> = idx.iter().map(|i| f(i)).collect();
    let got: Vec<f64> = idx.iter().map(|i| out.tensor.eval(i).unwrap()).collect();
    assert!(rel_diff(&got, &want) <= 1e-8, "held-out error {}", rel_diff(&got, &want));
}

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![prop::collection::vec(2usize..=10, 2), prop::collection::vec(2usize..=10, 3),]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn from_dense_round_trip(sizes in shape_strategy(), seed in any::<u64>(), tol in 1e-12f64..1e-2) {
        let mut r = rng(seed);
        let total: usize = sizes.iter().product();
        let values: Vec<f64> = (0..total).map(|_| r.random_range(-1.0..1.0)).collect();
        let t = from_values(&sizes, values.clone(), tol);
        prop_assert!(rel_diff(&dense(&t), &values) <= tol);
    }

    #[test]
    fn add_and_hadamard_are_homomorphisms(sizes in shape_strategy(), seed in any::<u64>()) {
        let a = random_tt(seed, &sizes, 2);
        let b = random_tt(seed.wrapping_add(1), &sizes, 3);
        let (da, db) = (dense(&a), dense(&b));
        let sum: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x + y).collect();
        let prod: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
        prop_assert!(rel_diff(&dense(&a.add(&b).unwrap()), &sum) <= 1e-12);
        prop_assert!(rel_diff(&dense(&a.hadamard(&b).unwrap()), &prod) <= 1e-12);
    }

    #[test]
    fn mode_apply_composes(sizes in shape_strategy(), seed in any::<u64>(), k in 0usize..3) {
        let k = k % sizes.len();
        let a = random_tt(seed, &sizes, 2);
        let m1 = random_matrix(seed ^ 1, sizes[k]);
        let m2 = random_matrix(seed ^ 2, sizes[k]);
        let twice = a.mode_apply(&m1, k).unwrap().mode_apply(&m2, k).unwrap();
        let once = a.mode_apply(&(&m2 * &m1), k).unwrap();
        prop_assert!(rel_diff(&dense(&twice), &dense(&once)) <= 1e-12);
    }

    #[test]
    fn integrate_is_linear(sizes in shape_strategy(), seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let a = random_tt(seed, &sizes, 2);
        let b = random_tt(seed.wrapping_add(7), &sizes, 2);
        let mut r = rng(seed ^ 5);
        let weights: Vec<Vec<f64>> = sizes.iter().map(|&n| (0..n).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let w: Vec<&[f64]> = weights.iter().map(|v| v.as_slice()).collect();
        let combo = a.scale(alpha).add(&b.scale(beta)).unwrap();
        let lhs = combo.integrate(&w).unwrap();
        let (ia, ib) = (a.integrate(&w).unwrap(), b.integrate(&w).unwrap());
        let rhs = alpha * ia + beta * ib;
        let scale = (alpha * ia).abs() + (beta * ib).abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn round_never_grows_ranks_or_error(sizes in shape_strategy(), seed in any::<u64>(), rank in 1usize..6, tol in 1e-10f64..0.5) {
        let a = random_tt(seed, &sizes, rank);
        let r = a.round(tol).unwrap();
        prop_assert!(r.ranks().iter().zip(a.ranks()).all(|(x, y)| x <= y));
        prop_assert!(rel_diff(&dense(&r), &dense(&a)) <= tol * (1.0 + 1e-12));
    }
}
