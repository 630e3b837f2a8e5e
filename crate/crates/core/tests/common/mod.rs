//! Test-side oracles shared by the integration tests.

#![allow(dead_code)]

use fpeot_core::TtTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Train with i.i.d. `U(-1, 1)` cores and uniform interior rank.
pub fn random_tt(seed: u64, sizes: &[usize], rank: usize) -> TtTensor {
    let mut r = rng(seed);
    let d = sizes.len();
    let mut ranks = vec![rank; d + 1];
    ranks[0] = 1;
    ranks[d] = 1;
    let cores =
        (0..d).map(|k| (0..ranks[k] * sizes[k] * ranks[k + 1]).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    TtTensor::new(sizes.to_vec(), ranks, cores).unwrap()
}

/// Entry of a train by explicit summation over every rank-index path.
pub fn entry(t: &TtTensor, idx: &[usize]) -> f64 {
    let ranks = t.ranks();
    let sizes = t.mode_sizes();
    fn rec(t: &TtTensor, idx: &[usize], ranks: &[usize], sizes: &[usize], k: usize, a: usize) -> f64 {
        if k == idx.len() {
            return 1.0;
        }
        let core = t.core(k);
        (0..ranks[k + 1])
            .map(|b| core[(a * sizes[k] + idx[k]) * ranks[k + 1] + b] * rec(t, idx, ranks, sizes, k + 1, b))
            .sum()
    }
    rec(t, idx, ranks, sizes, 0, 0)
}

/// All multi-indices in row-major order.
pub fn indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Row-major dense values of a train via [`entry`].
pub fn dense(t: &TtTensor) -> Vec<f64> {
    indices(t.mode_sizes()).iter().map(|i| entry(t, i)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(b);
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Standard normal draws by Box–Muller.
pub fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = 1.0 - r.random::<f64>();
        let u2: f64 = r.random();
        let rad = (-2.0 * u1.ln()).sqrt();
        let ang = 2.0 * std::f64::consts::PI * u2;
        out.push(rad * ang.cos());
        out.push(rad * ang.sin());
    }
    out.truncate(n);
    out
}

/// Chebyshev–Lobatto nodes on `[a, b]`, ascending, from the cosine formula.
pub fn lobatto(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let c = -(std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * c
        })
        .collect()
}
