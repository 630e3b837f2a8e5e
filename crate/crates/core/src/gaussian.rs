//! Closed-form solution of the probability flow for a Gaussian start
//! distribution: moment evolution, the spectral functions `f(λ, t)` and
//! `g(λ, t)`, the finite-time and limiting flow maps, and the quadratic
//! transport cost to the standard normal.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::cheb::ChebGrid;
use crate::error::{invalid, mismatch, Result};
use crate::tt::{cross, CrossOptions, TtTensor};

/// `N(a0, Σ0)` with a cached eigendecomposition `Σ0 = V Λ Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "GaussianParams", into = "GaussianParams"))]
pub struct GaussianSpec {
    a0: Vec<f64>,
    sigma0: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Plain parameters of a [`GaussianSpec`], used for serialization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianParams {
    pub a0: Vec<f64>,
    /// Row-major rows of `Σ0`.
    pub sigma0: Vec<Vec<f64>>,
}

impl TryFrom<GaussianParams> for GaussianSpec {
    type Error = crate::Error;

    fn try_from(p: GaussianParams) -> Result<Self> {
        let d = p.a0.len();
        if p.sigma0.len() != d || p.sigma0.iter().any(|r| r.len() != d) {
            return Err(mismatch(format!("covariance must be {d}x{d}")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| p.sigma0[i][j]);
        GaussianSpec::new(p.a0, sigma)
    }
}

impl From<GaussianSpec> for GaussianParams {
    fn from(s: GaussianSpec) -> Self {
        let d = s.d();
        GaussianParams { a0: s.a0, sigma0: (0..d).map(|i| (0..d).map(|j| s.sigma0[(i, j)]).collect()).collect() }
    }
}

impl GaussianSpec {
    pub fn new(a0: Vec<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        let d = a0.len();
        if d == 0 {
            return Err(invalid("Gaussian needs d >= 1"));
        }
        if sigma0.shape() != (d, d) {
            return Err(mismatch(format!("covariance is {}x{}, mean has length {d}", sigma0.nrows(), sigma0.ncols())));
        }
        if a0.iter().chain(sigma0.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("Gaussian parameters must be finite"));
        }
        let scale = sigma0.abs().max().max(f64::MIN_POSITIVE);
        if (&sigma0 - sigma0.transpose()).abs().max() > 1e-12 * scale {
            return Err(invalid("covariance is not symmetric"));
        }
        let eig = SymmetricEigen::new(sigma0.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(invalid("covariance is not positive definite"));
        }
        Ok(Self { a0, sigma0, eigenvalues: eig.eigenvalues.iter().copied().collect(), eigenvectors: eig.eigenvectors })
    }

    /// Axis-aligned covariance `diag(variances)`.
    pub fn diagonal(a0: Vec<f64>, variances: &[f64]) -> Result<Self> {
        Self::new(a0, DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d], DMatrix::identity(d, d))
    }

    pub fn d(&self) -> usize {
        self.a0.len()
    }

    pub fn a0(&self) -> &[f64] {
        &self.a0
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `V diag(φ(λ_i)) Vᵀ`.
    fn spectral(&self, phi: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let diag = DVector::from_iterator(self.d(), self.eigenvalues.iter().map(|&l| phi(l)));
        v * DMatrix::from_diagonal(&diag) * v.transpose()
    }

    /// `a(t) = e^{−t} a0` and `Σ(t) = I + e^{−2t}(Σ0 − I)`.
    pub fn moments_at(&self, t: f64) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.d();
        let e1 = (-t).exp();
        let e2 = (-2.0 * t).exp();
        let a = self.a0.iter().map(|v| v * e1).collect();
        let id = DMatrix::identity(d, d);
        let sigma = &id + (&self.sigma0 - &id) * e2;
        (a, sigma)
    }

    /// Limiting encoder `Σ0^{−1/2}(x − a0)`.
    pub fn encoder_map(&self, x: &[f64]) -> Vec<f64> {
        let m = self.spectral(|l| 1.0 / l.sqrt());
        let y = DVector::from_iterator(self.d(), x.iter().zip(&self.a0).map(|(a, b)| a - b));
        (m * y).iter().copied().collect()
    }

    /// Exact probability-flow state at time `t` started from `x`.
    pub fn finite_time_map(&self, x: &[f64], t: f64) -> Vec<f64> {
        let f = self.spectral(|l| f_lambda_unchecked(l, t));
        let g = self.spectral(|l| g_lambda_unchecked(l, t));
        let xv = DVector::from_column_slice(x);
        let av = DVector::from_column_slice(&self.a0);
        (f * xv + g * av).iter().copied().collect()
    }

    /// `W₂²(N(a0, Σ0), N(0, I)) = ‖a0‖² + tr Σ0 + d − 2 tr Σ0^{1/2}`.
    pub fn gaussian_ot_cost(&self) -> f64 {
        let shift: f64 = self.a0.iter().map(|v| v * v).sum();
        let spec: f64 = self.eigenvalues.iter().map(|&l| l + 1.0 - 2.0 * l.sqrt()).sum();
        shift + spec
    }

    /// Density of `N(a(t), Σ(t))` at `x`.
    pub fn density_at(&self, t: f64, x: &[f64]) -> f64 {
        let (a, sigma) = self.moments_at(t);
        gaussian_pdf(&a, &sigma, x)
    }

    /// Exact score `−Σ(t)⁻¹ (x − a(t))`.
    pub fn score_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let e2 = (-2.0 * t).exp();
        let inv = self.spectral(|l| 1.0 / (1.0 + e2 * (l - 1.0)));
        let e1 = (-t).exp();
        let y = DVector::from_iterator(self.d(), x.iter().zip(&self.a0).map(|(x, a)| x - a * e1));
        (-(inv * y)).iter().copied().collect()
    }

    /// The density at time `t` sampled on `grid`. Axis-aligned covariances
    /// give an exact rank-one train; otherwise TT-cross is used at `tol`.
    pub fn grid_density(&self, grid: &ChebGrid, t: f64, tol: f64) -> Result<TtTensor> {
        if grid.d() != self.d() {
            return Err(mismatch(format!("{}-d Gaussian on a {}-d grid", self.d(), grid.d())));
        }
        let (a, sigma) = self.moments_at(t);
        let d = self.d();
        let off_diag = (0..d).any(|i| (0..d).any(|j| i != j && sigma[(i, j)] != 0.0));
        if !off_diag {
            let two_pi = 2.0 * core::f64::consts::PI;
            return grid.rank_one(|k, x| {
                let v = sigma[(k, k)];
                (-(x - a[k]).powi(2) / (2.0 * v)).exp() / (two_pi * v).sqrt()
            });
        }
        let nodes = grid.nodes();
        let mut x = vec![0.0; d];
        let opts = CrossOptions { tol, ..Default::default() };
        let out = cross(
            |idx| {
                for (xi, &i) in x.iter_mut().zip(idx) {
                    *xi = nodes[i];
                }
                gaussian_pdf(&a, &sigma, &x)
            },
            &grid.mode_sizes(),
            &opts,
        )?;
        Ok(out.tensor)
    }
}

fn gaussian_pdf(a: &[f64], sigma: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = a.len();
    let chol = match sigma.clone().cholesky() {
        Some(c) => c,
        None => return f64::NAN,
    };
    let y = DVector::from_iterator(d, x.iter().zip(a).map(|(x, a)| x - a));
    let z = chol.l().solve_lower_triangular(&y).unwrap_or(y);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let log_norm = 0.5 * (d as f64 * (2.0 * core::f64::consts::PI).ln() + logdet);
    (-0.5 * z.norm_squared() - log_norm).exp()
}

fn check_lambda_t(lambda: f64, t: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("eigenvalue must be positive, got {lambda}")));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!("time must be non-negative, got {t}")));
    }
    Ok(())
}

/// `f(λ, t) = √((e^{−2t}(λ − 1) + 1) / λ)`, the homogeneous flow factor
/// along an eigendirection with variance `λ`.
pub fn f_lambda(lambda: f64, t: f64) -> Result<f64> {
    check_lambda_t(lambda, t)?;
    Ok(f_lambda_unchecked(lambda, t))
}

fn f_lambda_unchecked(lambda: f64, t: f64) -> f64 {
    (((-2.0 * t).exp() * (lambda - 1.0) + 1.0) / lambda).sqrt()
}

/// `g(λ, t) = −√λ f(λ, t) ∫₀ᵗ e^{−τ} (e^{−2τ}(λ − 1) + 1)^{−3/2} dτ`, the
/// factor multiplying the initial mean, by adaptive quadrature.
pub fn g_lambda(lambda: f64, t: f64) -> Result<f64> {
    check_lambda_t(lambda, t)?;
    Ok(g_lambda_unchecked(lambda, t))
}

fn g_lambda_unchecked(lambda: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let integrand = |tau: f64| {
        let e = (-tau).exp();
        e / (e * e * (lambda - 1.0) + 1.0).powf(1.5)
    };
    let integral = adaptive_gauss_kronrod(&integrand, 0.0, t, 1e-13);
    -lambda.sqrt() * f_lambda_unchecked(lambda, t) * integral
}

const GK15_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Kronrod estimate and Gauss–Kronrod error bound on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(mid);
    let mut kronrod = GK15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = half * GK15_NODES[i];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += GK15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod: repeatedly bisects the piece with the
/// largest error estimate until the summed estimate is below
/// `max(tol, tol·|I|)`.
fn adaptive_gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_PIECES: usize = 4096;
    let (v, e) = gk15(f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= tol.max(tol * total.abs()) || pieces.len() >= MAX_PIECES {
            return total;
        }
        let (worst, _) =
            pieces.iter().enumerate().fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return total;
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}
