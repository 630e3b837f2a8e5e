//! Random test densities and their certified grid representations.
//!
//! Two families are generated:
//!
//! * uniform mixtures of `K ∈ {1, …, 5}` quartic-exponential components
//!   `exp(−(x−a₁)ᵀQ₁(x−a₁) − ((x−a₂)²)ᵀQ₂(x−a₂)²) / Z` (squares taken
//!   elementwise), for `d ≤ 3`;
//! * a rank-2 train with positive `U(0, 1)` cores multiplied by the standard
//!   normal density, for any `d`.
//!
//! Before a density enters the solver its boundary faces must be negligible:
//! [`normalize_and_certify`] shrinks it toward the centre of the box until
//! every face value is at most `1e-12` of the peak.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheb::{cc_weights, cheb_nodes, ChebGrid};
use crate::error::{invalid, mismatch, Error, Result};
use crate::gaussian::GaussianSpec;
use crate::tt::{cross, CrossOptions, TtTensor};

/// Largest admissible ratio of a boundary-face value to the peak.
pub const BOUNDARY_RATIO: f64 = 1e-12;
/// Coordinate stretch applied per failed certificate.
pub const RESCALE_FACTOR: f64 = 1.25;
pub const MAX_RESCALES: usize = 10;

/// Sampling law of the mixture parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MixtureLaw {
    /// Centres are uniform on `[−center_range, center_range]^d`.
    pub center_range: f64,
    /// `Q = scale·A Aᵀ + shift·I` with `A` uniform on `(−1, 1)`.
    pub q_scale: f64,
    pub q_shift: f64,
    /// Extra factor on the quartic matrix `Q₂`.
    pub quartic_factor: f64,
    pub max_components: usize,
    /// Half-width of the box used to normalise each component.
    pub box_half_width: f64,
}

impl Default for MixtureLaw {
    fn default() -> Self {
        Self {
            center_range: 2.0,
            q_scale: 0.5,
            q_shift: 0.3,
            quartic_factor: 0.05,
            max_components: 5,
            box_half_width: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuarticComponent {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Row-major `d × d`.
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    /// Normalising constant over the box.
    pub z: f64,
}

impl QuarticComponent {
    pub fn d(&self) -> usize {
        self.a1.len()
    }

    /// `q₁(x) + q₂(x)`.
    pub fn exponent(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let mut q = 0.0;
        for i in 0..d {
            let ui = x[i] - self.a1[i];
            let vi = (x[i] - self.a2[i]).powi(2);
            for j in 0..d {
                let uj = x[j] - self.a1[j];
                let vj = (x[j] - self.a2[j]).powi(2);
                q += self.q1[i * d + j] * ui * uj + self.q2[i * d + j] * vi * vj;
            }
        }
        q
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (-self.exponent(x)).exp() / self.z
    }
}

/// A uniform mixture of quartic components, replayable from its seed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureSpec {
    pub d: usize,
    pub k: usize,
    pub components: Vec<QuarticComponent>,
    pub seed: u64,
    pub law: MixtureLaw,
}

impl MixtureSpec {
    /// `(1/K) Σ p_i(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum::<f64>() / self.k as f64
    }
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, scale: f64, shift: f64) -> Vec<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = (&a * a.transpose()) * scale + DMatrix::identity(d, d) * shift;
    // exact symmetry
    (0..d * d)
        .map(|ij| {
            let (i, j) = (ij / d, ij % d);
            0.5 * (q[(i, j)] + q[(j, i)])
        })
        .collect()
}

/// Nodes per mode of the quadrature used for the component constants.
fn normalization_nodes(d: usize) -> usize {
    match d {
        1 | 2 => 129,
        _ => 101,
    }
}

/// Box integral of `exp(−q(x))` by tensor Clenshaw–Curtis quadrature.
fn component_integral(c: &QuarticComponent, half_width: f64) -> Result<f64> {
    let d = c.d();
    let n = normalization_nodes(d);
    let x = cheb_nodes(n, -half_width, half_width)?;
    let w = cc_weights(n, -half_width, half_width)?;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for k in 0..d {
            point[k] = x[idx[k]];
            weight *= w[idx[k]];
        }
        total += weight * (-c.exponent(&point)).exp();
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return Ok(total);
            }
        }
    }
}

/// Draws a quartic mixture with the default parameter law.
pub fn gen_quartic_mixture(d: usize, seed: u64) -> Result<MixtureSpec> {
    gen_quartic_mixture_with(d, seed, &MixtureLaw::default())
}

pub fn gen_quartic_mixture_with(d: usize, seed: u64, law: &MixtureLaw) -> Result<MixtureSpec> {
    if !(2..=3).contains(&d) {
        return Err(invalid(format!("quartic mixtures are defined for d = 2 or 3, got {d}")));
    }
    if law.max_components == 0 || !(law.q_shift > 0.0) || !(law.quartic_factor > 0.0) {
        return Err(invalid("mixture law needs components >= 1 and positive Q shifts"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=law.max_components);
    let r = law.center_range;
    let mut components = Vec::with_capacity(k);
    for _ in 0..k {
        let a1 = (0..d).map(|_| rng.random_range(-r..=r)).collect();
        let a2 = (0..d).map(|_| rng.random_range(-r..=r)).collect();
        let q1 = random_spd(&mut rng, d, law.q_scale, law.q_shift);
        let q2 =
            random_spd(&mut rng, d, law.q_scale, law.q_shift).into_iter().map(|v| v * law.quartic_factor).collect();
        let mut c = QuarticComponent { a1, a2, q1, q2, z: 1.0 };
        c.z = component_integral(&c, law.box_half_width)?;
        if !(c.z > 0.0 && c.z.is_finite()) {
            return Err(Error::Numerical(format!("component integral {}", c.z)));
        }
        components.push(c);
    }
    Ok(MixtureSpec { d, k, components, seed, law: law.clone() })
}

/// Grid tensor `q ⊙ φ_c` where `q` is a rank-2 train with `U(0, 1)` cores
/// drawn from `seed` and `φ_c(x) = (2π)^{−d/2} exp(−c²‖x‖²/2)`. It is not
/// normalised.
pub fn tt_random_factor(grid: &ChebGrid, seed: u64, scale: f64) -> Result<TtTensor> {
    let d = grid.d();
    let n = grid.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks = vec![2usize; d + 1];
    ranks[0] = 1;
    ranks[d] = 1;
    let cores = (0..d).map(|k| (0..ranks[k] * n * ranks[k + 1]).map(|_| rng.random::<f64>()).collect()).collect();
    let q = TtTensor::new(grid.mode_sizes(), ranks, cores)?;
    let norm = (2.0 * core::f64::consts::PI).sqrt();
    let gauss = grid.rank_one(|_, x| (-0.5 * (scale * x).powi(2)).exp() / norm)?;
    q.hadamard(&gauss)
}

/// The normalised rank-2 × Gaussian density on `grid` (ranks ≤ 2).
pub fn gen_tt_random(grid: &ChebGrid, seed: u64) -> Result<TtTensor> {
    if grid.d() < 2 {
        return Err(invalid("the random-train family needs d >= 2"));
    }
    let p = tt_random_factor(grid, seed, 1.0)?;
    let z = grid.integrate(&p)?;
    Ok(p.scale(1.0 / z))
}

/// Random Gaussian whose grid density passes the boundary certificate on
/// `[−8, 8]^d`: mean uniform on `[−1, 1]^d`, random rotation, variances
/// uniform on `[0.3, 0.85]`.
pub fn gen_gaussian_spec(d: usize, seed: u64) -> Result<GaussianSpec> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.random_range(0.3..=0.85)));
    let s = &q * lambda * q.transpose();
    let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    GaussianSpec::new(a0, sym)
}

/// A density to be put on the grid and certified.
pub enum DensitySource<'a> {
    /// Pointwise values; rescaling evaluates `f(c x)` and TT-cross builds
    /// the train.
    Function(&'a dyn Fn(&[f64]) -> f64),
    /// A grid function. It carries no values beyond the box, so it cannot be
    /// stretched: it is certified as given or rejected.
    Tensor(&'a TtTensor),
    /// Builds the grid tensor for a coordinate scale `c`.
    Builder(&'a dyn Fn(f64) -> Result<TtTensor>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertifyOptions {
    pub cross: CrossOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { cross: CrossOptions { tol: 1e-8, max_rank: 30, ..Default::default() } }
    }
}

/// A unit-mass grid density with its certificate.
#[derive(Debug, Clone)]
pub struct CertifiedDensity {
    pub tensor: TtTensor,
    pub rescales: usize,
    /// Coordinate stretch `c`: the certified density is `p(c x)` up to mass.
    pub scale: f64,
    /// Certified upper bound on the boundary-to-peak ratio.
    pub boundary_ratio: f64,
    /// Whether the ratio is exact (dense scan) or a bound.
    pub exact_ratio: bool,
    pub cross_error: Option<f64>,
    pub rank_capped: bool,
}

/// Boundary-face maximum over the peak. Exact by dense scan on small grids,
/// otherwise an upper bound from core maxima over a lower bound on the peak.
pub fn boundary_ratio(grid: &ChebGrid, t: &TtTensor) -> Result<(f64, bool)> {
    grid.check_tensor(t)?;
    let d = grid.d();
    let n = grid.n();
    let total = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(n));
    if let Some(total) = total.filter(|&t| t <= 4_000_000) {
        let dense = t.to_dense();
        let data = dense.data();
        let mut peak = 0.0f64;
        let mut face = 0.0f64;
        let mut idx = vec![0usize; d];
        for (flat, &v) in data.iter().enumerate().take(total) {
            let mut rem = flat;
            for k in (0..d).rev() {
                idx[k] = rem % n;
                rem /= n;
            }
            let a = v.abs();
            peak = peak.max(a);
            if idx.iter().any(|&i| i == 0 || i == n - 1) {
                face = face.max(a);
            }
        }
        return Ok((if peak > 0.0 { face / peak } else { f64::INFINITY }, true));
    }
    let peak = t.max_abs_estimate();
    let face = (0..d).flat_map(|k| [(k, 0), (k, n - 1)]).map(|(k, i)| t.face_abs_bound(k, i)).fold(0.0, f64::max);
    Ok((if peak > 0.0 { face / peak } else { f64::INFINITY }, false))
}

/// Puts `source` on `grid` with unit mass, stretching coordinates by
/// `1.25` per attempt until the boundary certificate holds.
pub fn normalize_and_certify(
    source: DensitySource<'_>,
    grid: &ChebGrid,
    opts: &CertifyOptions,
) -> Result<CertifiedDensity> {
    let nodes = grid.nodes();
    let mut last_ratio = f64::INFINITY;
    for rescales in 0..=MAX_RESCALES {
        let c = RESCALE_FACTOR.powi(rescales as i32);
        let (tensor, cross_error, rank_capped) = match &source {
            DensitySource::Function(f) => {
                let mut x = vec![0.0; grid.d()];
                let out = cross(
                    |idx| {
                        for (xi, &i) in x.iter_mut().zip(idx) {
                            *xi = c * nodes[i];
                        }
                        f(&x)
                    },
                    &grid.mode_sizes(),
                    &opts.cross,
                )?;
                (out.tensor, Some(out.validation_error), out.rank_capped)
            }
            DensitySource::Tensor(t) => {
                grid.check_tensor(t)?;
                ((*t).clone(), None, false)
            }
            DensitySource::Builder(b) => (b(c)?, None, false),
        };
        if tensor.mode_sizes() != grid.mode_sizes().as_slice() {
            return Err(mismatch("density tensor does not match the grid"));
        }
        let (ratio, exact) = boundary_ratio(grid, &tensor)?;
        last_ratio = ratio;
        if ratio > BOUNDARY_RATIO && matches!(source, DensitySource::Tensor(_)) {
            return Err(Error::Certificate { rescales: 0, ratio });
        }
        if ratio <= BOUNDARY_RATIO {
            let mass = grid.integrate(&tensor)?;
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::Numerical(format!("density has mass {mass}")));
            }
            return Ok(CertifiedDensity {
                tensor: tensor.scale(1.0 / mass),
                rescales,
                scale: c,
                boundary_ratio: ratio,
                exact_ratio: exact,
                cross_error,
                rank_capped,
            });
        }
    }
    Err(Error::Certificate { rescales: MAX_RESCALES, ratio: last_ratio })
}
