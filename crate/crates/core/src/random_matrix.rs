//! GOE sampling, correlated GOE pairs, the conditional Hessian-pair law,
//! spectral statistics and determinant-moment estimators.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{m_shift, psd_sqrt, sigma_zq_with_scales};
use crate::error::{check_degree, check_overlap, domain, Result};
use crate::stats::{pairwise_sum, replica_rng, MomentEstimate};

/// Symmetric matrix with `N(0, 1)` off-diagonal and `N(0, 2)` diagonal entries.
pub fn goe_unscaled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        m[(i, i)] = std::f64::consts::SQRT_2 * d;
        for j in i + 1..n {
            let x: f64 = rng.sample(StandardNormal);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// GOE(n): entry variances `1/n` off the diagonal and `2/n` on it.
pub fn goe_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 {
        return domain("GOE dimension must be positive");
    }
    Ok(goe_unscaled(n, rng) / (n as f64).sqrt())
}

/// Pair of GOE(n) matrices sharing a common component with weight `|r|^{p-2}`;
/// the shared part enters the first matrix with sign `(sgn r)^p`.
pub fn correlated_goe_pair<R: Rng + ?Sized>(n: usize, p: u32, r: f64, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_degree(p)?;
    if !(r.is_finite() && r.abs() <= 1.0) {
        return domain(format!("overlap r={r} must satisfy |r| <= 1"));
    }
    let w = r.abs().powi(p as i32 - 2);
    let sign1 = if r < 0.0 && p % 2 == 1 { -1.0 } else { 1.0 };
    let a1 = goe_sample(n, rng)?;
    let a2 = goe_sample(n, rng)?;
    let c = goe_sample(n, rng)?;
    let (own, shared) = ((1.0 - w).sqrt(), w.sqrt());
    Ok((&a1 * own + &c * (sign1 * shared), a2 * own + c * shared))
}

/// Precomputed law of the two scaled conditional Hessians at overlap `r`.
#[derive(Debug, Clone)]
pub struct HessianPairLaw {
    pub p: u32,
    pub n: usize,
    pub r: f64,
    z_sqrt: Matrix2<f64>,
    q_sqrt: Matrix2<f64>,
    /// `m₁ = m_coef.0·u₁ + m_coef.1·u₂`, already divided by `√((N-1)p(p-1))`.
    m_coef: (f64, f64),
    shift: f64,
}

impl HessianPairLaw {
    pub fn new(p: u32, n: usize, r: f64) -> Result<Self> {
        check_degree(p)?;
        check_overlap(r)?;
        if n < 3 {
            return domain("the Hessian-pair law needs N >= 3");
        }
        let (z, q, z_scale, q_scale) = sigma_zq_with_scales(p, r)?;
        let pf = p as f64;
        let nf = n as f64;
        let s2 = (nf - 1.0) * pf * (pf - 1.0);
        let (a, _) = m_shift(p, r, 1.0, 0.0)?;
        let (b, _) = m_shift(p, r, 0.0, 1.0)?;
        let s = s2.sqrt();
        Ok(Self {
            p,
            n,
            r,
            z_sqrt: psd_sqrt(&(z / s2), z_scale / s2)?,
            q_sqrt: psd_sqrt(&(q / s2), q_scale / s2)?,
            m_coef: (a / s, b / s),
            shift: (pf / ((pf - 1.0) * (nf - 1.0))).sqrt(),
        })
    }

    /// Conditional mean of the bottom-right entries, `(m₁, m₂)/√((N-1)p(p-1))`.
    pub fn corner_shift(&self, u1: f64, u2: f64) -> (f64, f64) {
        (self.m_coef.0 * u1 + self.m_coef.1 * u2, self.m_coef.0 * u2 + self.m_coef.1 * u1)
    }

    pub fn diagonal_shift(&self) -> f64 {
        self.shift
    }

    /// Draws `(M⁽¹⁾, M⁽²⁾)` given `f(n) = u₁`, `f(σ) = u₂` (unnormalized values).
    pub fn sample<R: Rng + ?Sized>(&self, u1: f64, u2: f64, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.n - 1;
        let last = d - 1;
        let (g1, g2) = correlated_goe_pair(d - 1, self.p, self.r, rng)?;
        let scale = ((self.n as f64 - 2.0) / (self.n as f64 - 1.0)).sqrt();
        let mut m1 = DMatrix::zeros(d, d);
        let mut m2 = DMatrix::zeros(d, d);
        m1.view_mut((0, 0), (last, last)).copy_from(&(g1 * scale));
        m2.view_mut((0, 0), (last, last)).copy_from(&(g2 * scale));
        for j in 0..last {
            let e = nalgebra::Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let z = self.z_sqrt * e;
            m1[(j, last)] = z[0];
            m1[(last, j)] = z[0];
            m2[(j, last)] = z[1];
            m2[(last, j)] = z[1];
        }
        let e = nalgebra::Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let q = self.q_sqrt * e;
        let (c1, c2) = self.corner_shift(u1, u2);
        m1[(last, last)] = q[0] + c1;
        m2[(last, last)] = q[1] + c2;
        for i in 0..d {
            m1[(i, i)] -= self.shift * u1;
            m2[(i, i)] -= self.shift * u2;
        }
        Ok((m1, m2))
    }
}

pub fn hessian_pair_sample<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    r: f64,
    u1: f64,
    u2: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    HessianPairLaw::new(p, n, r)?.sample(u1, u2, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub max_abs: f64,
    pub semicircle_distance: f64,
}

/// Semicircle distribution function.
pub fn semicircle_cdf(x: f64) -> f64 {
    let x = x.clamp(-2.0, 2.0);
    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * std::f64::consts::PI) + (x / 2.0).asin() / std::f64::consts::PI
}

/// `∫_{-2}^{x} t dμ*(t)`.
fn semicircle_first_moment(x: f64) -> f64 {
    let x = x.clamp(-2.0, 2.0);
    -(4.0 - x * x).powf(1.5) / (6.0 * std::f64::consts::PI)
}

/// `∫ (1 - |x - c|)₊ dμ*(x)`.
fn tent_semicircle(c: f64) -> f64 {
    let (a, b) = (c - 1.0, c + 1.0);
    // (1 - c + x) on [c-1, c] and (1 + c - x) on [c, c+1]
    (1.0 - c) * (semicircle_cdf(c) - semicircle_cdf(a)) + semicircle_first_moment(c) - semicircle_first_moment(a)
        + (1.0 + c) * (semicircle_cdf(b) - semicircle_cdf(c))
        - (semicircle_first_moment(b) - semicircle_first_moment(c))
}

/// Largest gap between empirical and semicircle integrals of the tent
/// functions `(1 - |x - c|)₊` centred on 101 points of `[-3, 3]`.
pub fn semicircle_distance(eigenvalues: &[f64]) -> f64 {
    let n = eigenvalues.len() as f64;
    (0..101)
        .map(|k| {
            let c = -3.0 + 6.0 * k as f64 / 100.0;
            let emp: Vec<f64> = eigenvalues.iter().map(|&l| (1.0 - (l - c).abs()).max(0.0)).collect();
            (pairwise_sum(&emp) / n - tent_semicircle(c)).abs()
        })
        .fold(0.0, f64::max)
}

pub fn spectral_summary(m: &DMatrix<f64>) -> Result<SpectralSummary> {
    if !m.is_square() || m.nrows() == 0 {
        return domain("spectral summary needs a non-empty square matrix");
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 {
        return domain(format!("matrix is not symmetric (max asymmetry {asym})"));
    }
    let mut eigenvalues: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let max_abs = eigenvalues[0].abs().max(eigenvalues[eigenvalues.len() - 1].abs());
    Ok(SpectralSummary { n: m.nrows(), semicircle_distance: semicircle_distance(&eigenvalues), eigenvalues, max_abs })
}

/// `log|det m|` from the pivots of an LU factorization.
pub fn log_abs_det(m: DMatrix<f64>) -> f64 {
    let lu = m.lu();
    lu.u().diagonal().iter().map(|x| x.abs().ln()).sum()
}

/// Monte Carlo estimate of `𝔼|det(X_n - shift·I)|^power`, `X_n ~ GOE(n)`.
pub fn det_abs_moment(n: usize, shift: f64, power: u32, samples: usize, seed: u64) -> Result<MomentEstimate> {
    if !(power == 1 || power == 2) {
        return domain("power must be 1 or 2");
    }
    if samples < 100 {
        return domain("at least 100 samples are required");
    }
    if n == 0 {
        return domain("dimension must be positive");
    }
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let mut x = goe_unscaled(n, &mut rng) / (n as f64).sqrt();
            for k in 0..n {
                x[(k, k)] -= shift;
            }
            power as f64 * log_abs_det(x)
        })
        .collect();
    MomentEstimate::from_log_values(&logs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhatPoint {
    pub rho: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhatCurve {
    pub n: usize,
    pub shift: f64,
    pub samples: usize,
    pub points: Vec<GhatPoint>,
    /// Covariance matrix of the estimated means (row-major, k×k), used for
    /// standard errors of contrasts between grid points.
    pub mean_covariance: Vec<Vec<f64>>,
}

impl GhatCurve {
    /// Estimate and standard error of `Σ c_k ĝ(ρ_k)`.
    pub fn contrast(&self, coeffs: &[f64]) -> (f64, f64) {
        let v: f64 = coeffs.iter().zip(&self.points).map(|(c, p)| c * p.value).sum();
        let mut var = 0.0;
        for (i, ci) in coeffs.iter().enumerate() {
            for (j, cj) in coeffs.iter().enumerate() {
                var += ci * cj * self.mean_covariance[i][j];
            }
        }
        (v, var.max(0.0).sqrt())
    }

    pub fn index_of(&self, rho: f64) -> Option<usize> {
        self.points.iter().position(|p| (p.rho - rho).abs() < 1e-12)
    }
}

/// Running mean and co-moment matrix of replica vectors (Chan's merge).
#[derive(Debug, Clone)]
struct VecStats {
    n: f64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl VecStats {
    fn new(k: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; k], comoment: vec![0.0; k * k] }
    }

    fn push(&mut self, x: &[f64]) {
        let k = x.len();
        self.n += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for i in 0..k {
            self.mean[i] += delta[i] / self.n;
        }
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        let k = self.mean.len();
        let n = self.n + other.n;
        if other.n == 0.0 {
            return self;
        }
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += other.comoment[i * k + j] + delta[i] * delta[j] * self.n * other.n / n;
            }
        }
        for i in 0..k {
            self.mean[i] += delta[i] * other.n / n;
        }
        self.n = n;
        self
    }
}

const BLOCK: usize = 4096;

/// `ĝ(ρ) = 𝔼{det(W₁/√n - shift·I) det(W₂/√n - shift·I)}` on a grid of ρ, with
/// one draw of `(A₁, A₂, C)` per replica shared by every ρ.
pub fn ghat_curve(n: usize, shift: f64, rho_grid: &[f64], samples: usize, seed: u64) -> Result<GhatCurve> {
    if n == 0 {
        return domain("dimension must be positive");
    }
    if samples < 2 {
        return domain("at least two samples are required");
    }
    if rho_grid.is_empty() || rho_grid.iter().any(|r| !(r.abs() <= 1.0)) {
        return domain("rho grid must be a non-empty subset of [-1, 1]");
    }
    let k = rho_grid.len();
    let sqrt_n = (n as f64).sqrt();
    let blocks = samples.div_ceil(BLOCK);
    let parts: Vec<VecStats> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut st = VecStats::new(k);
            let mut vals = vec![0.0; k];
            for i in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                let mut rng: ChaCha8Rng = replica_rng(seed, i as u64);
                let a1 = goe_unscaled(n, &mut rng);
                let a2 = goe_unscaled(n, &mut rng);
                let c = goe_unscaled(n, &mut rng);
                for (slot, &rho) in rho_grid.iter().enumerate() {
                    let own = (1.0 - rho.abs()).sqrt();
                    let shared = rho.abs().sqrt();
                    let sign2 = if rho < 0.0 { -1.0 } else { 1.0 };
                    let mut w1 = (&a1 * own + &c * shared) / sqrt_n;
                    let mut w2 = (&a2 * own + &c * (sign2 * shared)) / sqrt_n;
                    for t in 0..n {
                        w1[(t, t)] -= shift;
                        w2[(t, t)] -= shift;
                    }
                    vals[slot] = w1.determinant() * w2.determinant();
                }
                st.push(&vals);
            }
            st
        })
        .collect();
    let total = parts.iter().fold(VecStats::new(k), |acc, p| acc.merge(p));
    let nn = total.n;
    let mean_covariance: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| total.comoment[i * k + j] / (nn - 1.0) / nn).collect()).collect();
    let points = rho_grid
        .iter()
        .enumerate()
        .map(|(i, &rho)| GhatPoint { rho, value: total.mean[i], std_error: mean_covariance[i][i].sqrt() })
        .collect();
    Ok(GhatCurve { n, shift, samples, points, mean_covariance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub n: usize,
    pub rank: usize,
    pub trials: usize,
    pub violations: usize,
    /// Largest observed `|det(C₁+C₂)| / bound`.
    pub max_ratio: f64,
}

/// Random checks of `|det(C₁+C₂)| ≤ |det C₁|·(1 + λ_max|C₂| / λ_min|C₁|)^d`
/// for symmetric `C₁` and symmetric rank-`d` `C₂`.
pub fn det_perturb_check(n: usize, d: usize, trials: usize, seed: u64) -> Result<PerturbReport> {
    if !(d == 1 || d == 2) || n < d {
        return domain("rank must be 1 or 2 and at most n");
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = replica_rng(seed, t as u64);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut c1 = goe_unscaled(n, &mut rng) / (n as f64).sqrt();
            for i in 0..n {
                c1[(i, i)] += 3.0 * sign;
            }
            let mut c2 = DMatrix::zeros(n, n);
            for _ in 0..d {
                let v = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = &v / v.norm();
                let scale = 10f64.powf(rng.random_range(-2.0..2.0));
                let a: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                c2 += &v * v.transpose() * a;
            }
            let e1 = c1.clone().symmetric_eigenvalues();
            let e2 = c2.clone().symmetric_eigenvalues();
            let min1 = e1.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            let max2 = e2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lhs = (&c1 + &c2).determinant().abs();
            let bound = c1.determinant().abs() * (1.0 + max2 / min1).powi(d as i32);
            lhs / bound
        })
        .collect();
    Ok(PerturbReport {
        n,
        rank: d,
        trials,
        violations: ratios.iter().filter(|&&r| r > 1.0 + 1e-10).count(),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n: usize,
    pub m: f64,
    pub samples: usize,
    pub exceedances: usize,
    pub frequency: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Informational: `frequency ≤ bound + 3·std_error`.
    pub within_bound: bool,
}

/// Empirical `P(max|λ| ≥ m)` for GOE(n) against `e^{-n m²/9}`.
pub fn tail_check(n: usize, m: f64, samples: usize, seed: u64) -> Result<TailReport> {
    if !(m >= 2.2) {
        return domain("threshold m must be at least 2.2");
    }
    if n == 0 || samples < 2 {
        return domain("need n >= 1 and at least two samples");
    }
    let hits: usize = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let x = goe_unscaled(n, &mut rng) / (n as f64).sqrt();
            x.symmetric_eigenvalues().iter().any(|l| l.abs() >= m) as usize
        })
        .sum();
    let freq = hits as f64 / samples as f64;
    let se = (freq * (1.0 - freq) / samples as f64).sqrt();
    let bound = (-(n as f64) * m * m / 9.0).exp();
    Ok(TailReport {
        n,
        m,
        samples,
        exceedances: hits,
        frequency: freq,
        std_error: se,
        bound,
        within_bound: freq <= bound + 3.0 * se,
    })
}
