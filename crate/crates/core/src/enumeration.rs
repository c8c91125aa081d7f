//! Direct small-N experiments: dense p-spin Hamiltonians, Riemannian
//! derivatives on the sphere of radius `√N`, critical-point search, and the
//! concentration and ground-state experiments built on it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special_functions::thresholds;
use crate::stats::{pairwise_sum, replica_rng, stage_seed};

/// Largest coefficient tensor `sample_hamiltonian` allocates (`12³`).
pub const DEFAULT_COEFFICIENT_BUDGET: usize = 1728;
pub const DEFAULT_CIRCLE_RESOLUTION: usize = 100_000;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const FULL_STEP_GROWTH: f64 = 10.0;

/// `H(σ) = N^{-(p-1)/2} Σ J_{i₁…i_p} σ_{i₁}⋯σ_{i_p}` with i.i.d. standard
/// normal `J`, stored densely in row-major multi-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    pub p: u32,
    pub n: usize,
    pub coefficients: Vec<f64>,
    /// Average of `J` over index permutations; all derivatives contract it.
    #[serde(skip)]
    symmetric: Vec<f64>,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for perm in permutations(k - 1) {
        for pos in 0..=perm.len() {
            let mut next = perm.clone();
            next.insert(pos, k - 1);
            out.push(next);
        }
    }
    out
}

fn symmetrize(p: usize, n: usize, j: &[f64]) -> Vec<f64> {
    let perms = permutations(p);
    let weight = 1.0 / perms.len() as f64;
    let mut digits = vec![0usize; p];
    let mut out = vec![0.0; j.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut rest = flat;
        for d in digits.iter_mut().rev() {
            *d = rest % n;
            rest /= n;
        }
        let terms: Vec<f64> = perms
            .iter()
            .map(|perm| j[perm.iter().fold(0, |acc, &q| acc * n + digits[q])])
            .collect();
        *slot = weight * pairwise_sum(&terms);
    }
    out
}

impl Hamiltonian {
    pub fn from_coefficients(p: u32, n: usize, coefficients: Vec<f64>) -> Result<Self> {
        if p < 2 || n < 2 {
            return domain(format!("Hamiltonian needs p >= 2 and N >= 2, got p={p}, N={n}"));
        }
        let len = n.checked_pow(p).ok_or_else(|| Error::Budget("coefficient count overflows".into()))?;
        if coefficients.len() != len {
            return domain(format!("expected {len} coefficients, got {}", coefficients.len()));
        }
        let symmetric = symmetrize(p as usize, n, &coefficients);
        Ok(Self { p, n, coefficients, symmetric })
    }

    fn scale(&self) -> f64 {
        (self.n as f64).powf(-(self.p as f64 - 1.0) / 2.0)
    }

    /// `S[·, ·, σ, …, σ]`, the symmetric tensor contracted down to a matrix.
    fn contracted_matrix(&self, sigma: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut t = self.symmetric.clone();
        for _ in 2..self.p {
            t = t.chunks_exact(n).map(|row| row.iter().zip(sigma).map(|(a, b)| a * b).sum()).collect();
        }
        DMatrix::from_row_slice(n, n, &t)
    }

    pub fn value(&self, sigma: &[f64]) -> f64 {
        let s = DVector::from_column_slice(sigma);
        self.scale() * (self.contracted_matrix(sigma) * &s).dot(&s)
    }

    /// Euclidean value, gradient and Hessian at `σ`.
    pub fn euclidean_derivatives(&self, sigma: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let pf = self.p as f64;
        let c = self.scale();
        let m = self.contracted_matrix(sigma);
        let s = DVector::from_column_slice(sigma);
        let ms = &m * &s;
        (c * ms.dot(&s), ms * (c * pf), m * (c * pf * (pf - 1.0)))
    }
}

pub fn sample_hamiltonian_with_budget<R: Rng + ?Sized>(p: u32, n: usize, budget: usize, rng: &mut R) -> Result<Hamiltonian> {
    if p < 2 || n < 2 {
        return domain(format!("Hamiltonian needs p >= 2 and N >= 2, got p={p}, N={n}"));
    }
    let len = n.checked_pow(p).filter(|&l| l <= budget).ok_or_else(|| {
        Error::Budget(format!("N^p = {n}^{p} coefficients exceed the budget of {budget}"))
    })?;
    let coefficients = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    Hamiltonian::from_coefficients(p, n, coefficients)
}

pub fn sample_hamiltonian<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R) -> Result<Hamiltonian> {
    sample_hamiltonian_with_budget(p, n, DEFAULT_COEFFICIENT_BUDGET, rng)
}

/// Value, Riemannian gradient and Riemannian Hessian on the sphere of
/// radius `√N`, as ambient `N`-vectors and `N×N` operators on the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannianDerivatives {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub fn riemannian_grad_hess(h: &Hamiltonian, sigma: &[f64]) -> Result<RiemannianDerivatives> {
    if sigma.len() != h.n {
        return domain(format!("point has dimension {}, Hamiltonian has N={}", sigma.len(), h.n));
    }
    let nf = h.n as f64;
    let norm = sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - nf.sqrt()).abs() > 1e-10 * nf.sqrt().max(1.0) {
        return domain(format!("point has norm {norm}, expected sqrt(N) = {}", nf.sqrt()));
    }
    Ok(riemannian_unchecked(h, sigma))
}

fn riemannian_unchecked(h: &Hamiltonian, sigma: &[f64]) -> RiemannianDerivatives {
    let nf = h.n as f64;
    let (value, g, hess_e) = h.euclidean_derivatives(sigma);
    let s = DVector::from_column_slice(sigma);
    let proj = DMatrix::identity(h.n, h.n) - &s * s.transpose() / nf;
    let radial = g.dot(&s) / nf;
    let grad = &proj * g;
    let hess = &proj * hess_e * &proj - &proj * radial;
    RiemannianDerivatives { value, grad, hess }
}

fn retract(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() as f64;
    v * (n.sqrt() / v.norm())
}

/// Critical points found for one Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub p: u32,
    pub n: usize,
    /// Points on the sphere of radius `√N`.
    pub points: Vec<Vec<f64>>,
    /// `H(σ)/N` per point.
    pub values: Vec<f64>,
    /// Riemannian gradient norms.
    pub residuals: Vec<f64>,
    /// `antipodes[i]` is the index of `-points[i]`.
    pub antipodes: Vec<usize>,
    pub diagnostics: SolverDiagnostics,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Newton starts, or grid points for the circle search.
    pub n_starts: usize,
    pub converged_starts: usize,
    pub diverged_starts: usize,
    /// `(start index, distinct points so far)` each time new points appeared.
    pub discovery: Vec<(usize, usize)>,
    /// No new point appeared in the last half of the starts.
    pub saturated: bool,
    /// The set is complete up to grid resolution (N = 2 only).
    pub complete: bool,
}

impl CriticalPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points with `H/N` in `(lower, upper)`.
    pub fn count_between(&self, lower: f64, upper: f64) -> usize {
        self.values.iter().filter(|&&v| v > lower && v < upper).count()
    }

    pub fn count_below(&self, u: f64) -> usize {
        self.count_between(f64::NEG_INFINITY, u)
    }

    /// Smallest `H/N` over the found points.
    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }
}

fn geodesic_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let cos = (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n).clamp(-1.0, 1.0);
    n.sqrt() * cos.acos()
}

struct PointSetBuilder<'a> {
    h: &'a Hamiltonian,
    radius: f64,
    points: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

impl<'a> PointSetBuilder<'a> {
    fn new(h: &'a Hamiltonian, radius: f64) -> Self {
        Self { h, radius, points: Vec::new(), residuals: Vec::new() }
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.points.iter().any(|q| geodesic_distance(q, x) <= self.radius)
    }

    /// Inserts `x` and `-x` unless already present; returns whether `x` was new.
    fn insert_with_antipode(&mut self, x: Vec<f64>, residual: f64) -> bool {
        if self.contains(&x) {
            return false;
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        self.points.push(x);
        self.residuals.push(residual);
        if !self.contains(&neg) {
            let res = riemannian_unchecked(self.h, &neg).grad.norm();
            self.points.push(neg);
            self.residuals.push(res);
        }
        true
    }

    fn finish(self, diagnostics: SolverDiagnostics, mut warnings: Vec<String>) -> CriticalPointSet {
        let nf = self.h.n as f64;
        let values: Vec<f64> = self.points.iter().map(|x| self.h.value(x) / nf).collect();
        let antipodes: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let (j, d) = self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(j, q)| (j, geodesic_distance(q, &neg)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((i, f64::INFINITY));
                if d > self.radius {
                    warnings.push(format!("point {i} has no antipode within the dedupe radius"));
                }
                j
            })
            .collect();
        CriticalPointSet {
            p: self.h.p,
            n: self.h.n,
            points: self.points,
            values,
            residuals: self.residuals,
            antipodes,
            diagnostics,
            warnings,
        }
    }
}

/// All critical points of an `N = 2` Hamiltonian, located as sign changes of
/// `dH/dθ` on `resolution` grid points of the half circle `[0, π)` and
/// polished by bisection; the other half follows by antipody.
pub fn circle_enumerate(h: &Hamiltonian, resolution: usize) -> Result<CriticalPointSet> {
    if h.n != 2 {
        return domain(format!("circle enumeration needs N = 2, got N = {}", h.n));
    }
    if h.p > 10 {
        return domain(format!("circle enumeration supports p <= 10, got p = {}", h.p));
    }
    if resolution < 4 * h.p as usize {
        return domain(format!("resolution {resolution} is too coarse for degree {}", h.p));
    }
    let r = std::f64::consts::SQRT_2;
    let p = h.p as usize;
    // H(√2 cos θ, √2 sin θ) = Σ_k a_k cos^{p-k} θ sin^k θ, where a_k collects the
    // coefficients whose multi-index has k entries equal to 1.
    let mut a = vec![0.0; p + 1];
    for (flat, &j) in h.coefficients.iter().enumerate() {
        a[flat.count_ones() as usize] += j;
    }
    let amp = h.scale() * r.powi(p as i32);
    let point = |t: f64| vec![r * t.cos(), r * t.sin()];
    let dh = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        let mut cp = [1.0; 12];
        let mut sp = [1.0; 12];
        for k in 1..=p + 1 {
            cp[k] = cp[k - 1] * c;
            sp[k] = sp[k - 1] * s;
        }
        let mut acc = 0.0;
        for k in 0..=p {
            let down = if k < p { -((p - k) as f64) * cp[p - k - 1] * sp[k + 1] } else { 0.0 };
            let up = if k > 0 { k as f64 * cp[p - k + 1] * sp[k - 1] } else { 0.0 };
            acc += a[k] * (down + up);
        }
        amp * acc
    };
    let step = std::f64::consts::PI / resolution as f64;
    let d: Vec<f64> = (0..=resolution).map(|i| dh(i as f64 * step)).collect();
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut roots = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..resolution {
        let (a, b) = (d[i], d[i + 1]);
        if a == 0.0 {
            roots.push(i as f64 * step);
        } else if a * b < 0.0 {
            let (mut lo, mut hi) = (i as f64 * step, (i + 1) as f64 * step);
            let mut f_lo = a;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = dh(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (f_lo < 0.0) {
                    lo = mid;
                    f_lo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        if i > 0 {
            let (prev, cur, next) = (d[i - 1], d[i], d[i + 1]);
            let dip = cur.abs() < prev.abs() && cur.abs() < next.abs() && (prev < 0.0) == (next < 0.0);
            if dip && cur.abs() < 1e-6 * scale {
                warnings.push(format!("possible unresolved tangential root near theta={:.6}", i as f64 * step));
            }
        }
    }
    if roots.len() > h.p as usize {
        warnings.push(format!("{} roots on the half circle exceed the degree bound {}", roots.len(), h.p));
    }
    let mut builder = PointSetBuilder::new(h, 1e-12);
    for t in roots {
        let x = point(t);
        let residual = dh(t).abs() / r;
        builder.insert_with_antipode(x, residual);
    }
    let count = builder.points.len();
    let diagnostics = SolverDiagnostics {
        n_starts: resolution,
        converged_starts: count,
        diverged_starts: 0,
        discovery: vec![(resolution, count)],
        saturated: true,
        complete: warnings.is_empty(),
    };
    Ok(builder.finish(diagnostics, warnings))
}

/// Projected Newton iteration on `grad = 0`. The full step is taken unless it
/// inflates the gradient norm by more than `FULL_STEP_GROWTH`, in which case a
/// backtracking search demands decrease. A monotone search from the first
/// step starves the small Newton basins of some saddles; `None` when the
/// iteration stalls.
fn newton(h: &Hamiltonian, start: DVector<f64>, tol: f64) -> Option<(DVector<f64>, f64)> {
    let nf = h.n as f64;
    let mut x = start;
    let mut d = riemannian_unchecked(h, x.as_slice());
    let mut res = d.grad.norm();
    for _ in 0..NEWTON_MAX_ITER {
        if res <= tol {
            return Some((x, res));
        }
        // σσᵀ/N makes the operator invertible along the normal direction.
        let system = &d.hess + &x * x.transpose() / nf;
        let step = system.lu().solve(&(-&d.grad))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = retract(&(&x + &step * t));
            let dt = riemannian_unchecked(h, trial.as_slice());
            let rt = dt.grad.norm();
            let bound = if t == 1.0 { FULL_STEP_GROWTH * res } else { (1.0 - 1e-4 * t) * res };
            if rt < bound {
                x = trial;
                d = dt;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return (res <= tol).then_some((x, res));
        }
    }
    (res <= tol).then_some((x, res))
}

/// Uniform point on the sphere of radius `√n`.
pub fn random_sphere_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-8 {
            return retract(&v);
        }
    }
}

/// Multi-start projected Newton search. Start `k` draws from stream `k` of
/// `seed`; converged points are deduped in start order, so the result does
/// not depend on thread scheduling. The set is a lower bound on the true
/// critical set.
pub fn find_critical_points(h: &Hamiltonian, n_starts: usize, newton_tol: f64, dedupe_radius: f64, seed: u64) -> Result<CriticalPointSet> {
    if h.n < 3 {
        return domain("find_critical_points needs N >= 3; use circle_enumerate for N = 2");
    }
    if n_starts == 0 {
        return domain("at least one Newton start is required");
    }
    let outcomes: Vec<Option<(DVector<f64>, f64)>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica_rng(seed, k as u64);
            newton(h, random_sphere_point(h.n, &mut rng), newton_tol)
        })
        .collect();
    let mut builder = PointSetBuilder::new(h, dedupe_radius);
    let mut discovery = Vec::new();
    let mut diverged = 0;
    for (k, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Some((x, res)) => {
                if builder.insert_with_antipode(x.as_slice().to_vec(), res) {
                    discovery.push((k, builder.points.len()));
                }
            }
            None => diverged += 1,
        }
    }
    let last_new = discovery.last().map_or(0, |&(k, _)| k);
    let diagnostics = SolverDiagnostics {
        n_starts,
        converged_starts: n_starts - diverged,
        diverged_starts: diverged,
        discovery,
        saturated: 2 * (last_new + 1) <= n_starts,
        complete: false,
    };
    Ok(builder.finish(diagnostics, Vec::new()))
}

/// Default dedupe radius `1e-4·√N`.
pub fn default_dedupe_radius(n: usize) -> f64 {
    1e-4 * (n as f64).sqrt()
}

/// Circle search for `N = 2`, Newton search otherwise.
pub fn enumerate_critical_points(h: &Hamiltonian, n_starts: usize, seed: u64) -> Result<CriticalPointSet> {
    if h.n == 2 {
        circle_enumerate(h, DEFAULT_CIRCLE_RESOLUTION)
    } else {
        find_critical_points(h, n_starts, DEFAULT_NEWTON_TOL, default_dedupe_radius(h.n), seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub p: u32,
    pub n: usize,
    pub u: f64,
    pub reps: usize,
    pub n_starts: usize,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub mean_std_error: f64,
    pub second_moment: f64,
    pub second_moment_std_error: f64,
    /// `m₂/m₁²`, with a delta-method standard error.
    pub ratio: f64,
    pub ratio_std_error: f64,
    /// Overlaps `⟨σ,σ'⟩/N` between distinct points below `u`, 20 bins on `[-1, 1]`.
    pub overlap_histogram: Vec<OverlapBin>,
    pub unsaturated_reps: usize,
    pub caveat: String,
}

impl ConcentrationReport {
    /// Histogram mass with `|overlap| < eps`, and the mass outside.
    pub fn overlap_mass_split(&self, eps: f64) -> (usize, usize) {
        let mut inside = 0;
        let mut outside = 0;
        for bin in &self.overlap_histogram {
            if bin.lower >= -eps - 1e-12 && bin.upper <= eps + 1e-12 {
                inside += bin.count;
            } else {
                outside += bin.count;
            }
        }
        (inside, outside)
    }
}

const OVERLAP_BINS: usize = 20;

fn sample_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = if xs.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Empirical first and second moments of the number of critical points with
/// `H/N < u` over `reps` sampled Hamiltonians. Hamiltonian `k` uses stream
/// `k` of `seed`; its Newton starts use seed `stage_seed(seed, k)`.
pub fn concentration_experiment(p: u32, n: usize, u: f64, reps: usize, n_starts: usize, seed: u64) -> Result<ConcentrationReport> {
    if reps < 2 {
        return domain("the concentration experiment needs at least two replicas");
    }
    let sets: Vec<CriticalPointSet> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica_rng(seed, k as u64);
            let h = sample_hamiltonian(p, n, &mut rng)?;
            enumerate_critical_points(&h, n_starts, stage_seed(seed, k as u64))
        })
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = sets.iter().map(|s| s.count_below(u)).collect();
    let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
    let c2: Vec<f64> = c.iter().map(|x| x * x).collect();
    let nr = reps as f64;
    let (m1, v1) = sample_stats(&c);
    let (m2, v2) = sample_stats(&c2);
    let cross: Vec<f64> = c.iter().zip(&c2).map(|(a, b)| (a - m1) * (b - m2)).collect();
    let cov12 = pairwise_sum(&cross) / (nr - 1.0);
    let (ratio, ratio_se) = if m1 > 0.0 {
        let (da, db) = (-2.0 * m2 / m1.powi(3), 1.0 / (m1 * m1));
        let var = da * da * v1 + db * db * v2 + 2.0 * da * db * cov12;
        (m2 / (m1 * m1), (var.max(0.0) / nr).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    let mut bins = vec![0usize; OVERLAP_BINS];
    let nf = n as f64;
    for set in &sets {
        let below: Vec<&Vec<f64>> = set.points.iter().zip(&set.values).filter(|(_, &v)| v < u).map(|(x, _)| x).collect();
        for (i, a) in below.iter().enumerate() {
            for b in &below[i + 1..] {
                let r = (a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / nf).clamp(-1.0, 1.0);
                let k = (((r + 1.0) / 2.0 * OVERLAP_BINS as f64) as usize).min(OVERLAP_BINS - 1);
                bins[k] += 1;
            }
        }
    }
    let width = 2.0 / OVERLAP_BINS as f64;
    let overlap_histogram = bins
        .into_iter()
        .enumerate()
        .map(|(k, count)| OverlapBin { lower: -1.0 + k as f64 * width, upper: -1.0 + (k + 1) as f64 * width, count })
        .collect();
    let unsaturated_reps = sets.iter().filter(|s| !s.diagnostics.saturated).count();
    let caveat = if n == 2 {
        "N = 2 counts are complete up to circle-grid resolution".to_string()
    } else {
        format!("counts are lower bounds from {n_starts} Newton starts per Hamiltonian; {unsaturated_reps} of {reps} searches were not saturated")
    };
    Ok(ConcentrationReport {
        p,
        n,
        u,
        reps,
        n_starts,
        counts,
        mean: m1,
        mean_std_error: (v1 / nr).sqrt(),
        second_moment: m2,
        second_moment_std_error: (v2 / nr).sqrt(),
        ratio,
        ratio_std_error: ratio_se,
        overlap_histogram,
        unsaturated_reps,
        caveat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateRow {
    pub n: usize,
    pub reps: usize,
    /// Mean of the smallest found `H/N`; an upper bound on the mean ground state.
    pub mean: f64,
    pub std: f64,
    /// 95% percentile-bootstrap interval for `std`.
    pub std_ci: (f64, f64),
    /// `-E₀(p)`, the almost-sure limit.
    pub reference: f64,
    pub gap_to_reference: f64,
    pub ground_states: Vec<f64>,
}

const BOOTSTRAP_RESAMPLES: usize = 1000;

fn bootstrap_std_ci(xs: &[f64], seed: u64) -> (f64, f64) {
    let mut rng = replica_rng(seed, 0);
    let mut stds: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let resample: Vec<f64> = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect();
            sample_stats(&resample).1.sqrt()
        })
        .collect();
    stds.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| stds[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    (at(0.025), at(0.975))
}

/// Ground-state energy `min H/N` over found critical points for each `N`,
/// against the limit `-E₀(p)`.
pub fn ground_state_experiment(p: u32, n_list: &[usize], reps: usize, n_starts: usize, seed: u64) -> Result<Vec<GroundStateRow>> {
    if reps < 2 {
        return domain("the ground-state experiment needs at least two replicas");
    }
    let reference = if p >= 3 { -thresholds(p, 1e-13)?.e_zero } else { -1.0 };
    n_list
        .iter()
        .map(|&n| {
            let run_seed = stage_seed(seed, n as u64);
            let ground_states: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|k| {
                    let mut rng = replica_rng(run_seed, k as u64);
                    let h = sample_hamiltonian(p, n, &mut rng)?;
                    let set = enumerate_critical_points(&h, n_starts, stage_seed(run_seed, k as u64))?;
                    set.min_value().ok_or_else(|| Error::EmptyEstimate(format!("no critical point found at N={n}")))
                })
                .collect::<Result<_>>()?;
            let (mean, var) = sample_stats(&ground_states);
            Ok(GroundStateRow {
                n,
                reps,
                mean,
                std: var.sqrt(),
                std_ci: bootstrap_std_ci(&ground_states, stage_seed(run_seed, u64::MAX)),
                reference,
                gap_to_reference: mean - reference,
                ground_states,
            })
        })
        .collect()
}
