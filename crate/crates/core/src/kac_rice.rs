//! Finite-N Kac–Rice first and second moments of the number of critical
//! points with value in `N·B`, and their exponential-scale asymptotes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity_landscape::{kr_prefactors, log_omega, psi_bar};
use crate::covariance::sigma_u;
use crate::error::{check_degree, domain, Error, Result};
use crate::quad::{gauss_legendre, integrate_with_breaks};
use crate::random_matrix::{goe_unscaled, log_abs_det, HessianPairLaw};
use crate::special_functions::theta;
use crate::stats::{log_norm_mass, log_sum_exp, replica_rng, stage_seed, truncated_normal, MomentEstimate};

/// Energy interval `B`; `None` marks an infinite end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl LevelSet {
    pub fn below(u: f64) -> Self {
        Self { lower: None, upper: Some(u) }
    }

    pub fn between(lo: f64, hi: f64) -> Self {
        Self { lower: Some(lo), upper: Some(hi) }
    }

    pub fn everything() -> Self {
        Self { lower: None, upper: None }
    }

    /// `(a, b)` with infinite ends mapped to `±∞`, scaled by `s`.
    pub fn scaled(&self, s: f64) -> (f64, f64) {
        (self.lower.map_or(f64::NEG_INFINITY, |x| x * s), self.upper.map_or(f64::INFINITY, |x| x * s))
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.scaled(1.0);
        if !(a < b) || a.is_nan() || b.is_nan() {
            return domain(format!("empty energy interval ({a}, {b})"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: u32,
    pub n: usize,
    pub level_set: LevelSet,
    pub overlap_set: Option<[f64; 2]>,
    pub estimate: MomentEstimate,
    pub log_per_n: f64,
    pub reference_exponent: f64,
    pub warnings: Vec<String>,
}

/// `log ω_N + ((N-1)/2)·log((p-1)(N-1)/(2π))`.
pub fn first_moment_log_prefactor(p: u32, n: usize) -> f64 {
    let nf = n as f64;
    log_omega(n) + 0.5 * (nf - 1.0) * ((p as f64 - 1.0) * (nf - 1.0) / (2.0 * std::f64::consts::PI)).ln()
}

fn check_pn(p: u32, n: usize, min_n: usize) -> Result<()> {
    check_degree(p)?;
    if n < min_n {
        return domain(format!("dimension N={n} must be at least {min_n}"));
    }
    Ok(())
}

/// Reference exponent `Θ_p(u)` at the upper end of `B`.
fn first_reference(p: u32, b: &LevelSet) -> Result<f64> {
    match b.upper {
        Some(u) => theta(p, u),
        None => theta(p, 0.0),
    }
}

/// Monte Carlo first moment, with `U` drawn from its law restricted to `√N·B`
/// and the Gaussian mass of `√N·B` folded into the log prefactor.
pub fn first_moment_set(p: u32, n: usize, b: LevelSet, samples: usize, seed: u64) -> Result<MomentReport> {
    check_pn(p, n, 2)?;
    b.validate()?;
    if samples < 2 {
        return domain("at least two samples are required");
    }
    let sn = (n as f64).sqrt();
    let (lo, hi) = b.scaled(sn);
    let log_mass = log_norm_mass(lo, hi);
    if !(log_mass > f64::NEG_INFINITY) {
        return Err(Error::EmptyEstimate(
            "the level set has no Gaussian mass in double precision; raise the level or use larger N-scaled sets".into(),
        ));
    }
    let d = n - 1;
    let a = (p as f64 / ((p as f64 - 1.0) * d as f64)).sqrt();
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let u = truncated_normal(&mut rng, lo, hi);
            let mut m = goe_unscaled(d, &mut rng) / (d as f64).sqrt();
            for k in 0..d {
                m[(k, k)] -= a * u;
            }
            log_abs_det(m)
        })
        .collect();
    let est = MomentEstimate::from_log_values(&logs)?.scaled_log(first_moment_log_prefactor(p, n) + log_mass);
    Ok(MomentReport {
        p,
        n,
        level_set: b,
        overlap_set: None,
        log_per_n: est.log_mean / n as f64,
        estimate: est,
        reference_exponent: first_reference(p, &b)?,
        warnings: Vec::new(),
    })
}

/// First moment of the number of critical points below `u`.
pub fn first_moment(p: u32, n: usize, u: f64, samples: usize, seed: u64) -> Result<MomentReport> {
    first_moment_set(p, n, LevelSet::below(u), samples, seed)
}

const GAUSS_REACH: f64 = 12.0;

/// `𝔼|Z - c|` for `Z ~ N(0, 2)` by adaptive quadrature, split at the kink.
fn abs_moment_scalar(c: f64) -> Result<f64> {
    let s = std::f64::consts::SQRT_2;
    let dens = |m: f64| (-m * m / 4.0).exp() / (2.0 * std::f64::consts::PI.sqrt());
    integrate_with_breaks(|m| (m - c).abs() * dens(m), -GAUSS_REACH * s, GAUSS_REACH * s, &[c], 1e-14, 1e-11)
}

/// `𝔼|det(M - c I)|` for 2×2 `M` with diagonal variance 1 and off-diagonal
/// variance ½, integrating the joint eigenvalue density
/// `|λ₁-λ₂| e^{-(λ₁²+λ₂²)/2} / (4√π)` over `ℝ²`.
fn abs_det_goe2(c: f64) -> Result<f64> {
    let norm = 1.0 / (4.0 * std::f64::consts::PI.sqrt());
    let inner = |l1: f64| -> f64 {
        integrate_with_breaks(
            |l2| (l1 - l2).abs() * (l2 - c).abs() * (-0.5 * l2 * l2).exp(),
            -GAUSS_REACH,
            GAUSS_REACH,
            &[c, l1],
            1e-14,
            1e-11,
        )
        .unwrap_or(f64::NAN)
            * (l1 - c).abs()
            * (-0.5 * l1 * l1).exp()
    };
    Ok(norm * integrate_with_breaks(inner, -GAUSS_REACH, GAUSS_REACH, &[c], 1e-14, 1e-10)?)
}

/// Exact first moment at `N ∈ {2, 3}` by nested adaptive quadrature.
pub fn first_moment_exact_small(p: u32, n: usize, u: f64) -> Result<f64> {
    check_degree(p)?;
    if !(n == 2 || n == 3) {
        return domain("exact evaluation is available for N = 2 and N = 3 only");
    }
    let d = n - 1;
    let a = (p as f64 / ((p as f64 - 1.0) * d as f64)).sqrt();
    let upper = (n as f64).sqrt() * u;
    let hi = upper.min(GAUSS_REACH);
    let lo = hi.min(0.0) - GAUSS_REACH;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut failed = None;
    let outer = |x: f64| {
        let v = if n == 2 { abs_moment_scalar(a * x) } else { abs_det_goe2(a * x) };
        match v {
            Ok(v) if v.is_finite() => v * phi(x),
            Ok(_) | Err(_) => {
                failed = Some(x);
                0.0
            }
        }
    };
    let val = integrate_with_breaks(outer, lo, hi, &[0.0], 1e-300, 1e-9)?;
    if let Some(x) = failed {
        return Err(Error::Numeric(format!("inner quadrature failed at U={x}")));
    }
    Ok(first_moment_log_prefactor(p, n).exp() * val)
}

/// Draws `(U₁, U₂) ~ N(0, Σ_U)` restricted to `(√N·B)²` by sequential
/// conditioning; returns the values and `log P(U₂ ∈ √N·B | U₁)`.
fn sample_values<R: Rng + ?Sized>(s11: f64, s12: f64, lo: f64, hi: f64, rng: &mut R) -> (f64, f64, f64) {
    let sd1 = s11.sqrt();
    let u1 = sd1 * truncated_normal(rng, lo / sd1, hi / sd1);
    let mean = s12 / s11 * u1;
    let sd2 = ((s11 - s12) * (s11 + s12) / s11).max(0.0).sqrt();
    let (a, b) = ((lo - mean) / sd2, (hi - mean) / sd2);
    let logw = log_norm_mass(a, b);
    let u2 = if logw == f64::NEG_INFINITY { mean } else { mean + sd2 * truncated_normal(rng, a, b) };
    (u1, u2, logw)
}

/// Monte Carlo estimate of `𝔼{|det M⁽¹⁾| |det M⁽²⁾| 1{U_i ∈ √N·B}}` at overlap `r`.
pub fn second_moment_integrand(p: u32, n: usize, r: f64, b: LevelSet, samples: usize, seed: u64) -> Result<MomentEstimate> {
    check_pn(p, n, 3)?;
    b.validate()?;
    if samples < 2 {
        return domain("at least two samples are required");
    }
    let law = HessianPairLaw::new(p, n, r)?;
    let su = sigma_u(p, r)?;
    let (s11, s12) = (su[(0, 0)], su[(0, 1)]);
    let (lo, hi) = b.scaled((n as f64).sqrt());
    let sd1 = s11.sqrt();
    let log_mass1 = log_norm_mass(lo / sd1, hi / sd1);
    if !(log_mass1 > f64::NEG_INFINITY) {
        return Err(Error::EmptyEstimate("the level set has no Gaussian mass at this overlap".into()));
    }
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let (u1, u2, logw) = sample_values(s11, s12, lo, hi, &mut rng);
            if logw == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let (m1, m2) = law.sample(u1, u2, &mut rng)?;
            Ok(logw + log_abs_det(m1) + log_abs_det(m2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentEstimate::from_log_values(&logs)?.scaled_log(log_mass1))
}

/// Default Gauss–Legendre panel breakpoints for the overlap integral.
pub const DEFAULT_PANEL_BREAKS: [f64; 2] = [-0.3, 0.3];

/// `sup_{r ∈ I_R} sup_{u ∈ B} Ψ̄_p^u(r)` on a grid (Ψ is maximized on the
/// diagonal `u₁ = u₂` below the bulk edge).
pub fn sup_psi(p: u32, b: LevelSet, overlap: [f64; 2]) -> Result<f64> {
    check_degree(p)?;
    b.validate()?;
    let (lo, hi) = b.scaled(1.0);
    // compactify infinite ends through u = c + (1-t)/t
    let us: Vec<f64> = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect(),
        (false, true) => (1..=200).map(|i| hi - (1.0 - i as f64 / 200.0) / (i as f64 / 200.0)).collect(),
        (true, false) => (1..=200).map(|i| lo + (1.0 - i as f64 / 200.0) / (i as f64 / 200.0)).collect(),
        (false, false) => (-200..=200).map(|i| i as f64 / 20.0).collect(),
    };
    let rs: Vec<f64> = (0..=400).map(|i| overlap[0] + (overlap[1] - overlap[0]) * i as f64 / 400.0).collect();
    let best = us
        .par_iter()
        .map(|&u| rs.iter().map(|&r| psi_bar(p, u, r)).try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v))))
        .collect::<Result<Vec<_>>>()?;
    Ok(best.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Gauss–Legendre nodes and weights on `[a, b]` split at the default breakpoints.
pub fn overlap_nodes(a: f64, b: f64, nodes_per_panel: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    pts.extend(DEFAULT_PANEL_BREAKS.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    let (x, w) = gauss_legendre(nodes_per_panel);
    let mut out = Vec::new();
    for win in pts.windows(2) {
        let (c, h) = (0.5 * (win[0] + win[1]), 0.5 * (win[1] - win[0]));
        out.extend(x.iter().zip(&w).map(|(xi, wi)| (c + h * xi, h * wi)));
    }
    out
}

/// Second moment `C_N ∫_{I_R} 𝒢(r)^N ℱ(r) 𝔼{…}(r) dr` by composite
/// Gauss–Legendre quadrature in log space.
pub fn second_moment(
    p: u32,
    n: usize,
    b: LevelSet,
    overlap: [f64; 2],
    nodes_per_panel: usize,
    samples: usize,
    seed: u64,
) -> Result<MomentReport> {
    check_pn(p, n, 3)?;
    b.validate()?;
    let [ra, rb] = overlap;
    if !(ra < rb && ra > -1.0 && rb < 1.0) {
        return domain(format!("overlap interval [{ra}, {rb}] must be a non-empty subset of (-1, 1)"));
    }
    if nodes_per_panel == 0 {
        return domain("need at least one node per panel");
    }
    let nodes = overlap_nodes(ra, rb, nodes_per_panel);
    let nf = n as f64;
    let per_node: Vec<(f64, f64, f64)> = nodes
        .iter()
        .enumerate()
        .map(|(k, &(r, w))| {
            let est = second_moment_integrand(p, n, r, b, samples, stage_seed(seed, k as u64))?;
            let pre = kr_prefactors(p, n, r)?;
            let log_weight = w.ln() + pre.log_c_n + nf * pre.g.ln() + pre.f.ln();
            let rel = if est.mean > 0.0 { est.relative_error() } else { 0.0 };
            Ok((r, log_weight + est.log_mean, rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = per_node.iter().map(|x| x.1).collect();
    let log_total = log_sum_exp(&logs);
    let var_s: f64 = per_node.iter().map(|&(_, l, rel)| ((l - log_total).exp() * rel).powi(2)).sum();
    let scale = log_total.exp();
    let estimate = MomentEstimate {
        mean: scale,
        std_error: scale * var_s.sqrt(),
        n_samples: samples * nodes.len(),
        log_mean: log_total,
    };
    let mut warnings = Vec::new();
    for w in per_node.windows(3) {
        let (l, m, r) = (w[0].1, w[1].1, w[2].1);
        let extremum = (m > l && m > r) || (m < l && m < r);
        let noise = 3.0 * w[1].2.max(w[0].2).max(w[2].2);
        if extremum && (m - l).abs().min((m - r).abs()) < noise {
            warnings.push(format!("integrand not resolved near r={:.4}: local extremum within 3 SE", w[1].0));
        }
    }
    Ok(MomentReport {
        p,
        n,
        level_set: b,
        overlap_set: Some(overlap),
        log_per_n: log_total / nf,
        estimate,
        reference_exponent: sup_psi(p, b, overlap)?,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteRow {
    pub n: usize,
    pub first_log_per_n: f64,
    pub first_relative_error: f64,
    pub theta: f64,
    pub second_log_per_n: Option<f64>,
    pub second_relative_error: Option<f64>,
    pub two_theta: f64,
    /// `log(second) - 2·log(first)`.
    pub ratio_ln: Option<f64>,
}

/// Per-N log-moments for `B = (-∞, u)` against `Θ_p(u)` and `2Θ_p(u)`;
/// second moments are computed for `3 ≤ N ≤ second_max_n`.
pub fn asymptote_report(
    p: u32,
    u: f64,
    n_list: &[usize],
    samples: usize,
    second_samples: usize,
    second_max_n: usize,
    seed: u64,
) -> Result<Vec<AsymptoteRow>> {
    check_degree(p)?;
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return domain("N list must be strictly ascending");
    }
    let th = theta(p, u)?;
    n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let first = first_moment(p, n, u, samples, stage_seed(seed, 2 * k as u64))?;
            let second = if n >= 3 && n <= second_max_n {
                Some(second_moment(
                    p,
                    n,
                    LevelSet::below(u),
                    [-0.99, 0.99],
                    33,
                    second_samples,
                    stage_seed(seed, 2 * k as u64 + 1),
                )?)
            } else {
                None
            };
            Ok(AsymptoteRow {
                n,
                first_log_per_n: first.log_per_n,
                first_relative_error: first.estimate.relative_error(),
                theta: th,
                second_log_per_n: second.as_ref().map(|s| s.log_per_n),
                second_relative_error: second.as_ref().map(|s| s.estimate.relative_error()),
                two_theta: 2.0 * th,
                ratio_ln: second.as_ref().map(|s| s.estimate.log_mean - 2.0 * first.estimate.log_mean),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefactor_at_n2() {
        let direct = (2.0 * std::f64::consts::PI * (2.0 / (2.0 * std::f64::consts::PI)).sqrt()).ln();
        assert!((first_moment_log_prefactor(3, 2) - direct).abs() < 1e-14);
    }

    #[test]
    fn exact_n2_full_level_set() {
        // M - aU ~ N(0, 2 + 3/2), so 𝔼|·| = √(3.5)·√(2/π)
        let v = first_moment_exact_small(3, 2, 50.0).unwrap();
        let closed = first_moment_log_prefactor(3, 2).exp() * 3.5f64.sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        assert!((v - closed).abs() < 1e-8 * closed);
    }

    #[test]
    fn overlap_nodes_integrate_polynomials() {
        let s: f64 = overlap_nodes(-0.99, 0.99, 33).iter().map(|(r, w)| w * r * r).sum();
        assert!((s - 2.0 * 0.99f64.powi(3) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn level_set_validation() {
        assert!(first_moment(3, 4, f64::NAN, 10, 1).is_err());
        assert!(first_moment_set(3, 4, LevelSet::between(1.0, 0.5), 10, 1).is_err());
    }
}
