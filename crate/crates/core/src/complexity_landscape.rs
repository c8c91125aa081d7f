//! Two-point complexity Ψ_p, its diagonal restriction and boundary extension,
//! the closed forms Q_p^u and g₀, Kac–Rice prefactors and landscape maximization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::covariance::sigma_u_eigenvalues;
use crate::error::{check_degree, check_overlap, domain, Result};
use crate::special_functions::{e_inf, omega};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub p: u32,
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrPrefactors {
    pub log_c_n: f64,
    pub g: f64,
    pub f: f64,
}

/// `Σ_{k=0}^{m} x^k`.
pub(crate) fn geometric(x: f64, m: i32) -> f64 {
    (0..=m).fold(0.0, |acc, _| acc * x + 1.0)
}

/// Derivative of `geometric(x, m)`.
pub(crate) fn geometric_prime(x: f64, m: i32) -> f64 {
    (1..=m).rev().fold(0.0, |acc, k| acc * x + k as f64)
}

/// `½ log((1-r²)/(1-r^{2p-2}))`, written as `-½ log Σ_{k<p-1} r^{2k}` so that
/// it stays finite at `r = ±1`.
pub fn log_volume_ratio(p: u32, r: f64) -> f64 {
    -0.5 * geometric(r * r, p as i32 - 2).ln()
}

fn log_volume_ratio_prime(p: u32, r: f64) -> f64 {
    let m = p as i32 - 2;
    -0.5 * 2.0 * r * geometric_prime(r * r, m) / geometric(r * r, m)
}

/// `ζ_{p,u} = 1 + log(p-1) + 2Ω(√(p/(p-1)) u)`.
pub fn zeta(p: u32, u: f64) -> Result<f64> {
    check_degree(p)?;
    let pf = p as f64;
    Ok(1.0 + (pf - 1.0).ln() + 2.0 * omega((pf / (pf - 1.0)).sqrt() * u)?)
}

/// Two-point complexity Ψ_p(r, u₁, u₂) for `|r| < 1`.
pub fn psi(p: u32, r: f64, u1: f64, u2: f64) -> Result<f64> {
    check_degree(p)?;
    check_overlap(r)?;
    let pf = p as f64;
    let (plus, minus) = sigma_u_eigenvalues(p, r)?;
    let (sum, diff) = (u1 + u2, u1 - u2);
    let quad = 0.5 * (sum * sum / plus + diff * diff / minus);
    let c = (pf / (pf - 1.0)).sqrt();
    // fixed summation order keeps the value bit-identical under u₁ ↔ u₂
    let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
    Ok(1.0 + (pf - 1.0).ln() + log_volume_ratio(p, r) - 0.5 * quad + omega(c * lo)? + omega(c * hi)?)
}

pub fn landscape_point(p: u32, r: f64, u1: f64, u2: f64) -> Result<LandscapePoint> {
    Ok(LandscapePoint { p, r, u1, u2, psi: psi(p, r, u1, u2)? })
}

/// Numerator and denominator of g₀ after cancelling the common `1 - r` factor:
/// `g₀ = r^p Σ_{k≤p-3} r^k / ((1+r)(Σ_{k≤p-2} r^{2k} + (p-1) r^{p-2}))`.
fn g0_parts(p: u32, r: f64) -> (f64, f64, f64, f64) {
    let pi = p as i32;
    let pf = p as f64;
    let s1 = geometric(r, pi - 3);
    let s1p = geometric_prime(r, pi - 3);
    let s2 = geometric(r * r, pi - 2);
    let s2p = 2.0 * r * geometric_prime(r * r, pi - 2);
    let num = r.powi(pi) * s1;
    let num_p = pf * r.powi(pi - 1) * s1 + r.powi(pi) * s1p;
    let inner = s2 + (pf - 1.0) * r.powi(pi - 2);
    let inner_p = s2p + (pf - 1.0) * (pf - 2.0) * r.powi(pi - 3);
    let den = (1.0 + r) * inner;
    let den_p = inner + (1.0 + r) * inner_p;
    (num, num_p, den, den_p)
}

fn check_unit(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return domain(format!("r={r} must lie in [0, 1]"));
    }
    Ok(())
}

/// `g₀(r) = (r^p - r^{2p-2}) / (1 - r^{2p-2} + (p-1) r^{p-2}(1-r²))` on `[0, 1]`.
pub fn g0(p: u32, r: f64) -> Result<f64> {
    check_degree(p)?;
    check_unit(r)?;
    if r == 1.0 {
        let pf = p as f64;
        return Ok((pf - 2.0) / (4.0 * (pf - 1.0)));
    }
    let (n, _, d, _) = g0_parts(p, r);
    Ok(n / d)
}

pub fn g0_prime(p: u32, r: f64) -> Result<f64> {
    check_degree(p)?;
    check_unit(r)?;
    let (n, np, d, dp) = g0_parts(p, r);
    Ok((np * d - n * dp) / (d * d))
}

/// `Q_p^u(r) = ½ log((1-r²)/(1-r^{2p-2})) + u² g₀(r)` on `[0, 1]`.
pub fn q_fn(p: u32, u: f64, r: f64) -> Result<f64> {
    check_degree(p)?;
    check_unit(r)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    if r == 1.0 {
        let pf = p as f64;
        return Ok(0.5 * (1.0 / (pf - 1.0)).ln() + u * u * (pf - 2.0) / (4.0 * (pf - 1.0)));
    }
    Ok(log_volume_ratio(p, r) + u * u * g0(p, r)?)
}

/// Analytic derivative of `q_fn` in `r`, valid on the closed interval `[0, 1]`.
pub fn q_prime(p: u32, u: f64, r: f64) -> Result<f64> {
    check_degree(p)?;
    check_unit(r)?;
    Ok(log_volume_ratio_prime(p, r) + u * u * g0_prime(p, r)?)
}

/// `d²Q/dr²` at `r = 0`: the log-volume term contributes `-1` and g₀ vanishes to order `r³`.
pub fn q_second_derivative_at_zero(p: u32) -> Result<f64> {
    check_degree(p)?;
    Ok(-1.0)
}

/// Diagonal Ψ_p^u(r) extended continuously to `r ∈ [-1, 1]`.
pub fn psi_bar(p: u32, u: f64, r: f64) -> Result<f64> {
    check_degree(p)?;
    if !(r.is_finite() && r.abs() <= 1.0) {
        return domain(format!("r={r} must lie in [-1, 1]"));
    }
    let z = zeta(p, u)?;
    if r == 1.0 || (r == -1.0 && p % 2 == 0) {
        return Ok(z - u * u + q_fn(p, u, 1.0)?);
    }
    if r == -1.0 {
        // Σ_U,11 + Σ_U,12 vanishes at r = -1 for odd p
        return Ok(if u == 0.0 { z + log_volume_ratio(p, -1.0) } else { f64::NEG_INFINITY });
    }
    // even p: Ψ̄ is even in r, and the factored g₀ form cancels as r → -1
    let r = if p % 2 == 0 { r.abs() } else { r };
    let (n, _, d, _) = g0_parts(p, r);
    Ok(z - u * u + log_volume_ratio(p, r) + u * u * n / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeArgmax {
    pub p: u32,
    pub u: f64,
    pub r_star: f64,
    pub psi_max: f64,
    /// `psi_max` minus the best competing local maximum; `None` when there is only one.
    pub margin: Option<f64>,
}

const TIE: f64 = 1e-12;

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximizes `psi_bar(p, u, ·)` over `[-1, 1]` by a uniform grid followed by
/// golden-section refinement around every grid-local maximum.
pub fn landscape_argmax(p: u32, u: f64, grid: usize, refine_tol: f64) -> Result<LandscapeArgmax> {
    check_degree(p)?;
    if grid < 101 {
        return domain("landscape grid needs at least 101 points");
    }
    let rs: Vec<f64> = (0..grid).map(|i| -1.0 + 2.0 * i as f64 / (grid - 1) as f64).collect();
    let vals: Vec<f64> = rs.par_iter().map(|&r| psi_bar(p, u, r)).collect::<Result<Vec<_>>>()?;
    let eval = |r: f64| psi_bar(p, u, r).unwrap_or(f64::NEG_INFINITY);
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for i in 0..grid {
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < grid { vals[i + 1] } else { f64::NEG_INFINITY };
        if vals[i] == f64::NEG_INFINITY || vals[i] < left || vals[i] < right {
            continue;
        }
        // skip the second node of a flat plateau
        if i > 0 && vals[i] == left {
            continue;
        }
        let lo = rs[i.saturating_sub(1)];
        let hi = rs[(i + 1).min(grid - 1)];
        let (r_ref, v_ref) = golden_max(eval, lo, hi, refine_tol.max(1e-15));
        candidates.push(if v_ref > vals[i] + TIE { (r_ref, v_ref) } else { (rs[i], vals[i]) });
    }
    let best = candidates
        .iter()
        .copied()
        .fold(None::<(f64, f64)>, |acc, c| match acc {
            None => Some(c),
            Some(b) if c.1 > b.1 + TIE || ((c.1 - b.1).abs() <= TIE && c.0 > b.0) => Some(c),
            Some(b) => Some(b),
        })
        .ok_or_else(|| crate::Error::Numeric(format!("psi_bar is -inf on the whole grid at u={u}")))?;
    let margin = candidates
        .iter()
        .filter(|c| c.0 != best.0)
        .map(|c| best.1 - c.1)
        .fold(None::<f64>, |acc, m| Some(acc.map_or(m, |a| a.min(m))));
    Ok(LandscapeArgmax { p, u, r_star: best.0, psi_max: best.1, margin })
}

/// `sup_{r ∈ [-1,1]} sup_{v ≤ u} Ψ̄_p^v(r)`, the exponent governing the second
/// moment of the number of critical points below `u`.
pub fn sup_psi_below(p: u32, u: f64) -> Result<f64> {
    check_degree(p)?;
    // v = u - (1-t)/t maps t ∈ (0,1] onto (-∞, u]
    let ts: Vec<f64> = (1..=200).map(|i| i as f64 / 200.0).collect();
    let vals: Vec<f64> = ts
        .par_iter()
        .map(|&t| landscape_argmax(p, u - (1.0 - t) / t, 401, 1e-9).map(|a| a.psi_max))
        .collect::<Result<Vec<_>>>()?;
    let (i, _) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let lo = ts[i.saturating_sub(1)];
    let hi = ts[(i + 1).min(ts.len() - 1)];
    let f = |t: f64| landscape_argmax(p, u - (1.0 - t) / t, 401, 1e-9).map(|a| a.psi_max).unwrap_or(f64::NEG_INFINITY);
    let (_, v) = golden_max(f, lo, hi, 1e-7);
    Ok(v.max(vals[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalReport {
    pub p: u32,
    pub r: f64,
    pub interval: [f64; 2],
    pub grid: usize,
    pub diagonal_max: f64,
    pub overall_max: f64,
    pub argmax: [f64; 2],
    /// Grid nodes where Ψ(u₁,u₂) exceeds Ψ at the diagonal point with the same mean.
    pub midpoint_violations: usize,
    pub max_hessian_eigenvalue: f64,
    pub diagonal_max_verdict: bool,
    pub concavity_verdict: bool,
}

/// Checks on a grid over `box × box` that Ψ_p(r,·,·) is maximized on the
/// diagonal and is concave there.
pub fn sup_offdiag_check(p: u32, r: f64, interval: [f64; 2], grid: usize) -> Result<OffDiagonalReport> {
    check_degree(p)?;
    check_overlap(r)?;
    let [lo, hi] = interval;
    if !(lo < hi && hi < -e_inf(p)) {
        return domain(format!("energy box [{lo}, {hi}] must lie strictly below -E_inf = {}", -e_inf(p)));
    }
    if grid < 3 {
        return domain("grid needs at least 3 points per axis");
    }
    let us: Vec<f64> = (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect();
    let h = 1e-3 * (hi - lo);
    let rows: Vec<Vec<(f64, bool, f64)>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            (0..grid)
                .map(|j| {
                    let (a, b) = (us[i], us[j]);
                    let v = psi(p, r, a, b)?;
                    let m = 0.5 * (a + b);
                    let violates = v > psi(p, r, m, m)? + TIE;
                    let interior = i > 0 && j > 0 && i + 1 < grid && j + 1 < grid;
                    let eig = if interior {
                        let f = |x: f64, y: f64| psi(p, r, x, y);
                        let faa = (f(a + h, b)? - 2.0 * v + f(a - h, b)?) / (h * h);
                        let fbb = (f(a, b + h)? - 2.0 * v + f(a, b - h)?) / (h * h);
                        let fab = (f(a + h, b + h)? - f(a + h, b - h)? - f(a - h, b + h)? + f(a - h, b - h)?)
                            / (4.0 * h * h);
                        let tr = 0.5 * (faa + fbb);
                        tr + (0.25 * (faa - fbb).powi(2) + fab * fab).sqrt()
                    } else {
                        f64::NEG_INFINITY
                    };
                    Ok((v, violates, eig))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut diagonal_max = f64::NEG_INFINITY;
    let mut overall = (f64::NEG_INFINITY, 0, 0);
    let mut violations = 0;
    let mut max_eig = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        for (j, &(v, bad, eig)) in row.iter().enumerate() {
            if i == j {
                diagonal_max = diagonal_max.max(v);
            }
            if v > overall.0 {
                overall = (v, i, j);
            }
            violations += bad as usize;
            max_eig = max_eig.max(eig);
        }
    }
    Ok(OffDiagonalReport {
        p,
        r,
        interval,
        grid,
        diagonal_max,
        overall_max: overall.0,
        argmax: [us[overall.1], us[overall.2]],
        midpoint_violations: violations,
        max_hessian_eigenvalue: max_eig,
        diagonal_max_verdict: overall.1.abs_diff(overall.2) <= 1 && violations == 0,
        concavity_verdict: max_eig <= 1e-6,
    })
}

/// `log ω_n`, the log surface area of the unit sphere in `ℝ^n`.
pub fn log_omega(n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::LN_2 + 0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(0.5 * nf)
}

pub fn kr_prefactors(p: u32, n: usize, r: f64) -> Result<KrPrefactors> {
    check_degree(p)?;
    check_overlap(r)?;
    if n < 2 {
        return domain("dimension must be at least 2");
    }
    let pf = p as f64;
    let pi = p as i32;
    let nf = n as f64;
    let log_c_n = log_omega(n) + log_omega(n - 1)
        + (nf - 1.0) * ((nf - 1.0) * (pf - 1.0) / (2.0 * std::f64::consts::PI)).ln();
    let g = log_volume_ratio(p, r).exp();
    let c = pf * r.powi(pi) - (pf - 1.0) * r.powi(pi - 2);
    let f = g.powi(-3) / (1.0 - r.powi(2 * pi - 2)).sqrt() / (1.0 - c * c).sqrt();
    Ok(KrPrefactors { log_c_n, g, f })
}
