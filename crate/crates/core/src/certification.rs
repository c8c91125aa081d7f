//! Mesh-and-derivative-bound negativity certificates for Q_p^{u_th(p)} and
//! Q̃_p, the τ_p chain, and the tables behind the Q-curve figures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity_landscape::{geometric, geometric_prime, log_volume_ratio, q_fn, q_prime, q_second_derivative_at_zero};
use crate::error::{check_degree, domain, Error, Result};
use crate::special_functions::u_th;

/// Endpoint Taylor data for the band between an interval end and the mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub location: f64,
    pub value: f64,
    pub first_derivative: f64,
    pub second_derivative: Option<f64>,
    /// The band `(location, t0]` or `[1 - t0, location)` covered by this report.
    pub band: [f64; 2],
    /// Smallest value of `-sign·f'` over a dense band grid, where `sign` is the
    /// derivative sign that forces negativity inside the band.
    pub band_margin: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityCertificate {
    pub target: String,
    pub p: u32,
    pub interval: [f64; 2],
    pub epsilon0: f64,
    /// Largest per-cell derivative bound.
    pub derivative_bound: f64,
    pub nodes: Vec<[f64; 2]>,
    pub cell_bounds: Vec<f64>,
    pub endpoint_reports: Vec<EndpointReport>,
    pub verdict: bool,
    pub slack: f64,
}

/// Result of the mesh part of a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCheck {
    pub epsilon0: f64,
    pub nodes: Vec<[f64; 2]>,
    pub cell_bounds: Vec<f64>,
    pub slack: f64,
}

/// Certifies `f < 0` on `[a, b]` from values at cell midpoints and, per cell,
/// a bound `L_i = 1.5·max|f'|` over an 11-point sub-grid of the cell.
///
/// Every point of a cell lies within `ε₀/2` of its node, so
/// `f(r) ≤ f(r_i) + L_i ε₀/2`; the slack is the smallest remaining margin.
pub fn mesh_check<F, D>(f: F, df: D, a: f64, b: f64, mesh_points: usize) -> Result<MeshCheck>
where
    F: Fn(f64) -> Result<f64> + Sync,
    D: Fn(f64) -> Result<f64> + Sync,
{
    if !(a < b) || mesh_points == 0 {
        return domain(format!("invalid mesh [{a}, {b}] with {mesh_points} points"));
    }
    let eps = (b - a) / mesh_points as f64;
    let cells: Vec<(f64, f64, f64)> = (0..mesh_points)
        .into_par_iter()
        .map(|i| {
            let lo = a + eps * i as f64;
            let r = lo + 0.5 * eps;
            let v = f(r)?;
            let mut dmax = 0.0f64;
            for k in 0..=10 {
                dmax = dmax.max(df(lo + eps * k as f64 / 10.0)?.abs());
            }
            let l = 1.5 * dmax;
            if !(v.is_finite() && l.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value or derivative near r={r}")));
            }
            Ok((r, v, l))
        })
        .collect::<Result<Vec<_>>>()?;
    let slack = cells.iter().map(|&(_, v, l)| -v - l * eps / 2.0).fold(f64::INFINITY, f64::min);
    Ok(MeshCheck {
        epsilon0: eps,
        nodes: cells.iter().map(|&(r, v, _)| [r, v]).collect(),
        cell_bounds: cells.iter().map(|c| c.2).collect(),
        slack,
    })
}

/// Minimum of `g` over `points` evenly spaced points strictly inside `(lo, hi)`
/// together with `hi`.
fn band_min<G: Fn(f64) -> Result<f64>>(g: G, lo: f64, hi: f64, points: usize) -> Result<f64> {
    let mut m = f64::INFINITY;
    for k in 1..=points {
        m = m.min(g(lo + (hi - lo) * k as f64 / points as f64)?);
    }
    Ok(m)
}

const BAND_POINTS: usize = 2000;

fn assemble(
    target: String,
    p: u32,
    interval: [f64; 2],
    mesh: MeshCheck,
    endpoint_reports: Vec<EndpointReport>,
) -> NegativityCertificate {
    let endpoints_ok = endpoint_reports.iter().all(|e| e.consistent);
    let endpoint_margin = endpoint_reports.iter().map(|e| e.band_margin).fold(f64::INFINITY, f64::min);
    let slack = if endpoints_ok { mesh.slack } else { mesh.slack.min(endpoint_margin.min(0.0)) };
    NegativityCertificate {
        target,
        p,
        interval,
        epsilon0: mesh.epsilon0,
        derivative_bound: mesh.cell_bounds.iter().copied().fold(0.0, f64::max),
        nodes: mesh.nodes,
        cell_bounds: mesh.cell_bounds,
        endpoint_reports,
        verdict: endpoints_ok && mesh.slack > 0.0,
        slack,
    }
}

fn check_mesh_args(t0: f64, mesh_points: usize) -> Result<()> {
    if !(t0 > 0.0 && t0 < 0.5) {
        return domain(format!("t0={t0} must lie in (0, 0.5)"));
    }
    if mesh_points < 1000 {
        return domain("mesh needs at least 1000 points");
    }
    Ok(())
}

/// Certifies `Q_p^{u_th(p)}(r) < 0` on `(0, 1)` for `3 ≤ p ≤ 10`.
pub fn certify_q_negativity(p: u32, t0: f64, mesh_points: usize) -> Result<NegativityCertificate> {
    check_degree(p)?;
    if p > 10 {
        return domain("the direct certificate covers 3 <= p <= 10");
    }
    check_mesh_args(t0, mesh_points)?;
    let u = u_th(p);
    let f = |r: f64| q_fn(p, u, r);
    let df = |r: f64| q_prime(p, u, r);
    let mesh = mesh_check(f, df, t0, 1.0 - t0, mesh_points)?;

    let q0 = f(0.0)?;
    let d0 = df(0.0)?;
    let dd0 = q_second_derivative_at_zero(p)?;
    let m0 = band_min(|r| Ok(-df(r)?), 0.0, t0, BAND_POINTS)?;
    let left = EndpointReport {
        location: 0.0,
        value: q0,
        first_derivative: d0,
        second_derivative: Some(dd0),
        band: [0.0, t0],
        band_margin: m0,
        consistent: q0 == 0.0 && d0 == 0.0 && dd0 < 0.0 && m0 > 0.0,
    };
    let q1 = f(1.0)?;
    let d1 = df(1.0)?;
    let m1 = band_min(|r| df(1.0 - r), 0.0, t0, BAND_POINTS)?;
    let right = EndpointReport {
        location: 1.0,
        value: q1,
        first_derivative: d1,
        second_derivative: None,
        band: [1.0 - t0, 1.0],
        band_margin: m1,
        consistent: q1.abs() <= 1e-12 && d1 > 0.0 && m1 > 0.0,
    };
    Ok(assemble(format!("Q_{p}^u_th"), p, [t0, 1.0 - t0], mesh, vec![left, right]))
}

/// `Q̃_p(r) = ½ log((1-r²)/(1-r^{2p-2})) + (log(p-1)/(p-2))·((1-r^{p-2})/(1-r²))·r²` on `[0, 1)`.
pub fn tilde_q(p: u32, r: f64) -> Result<f64> {
    check_degree(p)?;
    if !(0.0..1.0).contains(&r) {
        return domain(format!("r={r} must lie in [0, 1)"));
    }
    Ok(tilde_q_unchecked(p, r))
}

fn tilde_coef(p: u32) -> f64 {
    let pf = p as f64;
    (pf - 1.0).ln() / (pf - 2.0)
}

// (1 - r^{p-2})/(1 - r²) = Σ_{k≤p-3} r^k / (1 + r)
fn tilde_q_unchecked(p: u32, r: f64) -> f64 {
    let s1 = geometric(r, p as i32 - 3);
    log_volume_ratio(p, r) + tilde_coef(p) * r * r * s1 / (1.0 + r)
}

/// Value of Q̃_p at `r → 1⁻`: `½ log(1/(p-1)) + log(p-1)/(p-2) · (p-2)/2`.
pub fn tilde_q_limit_at_one(p: u32) -> Result<f64> {
    check_degree(p)?;
    let pf = p as f64;
    Ok(0.5 * (1.0 / (pf - 1.0)).ln() + tilde_coef(p) * (pf - 2.0) / 2.0)
}

pub fn tilde_q_prime(p: u32, r: f64) -> Result<f64> {
    check_degree(p)?;
    if !(0.0..=1.0).contains(&r) {
        return domain(format!("r={r} must lie in [0, 1]"));
    }
    let m = p as i32 - 2;
    let s2 = geometric(r * r, m);
    let s2p = 2.0 * r * geometric_prime(r * r, m);
    let s1 = geometric(r, p as i32 - 3);
    let s1p = geometric_prime(r, p as i32 - 3);
    let h = s1 / (1.0 + r);
    let hp = (s1p * (1.0 + r) - s1) / ((1.0 + r) * (1.0 + r));
    Ok(-0.5 * s2p / s2 + tilde_coef(p) * (2.0 * r * h + r * r * hp))
}

/// Certifies `Q̃_p < 0` on `[0.6, 1)`: mesh on `[0.6, 1 - t0]` and a band
/// argument on `[1 - t0, 1)` using the left limit and `Q̃_p' > 0`.
pub fn certify_tilde_q(p: u32, t0: f64, mesh_points: usize) -> Result<NegativityCertificate> {
    check_degree(p)?;
    check_mesh_args(t0, mesh_points)?;
    let lo = 0.6;
    if 1.0 - t0 <= lo {
        return domain("t0 leaves no room for the mesh above 0.6");
    }
    let f = |r: f64| tilde_q(p, r);
    let df = |r: f64| tilde_q_prime(p, r);
    let mesh = mesh_check(f, df, lo, 1.0 - t0, mesh_points)?;
    let limit = tilde_q_limit_at_one(p)?;
    let d1 = df(1.0)?;
    let m1 = band_min(|r| df(1.0 - r), 0.0, t0, BAND_POINTS)?;
    let right = EndpointReport {
        location: 1.0,
        value: limit,
        first_derivative: d1,
        second_derivative: None,
        band: [1.0 - t0, 1.0],
        band_margin: m1,
        consistent: limit <= 1e-12 && d1 > 0.0 && m1 > 0.0,
    };
    Ok(assemble(format!("tildeQ_{p}"), p, [lo, 1.0 - t0], mesh, vec![right]))
}

pub fn certify_tilde_q10(mesh_points: usize) -> Result<NegativityCertificate> {
    certify_tilde_q(10, 0.01, mesh_points)
}

/// `τ_p = 0.65·u_th(p)² - (p-2)/(2(1 + 8·0.65⁹))`.
pub fn tau(p: u32) -> Result<f64> {
    check_degree(p)?;
    let pf = p as f64;
    Ok(0.65 * u_th(p).powi(2) - (pf - 2.0) / (2.0 * (1.0 + 8.0 * 0.65f64.powi(9))))
}

/// `τ_p` for `p = 10..=p_max`, checking `τ_10 < 0` and strict decrease.
pub fn tau_chain(p_max: u32) -> Result<Vec<(u32, f64)>> {
    if p_max < 10 {
        return domain("tau chain starts at p = 10");
    }
    let table: Vec<(u32, f64)> = (10..=p_max).map(|p| Ok((p, tau(p)?))).collect::<Result<_>>()?;
    if !(table[0].1 < 0.0) {
        return Err(Error::Inconsistent(format!("tau_10 = {} is not negative", table[0].1)));
    }
    for w in table.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(Error::Inconsistent(format!("tau_{} >= tau_{}", w[1].0, w[0].0)));
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCurves {
    /// Rows `(r, p, Q_p^{u_th(p)}(r))`, grouped by `p`.
    pub rows: Vec<(f64, u32, f64)>,
    /// Grid points `(r, p)` where `Q_p(r) < Q_{p+1}(r)`.
    pub monotonicity_violations: Vec<(f64, u32)>,
}

/// Tabulates `Q_p^{u_th(p)}` on a uniform grid of `[0, 1]` for each `p` in range.
pub fn q_curves_table(p_lo: u32, p_hi: u32, points: usize) -> Result<QCurves> {
    check_degree(p_lo)?;
    if p_hi > 10 || p_hi < p_lo {
        return domain("p range must lie within [3, 10]");
    }
    if points < 101 {
        return domain("curves need at least 101 points");
    }
    let rs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let curves: Vec<Vec<f64>> = (p_lo..=p_hi)
        .map(|p| rs.par_iter().map(|&r| q_fn(p, u_th(p), r)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(curves.len() * points);
    for (k, c) in curves.iter().enumerate() {
        rows.extend(rs.iter().zip(c).map(|(&r, &q)| (r, p_lo + k as u32, q)));
    }
    let mut monotonicity_violations = Vec::new();
    for k in 0..curves.len().saturating_sub(1) {
        for (i, &r) in rs.iter().enumerate() {
            // both curves vanish at the endpoints up to rounding
            if curves[k][i] < curves[k + 1][i] - 1e-14 {
                monotonicity_violations.push((r, p_lo + k as u32));
            }
        }
    }
    Ok(QCurves { rows, monotonicity_violations })
}

/// Tabulates Q̃_p on `[0, 1]`, using the left limit at `r = 1`.
pub fn tilde_q_table(p: u32, points: usize) -> Result<Vec<(f64, f64)>> {
    check_degree(p)?;
    if points < 2 {
        return domain("table needs at least 2 points");
    }
    (0..points)
        .map(|i| {
            let r = i as f64 / (points - 1) as f64;
            Ok((r, if r < 1.0 { tilde_q(p, r)? } else { tilde_q_limit_at_one(p)? }))
        })
        .collect()
}
