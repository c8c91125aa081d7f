//! Semicircle log-potential, complexity exponent and threshold energies.

use serde::{Deserialize, Serialize};

use crate::error::{check_degree, domain, Error, Result};

/// Threshold energies for a fixed degree `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub p: u32,
    pub e_inf: f64,
    pub e_zero: f64,
    pub u_th: f64,
    pub e_zero_residual: f64,
}

/// Logarithmic potential of the semicircle law, `∫ log|λ - x| dμ*(λ)`.
pub fn omega(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("omega needs a finite argument, got {x}"));
    }
    let a = x.abs();
    let bulk = x * x / 4.0 - 0.5;
    if a <= 2.0 {
        return Ok(bulk);
    }
    let s = (x * x - 4.0).sqrt();
    let correction = a / 4.0 * s - (s / 2.0 + a / 2.0).ln();
    Ok(bulk - correction)
}

/// Derivative of `omega` outside the bulk, equal to the semicircle Stieltjes transform.
pub fn omega_prime(x: f64) -> Result<f64> {
    if !(x.is_finite() && x.abs() > 2.0) {
        return domain(format!("omega_prime is only available for |x| > 2, got {x}"));
    }
    let s = (x * x - 4.0).sqrt();
    // rationalized to avoid cancellation for large |x|
    Ok(if x > 0.0 { 2.0 / (x + s) } else { 2.0 / (x - s) })
}

/// Complexity exponent Θ_p(u) of the expected number of critical points below `u`.
pub fn theta(p: u32, u: f64) -> Result<f64> {
    check_degree(p)?;
    if !u.is_finite() {
        return domain(format!("theta needs a finite energy, got {u}"));
    }
    let pf = p as f64;
    let half_log = 0.5 * (pf - 1.0).ln();
    if u >= 0.0 {
        return Ok(half_log);
    }
    let x = (pf / (pf - 1.0)).sqrt() * u;
    Ok(0.5 + half_log - u * u / 2.0 + omega(x)?)
}

/// Bulk edge energy `2√((p-1)/p)`.
pub fn e_inf(p: u32) -> f64 {
    let pf = p as f64;
    2.0 * ((pf - 1.0) / pf).sqrt()
}

/// Second-moment phase boundary `√(2(p-1)/(p-2) log(p-1))`.
pub fn u_th(p: u32) -> f64 {
    let pf = p as f64;
    (2.0 * (pf - 1.0) / (pf - 2.0) * (pf - 1.0).ln()).sqrt()
}

/// `∫ 1/(√((p-1)/p) λ - u) dμ*(λ)` for `u` below the bulk edge.
pub fn resolvent_s(p: u32, u: f64) -> Result<f64> {
    check_degree(p)?;
    if !(u.is_finite() && u < -e_inf(p)) {
        return domain(format!("resolvent_s needs u < -E_inf(p) = {}, got {u}", -e_inf(p)));
    }
    let pf = p as f64;
    let c = ((pf - 1.0) / pf).sqrt();
    let z = u / c;
    // ∫ dμ*(λ)/(z - λ) for z < -2
    let stieltjes = 2.0 / (z - (z * z - 4.0).sqrt());
    Ok(-stieltjes / c)
}

/// Computes E_∞, u_th and the zero E_0 of Θ_p(-E) by bisection.
pub fn thresholds(p: u32, tol: f64) -> Result<ThresholdSet> {
    check_degree(p)?;
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let e_inf = e_inf(p);
    let u_th = u_th(p);
    let g = |e: f64| theta(p, -e);
    let mut lo = e_inf + 1e-9;
    let mut hi = u_th;
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::Inconsistent(format!(
            "Θ_{p}(-E) does not change sign on [{lo}, {hi}]: {g_lo}, {g_hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let (r_lo, r_hi) = (g(lo)?.abs(), g(hi)?.abs());
    let (e_zero, residual) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if residual > tol {
        return Err(Error::Numeric(format!(
            "bisection residual {residual} exceeds tolerance {tol}"
        )));
    }
    Ok(ThresholdSet { p, e_inf, e_zero, u_th, e_zero_residual: residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_reference_values() {
        assert_eq!(omega(0.0).unwrap(), -0.5);
        assert_eq!(omega(2.0).unwrap(), 0.5);
        assert_eq!(omega(-2.0).unwrap(), 0.5);
        assert!((omega(-3.0).unwrap() - 1.0353727).abs() < 1e-7);
        assert!(omega(f64::NAN).is_err());
        assert!(omega(f64::INFINITY).is_err());
    }

    #[test]
    fn omega_is_continuous_across_the_edge() {
        let inside = omega(2.0 - 1e-12).unwrap();
        let outside = omega(2.0 + 1e-12).unwrap();
        assert!((inside - outside).abs() < 1e-5);
    }

    #[test]
    fn omega_prime_bounds() {
        assert!(omega_prime(-2.5).unwrap() >= 1.0 / (-2.5 + 2.0));
        assert!(omega_prime(1.0).is_err());
        let x = -1e6;
        assert!((omega_prime(x).unwrap() * x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn theta_constant_above_zero() {
        let v = theta(3, 0.0).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(theta(3, 1.7).unwrap(), v);
        assert!(theta(2, 0.0).is_err());
    }

    #[test]
    fn resolvent_limit() {
        let u = -1e7;
        assert!((resolvent_s(3, u).unwrap() * (-u) - 1.0).abs() < 1e-6);
        assert!(resolvent_s(3, -1.0).is_err());
    }

    #[test]
    fn thresholds_p3() {
        let t = thresholds(3, 1e-12).unwrap();
        assert!((t.e_inf - 1.6329932).abs() < 1e-7);
        assert!((t.u_th - 2.0 * 2f64.ln().sqrt()).abs() < 1e-12);
        assert!(t.e_inf < t.e_zero && t.e_zero < t.u_th);
        assert!(t.e_zero_residual <= 1e-12);
    }
}
