//! Two-point covariance structure of the normalized field `f` with covariance
//! `⟨σ, σ'⟩^p`: coefficient functions, conditional covariance blocks, the
//! gradient density and the full joint covariance of values, gradients and
//! Hessians at the north pole `n` and at `σ(r) = (0, …, 0, √(1-r²), r)`.
//!
//! The distinguished tangent direction is the last coordinate (index `N-2`
//! in zero-based tangent indexing).

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_degree, check_overlap, domain, Error, Result};

/// Coefficients and 2×2 covariance blocks at a fixed `(p, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapCovariance {
    pub p: u32,
    pub r: f64,
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub sigma_u: [[f64; 2]; 2],
    pub sigma_z: [[f64; 2]; 2],
    pub sigma_q: [[f64; 2]; 2],
}

/// `c·r^k`, returning exactly zero when `c` vanishes so that negative powers
/// at `r = 0` never produce `0·∞`.
pub(crate) fn mono(c: f64, r: f64, k: i32) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * r.powi(k)
    }
}

fn sym2(d: f64, o: f64) -> Matrix2<f64> {
    Matrix2::new(d, o, o, d)
}

pub fn to_array(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Returns `(a₁..a₄, b₁..b₄)`.
pub fn coefficients(p: u32, r: f64) -> Result<([f64; 4], [f64; 4])> {
    check_degree(p)?;
    check_overlap(r)?;
    let pf = p as f64;
    let pi = p as i32;
    let w = 1.0 - r * r;
    let d1 = 1.0 - r.powi(2 * pi - 2);
    let e = r.powi(pi) - (pf - 1.0) * r.powi(pi - 2) * w;
    let d2 = 1.0 - e * e;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Numeric(format!("non-positive denominator at r={r}")));
    }
    let a1 = 1.0 / (pf * d1);
    let a2 = 1.0 / (pf * d2);
    let a3 = -r.powi(pi - 1) / (pf * d1);
    let a4 = -e / (pf * d2);
    let k = -(pf - 2.0) + pf * r * r;
    let r2p2 = r.powi(2 * pi - 2) * w;
    let r2p4 = r.powi(2 * pi - 4) * w;
    let b1 = -pf + a2 * pf.powi(3) * r2p2;
    let b2 = -pf * r.powi(pi) - a4 * pf.powi(3) * r2p2;
    let b3 = a2 * pf * pf * (pf - 1.0) * r2p4 * k;
    let b4 = pf * (pf - 1.0) * r.powi(pi - 2) * w - a4 * pf * pf * (pf - 1.0) * r2p4 * k;
    Ok(([a1, a2, a3, a4], [b1, b2, b3, b4]))
}

/// Eigenvalues `(Σ_U,11 + Σ_U,12, Σ_U,11 - Σ_U,12)` of
/// `Σ_U = -(1/p)[[b₁, b₂], [b₂, b₁]]`. Each is taken from the equivalent
/// factored form
/// `(1-r²)(p-1)[(1+r²+…+r^{2p-4})/(p-1) ± r^{p-2}] / (1 ∓ (p r^p - (p-1) r^{p-2}))`
/// whenever its denominator is not small; that form keeps full relative
/// accuracy for an eigenvalue that vanishes as `r → ±1`, where the
/// `b`-coefficient sum cancels.
fn sigma_u_eigs(p: u32, r: f64, b: &[f64; 4]) -> (f64, f64) {
    let pf = p as f64;
    let pi = p as i32;
    let t = pf * r.powi(pi) - (pf - 1.0) * r.powi(pi - 2);
    let geo: f64 = (0..=pi - 2).map(|j| r.powi(2 * j)).sum();
    let eig = |sign: f64, from_b: f64| {
        let denom = 1.0 - sign * t;
        if denom.abs() >= 0.5 {
            (1.0 - r * r) * (pf - 1.0) * (geo / (pf - 1.0) + sign * r.powi(pi - 2)) / denom
        } else {
            from_b
        }
    };
    (eig(1.0, -(b[0] + b[1]) / pf), eig(-1.0, -(b[0] - b[1]) / pf))
}

fn sigma_u_from_b(p: u32, r: f64, b: &[f64; 4]) -> Matrix2<f64> {
    let (plus, minus) = sigma_u_eigs(p, r, b);
    sym2(0.5 * (plus + minus), 0.5 * (plus - minus))
}

fn sigma_u_inverse(p: u32, r: f64, b: &[f64; 4]) -> Matrix2<f64> {
    let (plus, minus) = sigma_u_eigs(p, r, b);
    sym2(0.5 * (1.0 / plus + 1.0 / minus), 0.5 * (1.0 / plus - 1.0 / minus))
}

/// `(Σ_U,11 + Σ_U,12, Σ_U,11 - Σ_U,12)`, each to full relative accuracy.
pub fn sigma_u_eigenvalues(p: u32, r: f64) -> Result<(f64, f64)> {
    let (_, b) = coefficients(p, r)?;
    Ok(sigma_u_eigs(p, r, &b))
}

/// Covariance of `(f(n), f(σ(r)))` given vanishing gradients at both points.
pub fn sigma_u(p: u32, r: f64) -> Result<Matrix2<f64>> {
    let (_, b) = coefficients(p, r)?;
    Ok(sigma_u_from_b(p, r, &b))
}

fn quad_form(x: [f64; 2], m: &Matrix2<f64>, y: [f64; 2]) -> f64 {
    x[0] * (m[(0, 0)] * y[0] + m[(0, 1)] * y[1]) + x[1] * (m[(1, 0)] * y[0] + m[(1, 1)] * y[1])
}

fn quad_form_abs(x: [f64; 2], m: &Matrix2<f64>, y: [f64; 2]) -> f64 {
    let a = m.abs();
    quad_form([x[0].abs(), x[1].abs()], &a, [y[0].abs(), y[1].abs()])
}

/// Round-off scales accompany each block: the sum of absolute values of the
/// terms that are added to form its entries.
struct ZqBlocks {
    z: Matrix2<f64>,
    q: Matrix2<f64>,
    z_scale: f64,
    q_scale: f64,
}

fn zq_from(p: u32, r: f64, a: &[f64; 4], b: &[f64; 4]) -> ZqBlocks {
    let pf = p as f64;
    let pi = p as i32;
    let w = 1.0 - r * r;
    let su_inv = sigma_u_inverse(p, r, b);
    let r2p4 = r.powi(2 * pi - 4) * w;
    let z_terms_11 = [pf * (pf - 1.0), -a[0] * pf * pf * (pf - 1.0).powi(2) * r2p4];
    let z_terms_12 = [
        pf * (pf - 1.0).powi(2) * r.powi(pi - 1),
        -mono(pf * (pf - 1.0) * (pf - 2.0), r, pi - 3),
        a[2] * pf * pf * (pf - 1.0).powi(2) * r2p4,
    ];
    let inner = mono(pf * (pf - 1.0), r, pi - 3) * (pf * r * r - (pf - 2.0));
    let q_terms_11 = [
        2.0 * pf * (pf - 1.0),
        -a[1] * w * inner * inner,
        -quad_form([b[2], b[3]], &su_inv, [b[2], b[3]]),
    ];
    let t = pf * pf * r * r - (pf - 1.0) * (pf - 2.0);
    let x = [b[0] + b[2], b[1] + b[3]];
    let y = [b[1] + b[3], b[0] + b[2]];
    let q_terms_12 = [
        pf.powi(4) * r.powi(pi),
        -2.0 * pf * (pf - 1.0) * (pf * pf - 2.0 * pf + 2.0) * r.powi(pi - 2),
        mono(pf * (pf - 1.0) * (pf - 2.0) * (pf - 3.0), r, pi - 4),
        a[3] * pf * pf * r.powi(2 * pi - 6) * w * t * t,
        -quad_form(x, &su_inv, y),
    ];
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let abs_sum = |v: &[f64]| v.iter().map(|t| t.abs()).sum::<f64>();
    ZqBlocks {
        z: sym2(sum(&z_terms_11), sum(&z_terms_12)),
        q: sym2(sum(&q_terms_11), sum(&q_terms_12)),
        z_scale: abs_sum(&z_terms_11).max(abs_sum(&z_terms_12)),
        q_scale: (abs_sum(&q_terms_11) + quad_form_abs([b[2], b[3]], &su_inv, [b[2], b[3]]))
            .max(abs_sum(&q_terms_12) + quad_form_abs(x, &su_inv, y)),
    }
}

/// The `(Σ_Z, Σ_Q)` blocks of the conditional Hessian law.
pub fn sigma_zq(p: u32, r: f64) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let (a, b) = coefficients(p, r)?;
    let blocks = zq_from(p, r, &a, &b);
    Ok((blocks.z, blocks.q))
}

/// `(Σ_Z, Σ_Q)` together with the round-off scale of each block.
pub fn sigma_zq_with_scales(p: u32, r: f64) -> Result<(Matrix2<f64>, Matrix2<f64>, f64, f64)> {
    let (a, b) = coefficients(p, r)?;
    let blocks = zq_from(p, r, &a, &b);
    Ok((blocks.z, blocks.q, blocks.z_scale, blocks.q_scale))
}

pub fn overlap_covariance(p: u32, r: f64) -> Result<OverlapCovariance> {
    let (a, b) = coefficients(p, r)?;
    let ZqBlocks { z, q, .. } = zq_from(p, r, &a, &b);
    Ok(OverlapCovariance {
        p,
        r,
        a,
        b,
        sigma_u: to_array(&sigma_u_from_b(p, r, &b)),
        sigma_z: to_array(&z),
        sigma_q: to_array(&q),
    })
}

/// Mean shifts `(m₁, m₂)` of the last diagonal Hessian entries.
pub fn m_shift(p: u32, r: f64, u1: f64, u2: f64) -> Result<(f64, f64)> {
    let (_, b) = coefficients(p, r)?;
    let inv = sigma_u_inverse(p, r, &b);
    let m1 = |x: f64, y: f64| quad_form([b[2], b[3]], &inv, [x, y]);
    Ok((m1(u1, u2), m1(u2, u1)))
}

/// Eigenvalues `(d - o, d + o)` of a 2×2 matrix with equal diagonal entries.
pub fn eig_sym2(m: &Matrix2<f64>) -> (f64, f64) {
    let (d, o) = (m[(0, 0)], m[(0, 1)]);
    ((d - o).min(d + o), (d - o).max(d + o))
}

/// Symmetric square root of a PSD 2×2 block with equal diagonal entries.
///
/// Eigenvalues down to `-1e-10·scale` are treated as round-off and clamped
/// to zero; `scale` is the magnitude of the terms the block was formed from.
pub fn psd_sqrt(m: &Matrix2<f64>, scale: f64) -> Result<Matrix2<f64>> {
    let (d, o) = (m[(0, 0)], m[(0, 1)]);
    let scale = scale.max(d.abs()).max(o.abs());
    let (mut lm, mut lp) = (d - o, d + o);
    for l in [&mut lm, &mut lp] {
        if *l < -1e-10 * scale {
            return Err(Error::DegenerateCovariance(format!(
                "eigenvalue {l} of a covariance block is negative beyond tolerance"
            )));
        }
        *l = l.max(0.0);
    }
    // eigenvectors (1,1)/√2 for d+o and (1,-1)/√2 for d-o
    let (sp, sm) = (lp.sqrt(), lm.sqrt());
    Ok(sym2(0.5 * (sp + sm), 0.5 * (sp - sm)))
}

/// `log φ(0, 0)`, the log-density of the two gradients at the origin.
pub fn gradient_density_at_zero(p: u32, n: usize, r: f64) -> Result<f64> {
    check_degree(p)?;
    check_overlap(r)?;
    if n < 2 {
        return domain("dimension must be at least 2");
    }
    let pf = p as f64;
    let pi = p as i32;
    let nf = n as f64;
    let c = pf * r.powi(pi) - (pf - 1.0) * r.powi(pi - 2);
    Ok(-(nf - 1.0) * (2.0 * std::f64::consts::PI * pf).ln()
        - (nf - 2.0) / 2.0 * (1.0 - r.powi(2 * pi - 2)).ln()
        - 0.5 * (1.0 - c * c).ln())
}

/// One component of the Gaussian vector at a single point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Value,
    Grad(usize),
    Hess(usize, usize),
}

/// Covariance of the field, its gradient and Hessian at `n` and `σ(r)`.
#[derive(Debug, Clone)]
pub struct JointCovariance {
    pub p: u32,
    pub n: usize,
    pub r: f64,
    /// Ordering: `f(n), f(σ), ∇f(n), ∇f(σ), ∇²f(n), ∇²f(σ)`, Hessians as
    /// upper triangles in row-major order.
    pub matrix: DMatrix<f64>,
}

fn kd(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `𝔼{X(n) Y(σ(r))}`; at `r = 1` this gives same-point covariances.
pub fn cross_component(p: u32, d: usize, r: f64, x: Component, y: Component) -> f64 {
    use Component::*;
    let pf = p as f64;
    let pi = p as i32;
    let last = d - 1;
    let w = 1.0 - r * r;
    let s = w.max(0.0).sqrt();
    let is_last = |i: usize| kd(i, last);
    let not_last = |i: usize| 1.0 - kd(i, last);
    let r_pm2 = r.powi(pi - 2);
    let t3 = |j: usize, k: usize, l: usize| {
        mono(pf * (pf - 1.0) * (pf - 2.0), r, pi - 3) * s * w * is_last(j) * is_last(k) * is_last(l)
            - pf * (pf - 1.0) * r_pm2 * s
                * ((kd(j, k) * not_last(j) + r * kd(j, k) * is_last(j)) * is_last(l)
                    + (kd(j, l) * not_last(j) + r * kd(j, l) * is_last(j)) * is_last(k))
            - pf * pf * r.powi(pi - 1) * s * kd(k, l) * is_last(j)
    };
    match (x, y) {
        (Value, Value) => r.powi(pi),
        (Value, Grad(l)) => -pf * r.powi(pi - 1) * s * is_last(l),
        (Grad(l), Value) => pf * r.powi(pi - 1) * s * is_last(l),
        (Value, Hess(k, l)) | (Hess(k, l), Value) => {
            pf * (pf - 1.0) * r_pm2 * w * kd(k, l) * is_last(k) - pf * r.powi(pi) * kd(k, l)
        }
        (Grad(j), Grad(l)) => {
            (pf * r.powi(pi) - pf * (pf - 1.0) * r_pm2 * w) * kd(j, l) * is_last(j)
                + pf * r.powi(pi - 1) * kd(j, l) * not_last(j)
        }
        (Grad(j), Hess(k, l)) => t3(j, k, l),
        (Hess(k, l), Grad(j)) => -t3(j, k, l),
        (Hess(i, j), Hess(k, l)) => {
            let all_last = is_last(i) * is_last(j) * is_last(k) * is_last(l);
            let dij = kd(i, j);
            let dkl = kd(k, l);
            let g = |a: usize, b: usize| kd(a, b) * not_last(a) + r * kd(a, b) * is_last(a);
            mono(pf * (pf - 1.0) * (pf - 2.0) * (pf - 3.0), r, pi - 4) * w * w * all_last
                - mono(pf * (pf - 1.0) * (pf - 2.0), r, pi - 3)
                    * w
                    * (4.0 * r * all_last
                        + r * dij * dkl * is_last(k)
                        + r * dij * is_last(i) * dkl
                        + kd(j, l) * is_last(j) * kd(i, k) * not_last(i)
                        + kd(i, k) * is_last(i) * kd(j, l) * not_last(j)
                        + kd(i, l) * is_last(i) * kd(j, k) * not_last(j)
                        + kd(j, k) * is_last(j) * kd(i, l) * not_last(i))
                + pf * (pf - 1.0)
                    * r_pm2
                    * (-2.0 * w * dij * is_last(i) * dkl + g(j, l) * g(i, k) + g(i, l) * g(j, k))
                + pf * (pf - 1.0) * r_pm2 * (-w * dij * dkl * is_last(k) + r * r * dij * dkl)
                - pf * (pf - 1.0) * r_pm2 * w * dij * dkl * is_last(k)
                + pf * r.powi(pi) * dij * dkl
        }
    }
}

impl JointCovariance {
    fn d(&self) -> usize {
        self.n - 1
    }

    pub fn hess_len(&self) -> usize {
        let d = self.d();
        d * (d + 1) / 2
    }

    /// Position of `component` at point 0 (`n`) or 1 (`σ(r)`).
    pub fn index_of(&self, point: usize, component: Component) -> usize {
        layout_index(self.d(), point, component)
    }

    pub fn components(&self) -> Vec<(usize, Component)> {
        layout(self.d())
    }
}

fn hess_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            v.push((i, j));
        }
    }
    v
}

fn layout(d: usize) -> Vec<(usize, Component)> {
    let mut v = vec![(0, Component::Value), (1, Component::Value)];
    for pt in 0..2 {
        v.extend((0..d).map(|i| (pt, Component::Grad(i))));
    }
    for pt in 0..2 {
        v.extend(hess_pairs(d).into_iter().map(|(i, j)| (pt, Component::Hess(i, j))));
    }
    v
}

fn layout_index(d: usize, point: usize, c: Component) -> usize {
    let h = d * (d + 1) / 2;
    match c {
        Component::Value => point,
        Component::Grad(i) => 2 + point * d + i,
        Component::Hess(i, j) => {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            // rows 0..i contribute d, d-1, ..., d-i+1 entries
            let offset = (0..i).map(|k| d - k).sum::<usize>() + (j - i);
            2 + 2 * d + point * h + offset
        }
    }
}

/// Assembles the joint covariance of values, gradients and Hessians at both points.
pub fn joint_covariance(p: u32, n: usize, r: f64) -> Result<JointCovariance> {
    check_degree(p)?;
    check_overlap(r)?;
    if n < 3 {
        return domain("joint covariance needs N >= 3");
    }
    let d = n - 1;
    let comps = layout(d);
    let m = comps.len();
    let mut matrix = DMatrix::zeros(m, m);
    for (a, &(pa, ca)) in comps.iter().enumerate() {
        for (b, &(pb, cb)) in comps.iter().enumerate().skip(a) {
            let v = match (pa, pb) {
                (0, 1) => cross_component(p, d, r, ca, cb),
                (1, 0) => cross_component(p, d, r, cb, ca),
                _ => cross_component(p, d, 1.0, ca, cb),
            };
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    Ok(JointCovariance { p, n, r, matrix })
}

/// Discrepancies between generic Gaussian conditioning and the explicit
/// block structure of the two conditional Hessians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalHessianReport {
    pub max_cov_discrepancy: f64,
    pub max_mean_discrepancy: f64,
    pub max_discrepancy: f64,
    /// Cross-covariance between matching off-diagonal entries of the two
    /// upper-left blocks, divided by their variance.
    pub block_cross_correlation: f64,
    pub sigma_z_min_eigenvalue: f64,
    pub sigma_q_min_eigenvalue: f64,
}

/// Conditional mean and covariance of both scaled Hessians given
/// `f(n) = u1`, `f(σ) = u2` and vanishing gradients, by Schur complement.
pub fn conditional_hessians(
    p: u32,
    n: usize,
    r: f64,
    u1: f64,
    u2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let jc = joint_covariance(p, n, r)?;
    let d = n - 1;
    let nb = 2 + 2 * d;
    let total = jc.matrix.nrows();
    let na = total - nb;
    let sbb = jc.matrix.view((0, 0), (nb, nb)).into_owned();
    let sab = jc.matrix.view((nb, 0), (na, nb)).into_owned();
    let saa = jc.matrix.view((nb, nb), (na, na)).into_owned();
    let chol = sbb.cholesky().ok_or_else(|| {
        Error::DegenerateConditioning(format!("value/gradient covariance is singular at r={r}"))
    })?;
    let mut b = DVector::zeros(nb);
    b[0] = u1;
    b[1] = u2;
    let mean = &sab * chol.solve(&b);
    let cov = saa - &sab * chol.solve(&sab.transpose());
    let scale = ((n as f64 - 1.0) * p as f64 * (p as f64 - 1.0)).sqrt();
    Ok((mean / scale, cov / (scale * scale)))
}

pub fn conditional_hessian_check(p: u32, n: usize, r: f64, u1: f64, u2: f64) -> Result<ConditionalHessianReport> {
    let (mean, cov) = conditional_hessians(p, n, r, u1, u2)?;
    let oc = overlap_covariance(p, r)?;
    let (m1, m2) = m_shift(p, r, u1, u2)?;
    let pf = p as f64;
    let nf = n as f64;
    let d = n - 1;
    let last = d - 1;
    let s2 = (nf - 1.0) * pf * (pf - 1.0);
    let s = s2.sqrt();
    let pairs = hess_pairs(d);
    let h = pairs.len();
    let sign = if r < 0.0 && p % 2 == 1 { -1.0 } else { 1.0 };
    let block_corr = sign * r.abs().powi(p as i32 - 2);
    let shift = (pf / ((pf - 1.0) * (nf - 1.0))).sqrt();
    let u = [u1, u2];
    let m = [m1, m2];

    let predicted_cov = |a: usize, b: usize| -> f64 {
        let (pa, (i, j)) = (a / h, pairs[a % h]);
        let (pb, (k, l)) = (b / h, pairs[b % h]);
        if (i, j) != (k, l) {
            return 0.0;
        }
        let same = pa == pb;
        if j < last {
            let var = if i == j { 2.0 / (nf - 1.0) } else { 1.0 / (nf - 1.0) };
            if same {
                var
            } else {
                var * block_corr
            }
        } else if i < last {
            if same {
                oc.sigma_z[0][0] / s2
            } else {
                oc.sigma_z[0][1] / s2
            }
        } else if same {
            oc.sigma_q[0][0] / s2
        } else {
            oc.sigma_q[0][1] / s2
        }
    };
    let mut max_cov = 0.0f64;
    for a in 0..2 * h {
        for b in 0..2 * h {
            max_cov = max_cov.max((cov[(a, b)] - predicted_cov(a, b)).abs());
        }
    }
    let mut max_mean = 0.0f64;
    for a in 0..2 * h {
        let (pt, (i, j)) = (a / h, pairs[a % h]);
        let mut pred = 0.0;
        if i == j {
            pred -= shift * u[pt];
            if i == last {
                pred += m[pt] / s;
            }
        }
        max_mean = max_mean.max((mean[a] - pred).abs());
    }
    let zmat = Matrix2::from_fn(|i, j| oc.sigma_z[i][j]);
    let qmat = Matrix2::from_fn(|i, j| oc.sigma_q[i][j]);
    Ok(ConditionalHessianReport {
        max_cov_discrepancy: max_cov,
        max_mean_discrepancy: max_mean,
        max_discrepancy: max_cov.max(max_mean),
        block_cross_correlation: block_corr,
        sigma_z_min_eigenvalue: eig_sym2(&zmat).0,
        sigma_q_min_eigenvalue: eig_sym2(&qmat).0,
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
