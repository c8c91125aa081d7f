//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Two-point kernel `⟨φ_n(x), φ_σ(y)⟩^p` in projection charts around the
/// north pole and around `σ(r)`; the distinguished direction is the last
/// tangent coordinate.
pub fn chart_kernel(p: u32, r: f64, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let l = d - 1;
    let nx = (1.0 - x.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let ny = (1.0 - y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let s = (1.0 - r * r).max(0.0).sqrt();
    let mut rho: f64 = (0..l).map(|i| x[i] * y[i]).sum();
    rho += r * x[l] * y[l] + s * x[l] * ny + r * nx * ny - s * y[l] * nx;
    rho.powi(p as i32)
}

fn stencil(order: usize) -> (Vec<(i32, f64)>, i32) {
    match order {
        0 => (vec![(0, 1.0)], 0),
        1 => (vec![(-1, -0.5), (1, 0.5)], 1),
        2 => (vec![(-1, 1.0), (0, -2.0), (1, 1.0)], 2),
        3 => (vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)], 3),
        4 => (vec![(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)], 4),
        _ => panic!("unsupported derivative order {order}"),
    }
}

/// Mixed partial derivative of `k(x, y)` at `(0, 0)` by tensor-product central
/// differences; `alpha`/`beta` list the differentiated coordinates.
fn mixed_fd<K: Fn(&[f64], &[f64]) -> f64>(k: &K, d: usize, alpha: &[usize], beta: &[usize], h: f64) -> f64 {
    // one axis per coordinate of x then of y
    let mut orders = vec![0usize; 2 * d];
    for &a in alpha {
        orders[a] += 1;
    }
    for &b in beta {
        orders[d + b] += 1;
    }
    let axes: Vec<(usize, Vec<(i32, f64)>, i32)> = orders
        .iter()
        .enumerate()
        .filter(|(_, &o)| o > 0)
        .map(|(i, &o)| {
            let (s, pw) = stencil(o);
            (i, s, pw)
        })
        .collect();
    let total_pow: i32 = axes.iter().map(|a| a.2).sum();
    let mut acc = 0.0;
    let mut idx = vec![0usize; axes.len()];
    let mut pt = vec![0.0; 2 * d];
    loop {
        let mut w = 1.0;
        for v in pt.iter_mut() {
            *v = 0.0;
        }
        for (a, &i) in axes.iter().zip(&idx) {
            let (off, c) = a.1[i];
            pt[a.0] = off as f64 * h;
            w *= c;
        }
        acc += w * k(&pt[..d], &pt[d..]);
        let mut carry = 0;
        loop {
            if carry == idx.len() {
                return acc / h.powi(total_pow);
            }
            idx[carry] += 1;
            if idx[carry] < axes[carry].1.len() {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if idx.is_empty() {
            return acc / h.powi(total_pow);
        }
    }
}

/// Three-level Richardson extrapolation of `mixed_fd` with steps `h, h/2, h/4`.
pub fn mixed_derivative<K: Fn(&[f64], &[f64]) -> f64>(k: &K, d: usize, alpha: &[usize], beta: &[usize], h: f64) -> f64 {
    if alpha.is_empty() && beta.is_empty() {
        return k(&vec![0.0; d], &vec![0.0; d]);
    }
    let a = mixed_fd(k, d, alpha, beta, h);
    let b = mixed_fd(k, d, alpha, beta, h / 2.0);
    let c = mixed_fd(k, d, alpha, beta, h / 4.0);
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Double-exponential (tanh-sinh) quadrature on `[a, b]`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, levels: usize) -> f64 {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut h = 1.0;
    let mut prev = f64::NAN;
    let mut est = 0.0;
    for level in 0..levels {
        let mut sum = 0.0;
        let kmax = (4.0 / h) as i64;
        for k in -kmax..=kmax {
            let t = k as f64 * h;
            let u = 0.5 * std::f64::consts::PI * t.sinh();
            let x = u.tanh();
            let w = 0.5 * std::f64::consts::PI * t.cosh() / (u.cosh() * u.cosh());
            // distance to the nearer endpoint, computed without cancellation
            let dist = half / ((u.abs()).exp() * u.cosh());
            let xx = if x < 0.0 { a + dist } else { b - dist };
            if xx <= a || xx >= b || w < 1e-300 {
                continue;
            }
            let xx = if k == 0 { c } else { xx };
            sum += w * f(xx);
        }
        est = sum * h * half;
        if level > 2 && (est - prev).abs() <= 1e-14 * est.abs().max(1e-300) {
            break;
        }
        prev = est;
        h /= 2.0;
    }
    est
}

pub fn semicircle_density(l: f64) -> f64 {
    (4.0 - l * l).max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// `∫ f dμ*` by tanh-sinh quadrature, split at an interior singular point.
pub fn semicircle_expectation<F: Fn(f64) -> f64>(f: F, split: Option<f64>) -> f64 {
    let g = |l: f64| f(l) * semicircle_density(l);
    match split {
        Some(s) if s > -2.0 && s < 2.0 => tanh_sinh(&g, -2.0, s, 12) + tanh_sinh(&g, s, 2.0, 12),
        _ => tanh_sinh(&g, -2.0, 2.0, 12),
    }
}

/// Log-potential of the semicircle law by quadrature.
pub fn omega_oracle(x: f64) -> f64 {
    semicircle_expectation(|l| (l - x).abs().ln(), Some(x))
}
