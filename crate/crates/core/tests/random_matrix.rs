use nalgebra::DMatrix;
use pspin::covariance::conditional_hessians;
use pspin::random_matrix::{
    correlated_goe_pair, det_abs_moment, det_perturb_check, ghat_curve, goe_sample, hessian_pair_sample,
    spectral_summary, tail_check, HessianPairLaw,
};
use pspin::stats::replica_rng;
use pspin::Error;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

/// Running first and second moments of a set of scalar statistics.
struct Moments {
    n: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { n: 0.0, sum: vec![0.0; k], sum_sq: vec![0.0; k] }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1.0;
        for (i, x) in xs.iter().enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n
    }

    fn std_error(&self, i: usize) -> f64 {
        let m = self.mean(i);
        ((self.sum_sq[i] / self.n - m * m).max(0.0) / (self.n - 1.0)).sqrt()
    }
}

#[test]
fn goe_entry_variances_and_trace() {
    let n = 8;
    let samples = 100_000;
    let mut rng = replica_rng(11, 0);
    // statistics: x₀₁², x₀₀², trace, and fourth powers for the variance SE
    let mut mom = Moments::new(3);
    for _ in 0..samples {
        let x = goe_sample(n, &mut rng).unwrap();
        assert_eq!(x, x.transpose());
        mom.push(&[x[(0, 1)] * x[(0, 1)], x[(3, 3)] * x[(3, 3)], x.trace()]);
    }
    let off = (mom.mean(0), mom.std_error(0));
    let diag = (mom.mean(1), mom.std_error(1));
    let tr = (mom.mean(2), mom.std_error(2));
    assert!((off.0 - 1.0 / 8.0).abs() <= 3.0 * off.1, "{off:?}");
    assert!((diag.0 - 2.0 / 8.0).abs() <= 3.0 * diag.1, "{diag:?}");
    assert!(tr.0.abs() <= 3.0 * tr.1, "{tr:?}");
    assert!(matches!(goe_sample(0, &mut rng), Err(Error::Domain(_))));
}

#[test]
fn correlated_pair_sign_and_marginals() {
    let samples = 100_000;
    let mut rng = replica_rng(12, 0);
    let mut mom = Moments::new(4);
    for _ in 0..samples {
        let (x1, x2) = correlated_goe_pair(6, 3, -0.5, &mut rng).unwrap();
        // off-diagonal entries have variance 1/6, so the scaled product is the correlation
        mom.push(&[6.0 * x1[(1, 4)] * x2[(1, 4)], 6.0 * x1[(1, 4)].powi(2), 6.0 * x2[(1, 4)].powi(2), 3.0 * x1[(2, 2)].powi(2)]);
    }
    assert!((mom.mean(0) + 0.5).abs() <= 3.0 * mom.std_error(0), "corr {}", mom.mean(0));
    for i in 1..4 {
        assert!((mom.mean(i) - 1.0).abs() <= 3.0 * mom.std_error(i), "stat {i}: {}", mom.mean(i));
    }
}

#[test]
fn correlated_pair_limits() {
    let mut rng = replica_rng(13, 0);
    for p in [4u32, 6] {
        let (x1, x2) = correlated_goe_pair(5, p, 1.0, &mut rng).unwrap();
        assert_eq!(x1, x2);
        let (x1, x2) = correlated_goe_pair(5, p, -1.0, &mut rng).unwrap();
        assert_eq!(x1, x2);
    }
    let (x1, x2) = correlated_goe_pair(5, 3, -1.0, &mut rng).unwrap();
    assert_eq!(x1, -x2);
    let mut mom = Moments::new(1);
    for _ in 0..50_000 {
        let (x1, x2) = correlated_goe_pair(4, 3, 0.0, &mut rng).unwrap();
        mom.push(&[4.0 * x1[(0, 2)] * x2[(0, 2)]]);
    }
    assert!(mom.mean(0).abs() <= 3.0 * mom.std_error(0));
    assert!(matches!(correlated_goe_pair(4, 3, 1.5, &mut rng), Err(Error::Domain(_))));
}

fn upper_entries(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Sample means and covariances of the sampled pair against Gaussian conditioning
/// of the joint value/gradient/Hessian law.
#[test]
fn hessian_pair_matches_conditional_law() {
    let (p, n, r, u1, u2) = (3u32, 6usize, 0.4, -1.6, -1.7);
    let (mean, cov) = conditional_hessians(p, n, r, u1, u2).unwrap();
    let law = HessianPairLaw::new(p, n, r).unwrap();
    let k = mean.len();
    let samples = 100_000;
    let mut rng = replica_rng(14, 0);
    let mut sum = vec![0.0; k];
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (m1, m2) = law.sample(u1, u2, &mut rng).unwrap();
        let mut x = upper_entries(&m1);
        x.extend(upper_entries(&m2));
        for (s, v) in sum.iter_mut().zip(&x) {
            *s += v;
        }
        xs.push(x);
    }
    let ns = samples as f64;
    let emp_mean: Vec<f64> = sum.iter().map(|s| s / ns).collect();
    for a in 0..k {
        let var: f64 = xs.iter().map(|x| (x[a] - emp_mean[a]).powi(2)).sum::<f64>() / (ns - 1.0);
        let se = (var / ns).sqrt();
        assert!((emp_mean[a] - mean[a]).abs() <= 3.0 * se + 1e-9, "mean {a}: {} vs {}", emp_mean[a], mean[a]);
    }
    // family-wise bound over all k(k+1)/2 covariance entries at level 1e-3
    let tests = (k * (k + 1) / 2) as f64;
    let z_max = Normal::standard().inverse_cdf(1.0 - 1e-3 / (2.0 * tests));
    assert!(z_max > 4.0);
    for a in 0..k {
        for b in a..k {
            let prods: Vec<f64> = xs.iter().map(|x| (x[a] - emp_mean[a]) * (x[b] - emp_mean[b])).collect();
            let c = prods.iter().sum::<f64>() / (ns - 1.0);
            let v = prods.iter().map(|q| (q - c).powi(2)).sum::<f64>() / (ns - 1.0);
            let se = (v / ns).sqrt();
            assert!((c - cov[(a, b)]).abs() <= z_max * se + 1e-9, "cov ({a},{b}): {c} vs {} (se {se})", cov[(a, b)]);
        }
    }
}

#[test]
fn hessian_pair_mean_example() {
    let (p, n, r, u1, u2) = (3u32, 6usize, 0.4, -1.6, -1.7);
    let law = HessianPairLaw::new(p, n, r).unwrap();
    let shift = (3.0f64 / (2.0 * 5.0)).sqrt();
    assert!((law.diagonal_shift() - shift).abs() < 1e-15);
    let (c1, _) = law.corner_shift(u1, u2);
    let samples = 100_000;
    let mut rng = replica_rng(15, 0);
    let mut mom = Moments::new(25);
    for _ in 0..samples {
        let (m1, _) = law.sample(u1, u2, &mut rng).unwrap();
        mom.push(m1.as_slice());
    }
    for j in 0..5 {
        for i in 0..5 {
            let mut expected = if i == j { -shift * u1 } else { 0.0 };
            if i == 4 && j == 4 {
                expected += c1;
            }
            let idx = j * 5 + i;
            assert!((mom.mean(idx) - expected).abs() <= 3.0 * mom.std_error(idx) + 1e-9, "({i},{j})");
        }
    }
}

#[test]
fn hessian_pair_blocks_and_domain() {
    let samples = 50_000;
    let mut rng = replica_rng(16, 0);
    let law = HessianPairLaw::new(4, 6, 0.0).unwrap();
    let mut mom = Moments::new(2);
    for _ in 0..samples {
        let (m1, m2) = law.sample(-1.8, -1.8, &mut rng).unwrap();
        mom.push(&[5.0 * m1[(0, 2)] * m2[(0, 2)], 5.0 * m1[(0, 2)].powi(2)]);
    }
    assert!(mom.mean(0).abs() <= 3.0 * mom.std_error(0));
    // off-diagonal upper-left entries have variance 1/(N-1)
    assert!((mom.mean(1) - 1.0).abs() <= 3.0 * mom.std_error(1));
    assert!(matches!(hessian_pair_sample(3, 2, 0.2, -1.0, -1.0, &mut rng), Err(Error::Domain(_))));
    assert!(matches!(hessian_pair_sample(3, 6, 1.0, -1.0, -1.0, &mut rng), Err(Error::Domain(_))));
}

#[test]
fn spectral_summary_examples() {
    let s = spectral_summary(&DMatrix::identity(4, 4)).unwrap();
    assert_eq!(s.eigenvalues, vec![1.0; 4]);
    assert_eq!(s.max_abs, 1.0);
    let mut asym = DMatrix::identity(3, 3);
    asym[(0, 1)] = 1e-6;
    assert!(matches!(spectral_summary(&asym), Err(Error::Domain(_))));

    let mut rng = replica_rng(17, 0);
    let big = spectral_summary(&goe_sample(1000, &mut rng).unwrap()).unwrap();
    assert!(big.semicircle_distance < 0.05, "{}", big.semicircle_distance);
    assert!(big.eigenvalues.windows(2).all(|w| w[0] <= w[1]));

    let mean_edge: f64 = (0..100)
        .map(|i| spectral_summary(&goe_sample(200, &mut replica_rng(18, i)).unwrap()).unwrap().max_abs)
        .sum::<f64>()
        / 100.0;
    // Tracy-Widom: the edge sits O(n^{-2/3}) inside 2 on average
    assert!((mean_edge - 2.0).abs() < 0.05, "{mean_edge}");
}

#[test]
fn det_moment_scalar_closed_form() {
    for s in [0.0, 0.7, -1.3, 2.5] {
        // 𝔼|Z - s| for Z ~ N(0, 2)
        let phi = 0.5 * (1.0 + erf(s / 2.0));
        let exact = (4.0 / std::f64::consts::PI).sqrt() * (-s * s / 4.0).exp() + s * (2.0 * phi - 1.0);
        let est = det_abs_moment(1, s, 1, 200_000, 21).unwrap();
        assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "s={s}: {} vs {exact}", est.mean);
    }
}

/// `𝔼|λ₁λ₂|` for GOE(2), from the eigenvalue density `∝ |λ₁-λ₂| e^{-(λ₁²+λ₂²)/2}`
/// in polar coordinates of the rotated pair `((λ₁+λ₂)/√2, (λ₁-λ₂)/√2)`.
fn goe2_abs_det() -> f64 {
    // |det| = ρ²|cos 2φ|/2 and |λ₁-λ₂| = √2 ρ|sin φ|; radial moments are Gaussian
    let radial_num = 3.0 * (std::f64::consts::PI / 2.0).sqrt();
    let radial_den = (std::f64::consts::PI / 2.0).sqrt();
    // angular integrals split at the kinks φ = kπ/4
    let panels = 8;
    let per = 2000;
    let mut ang_num = 0.0;
    let mut ang_den = 0.0;
    for k in 0..panels {
        let a = k as f64 * std::f64::consts::FRAC_PI_4;
        let h = std::f64::consts::FRAC_PI_4 / per as f64;
        for i in 0..=per {
            let w = if i == 0 || i == per { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let phi = a + h * i as f64;
            ang_num += w * h / 3.0 * (2.0 * phi).cos().abs() * phi.sin().abs() / 2.0;
            ang_den += w * h / 3.0 * phi.sin().abs();
        }
    }
    radial_num * ang_num / (radial_den * ang_den)
}

#[test]
fn det_moment_goe2_quadrature() {
    let exact = goe2_abs_det();
    let est = det_abs_moment(2, 0.0, 1, 200_000, 22).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{} vs {exact}", est.mean);
}

#[test]
fn det_moment_large_shift_and_domain() {
    for n in [2usize, 5] {
        let est = det_abs_moment(n, 200.0, 1, 1000, 23).unwrap();
        assert!((est.log_mean - n as f64 * 200f64.ln()).abs() < 1e-3);
        let sq = det_abs_moment(n, 200.0, 2, 1000, 23).unwrap();
        assert!((sq.log_mean - 2.0 * n as f64 * 200f64.ln()).abs() < 1e-3);
    }
    assert!(matches!(det_abs_moment(3, 0.0, 3, 1000, 1), Err(Error::Domain(_))));
    assert!(matches!(det_abs_moment(3, 0.0, 1, 50, 1), Err(Error::Domain(_))));
}

#[test]
fn seeded_estimates_are_reproducible_across_thread_counts() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (det_abs_moment(4, 0.5, 1, 3000, 99).unwrap(), ghat_curve(3, 1.0, &[0.0, 0.5], 5000, 99).unwrap()))
    };
    let (a1, g1) = run(1);
    let (a3, g3) = run(3);
    assert_eq!(a1, a3);
    assert_eq!(g1, g3);
    let other = det_abs_moment(4, 0.5, 1, 3000, 100).unwrap();
    assert_ne!(a1.mean, other.mean);
}

#[test]
fn ghat_scalar_closed_form() {
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let v = 0.8;
    let curve = ghat_curve(1, v, &grid, 200_000, 31).unwrap();
    for pt in &curve.points {
        let exact = 2.0 * pt.rho + v * v;
        assert!((pt.value - exact).abs() <= 3.0 * pt.std_error, "rho={}: {} vs {exact}", pt.rho, pt.value);
    }
}

/// `𝔼 det(sI - X) = σⁿ Heₙ(s/σ)` for GOE with off-diagonal variance σ² = 1/n.
fn goe_expected_char_poly(n: usize, s: f64) -> f64 {
    let sigma = 1.0 / (n as f64).sqrt();
    let y = s / sigma;
    let (mut h0, mut h1) = (1.0, y);
    for k in 1..n {
        let h2 = y * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    sigma.powi(n as i32) * if n == 0 { h0 } else { h1 }
}

#[test]
fn ghat_at_zero_is_squared_mean_determinant() {
    for (n, s) in [(2usize, 0.5), (4, 1.5), (6, 2.5)] {
        let curve = ghat_curve(n, s, &[0.0], 200_000, 32).unwrap();
        let exact = goe_expected_char_poly(n, s).powi(2);
        let pt = &curve.points[0];
        assert!((pt.value - exact).abs() <= 3.0 * pt.std_error, "n={n}: {} vs {exact}", pt.value);
    }
}

#[test]
fn ghat_convexity_and_chain() {
    let grid = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0];
    let curve = ghat_curve(6, 2.5, &grid, 100_000, 33).unwrap();
    let idx = |rho: f64| curve.index_of(rho).unwrap();
    let k = grid.len();
    for w in [0.0, 0.25, 0.5].windows(1) {
        let a = w[0];
        let mut c = vec![0.0; k];
        c[idx(a)] += 1.0;
        c[idx(a + 0.25)] -= 2.0;
        c[idx(a + 0.5)] += 1.0;
        let (second, se) = curve.contrast(&c);
        assert!(second >= -3.0 * se, "second difference at {a}: {second} (se {se})");
    }
    let g0 = idx(0.0);
    let g1 = idx(1.0);
    for rho in [0.25, 0.5, 0.75] {
        let (ip, im) = (idx(rho), idx(-rho));
        let mut up = vec![0.0; k];
        up[ip] = 1.0;
        up[g0] = -1.0;
        let (rise, rise_se) = curve.contrast(&up);
        // ĝ(ρ) - ĝ(0) ≤ ρ(ĝ(1) - ĝ(0))
        let mut chord = up.clone();
        chord[g1] -= rho;
        chord[g0] += rho;
        let (gap, gap_se) = curve.contrast(&chord);
        assert!(gap <= 3.0 * gap_se, "rho={rho}: chord gap {gap}");
        // |ĝ(-ρ) - ĝ(0)| ≤ ĝ(ρ) - ĝ(0), both signs of the left side
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; k];
            c[im] += sign;
            c[g0] -= sign;
            c[ip] -= 1.0;
            c[g0] += 1.0;
            let (excess, se) = curve.contrast(&c);
            assert!(excess <= 3.0 * se, "rho={rho} sign={sign}: {excess} (rise {rise} ± {rise_se})");
        }
    }
}

#[test]
fn ghat_domain() {
    assert!(matches!(ghat_curve(3, 1.0, &[1.5], 100, 1), Err(Error::Domain(_))));
    assert!(matches!(ghat_curve(3, 1.0, &[], 100, 1), Err(Error::Domain(_))));
}

#[test]
fn perturbation_bound_holds() {
    for d in [1usize, 2] {
        let rep = det_perturb_check(5, d, 10_000, 41).unwrap();
        assert_eq!(rep.violations, 0, "d={d} max ratio {}", rep.max_ratio);
        assert!(rep.max_ratio <= 1.0 + 1e-10);
    }
    assert!(matches!(det_perturb_check(5, 3, 10, 1), Err(Error::Domain(_))));
}

#[test]
fn tail_examples() {
    let rep = tail_check(10, 3.0, 100_000, 51).unwrap();
    assert!(rep.frequency <= (-10.0f64).exp() + 3.0 * rep.std_error, "{rep:?}");
    assert!(rep.within_bound);
    let rep = tail_check(50, 3.0, 5_000, 52).unwrap();
    assert_eq!(rep.exceedances, 0);
    let rep = tail_check(10, 50.0, 5_000, 53).unwrap();
    assert_eq!(rep.frequency, 0.0);
    assert!(matches!(tail_check(10, 2.0, 100, 1), Err(Error::Domain(_))));
}
