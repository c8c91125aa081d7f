use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use pspin::complexity_landscape::kr_prefactors;
use pspin::enumeration::{enumerate_critical_points, sample_hamiltonian};
use pspin::kac_rice::{
    asymptote_report, first_moment, first_moment_exact_small, first_moment_log_prefactor, first_moment_set,
    second_moment, second_moment_integrand, LevelSet,
};
use pspin::special_functions::{theta, thresholds};
use pspin::stats::replica_rng;
use pspin::Error;

/// Independent first moment from the eigenvalues of an N×N GOE with
/// off-diagonal variance 1/(2N) and diagonal variance 1/N:
/// `𝔼 Crt_N((-∞, u)) = 2√(2/p)(p-1)^{N/2} 𝔼 Σ_k e^{-N(p-2)λ_k²/(2p)} 1{λ_k < √(p/(2(p-1))) u}`.
/// Returns `(log mean, relative standard error)`.
fn eigenvalue_oracle(p: u32, n: usize, u: f64, samples: usize, seed: u64) -> (f64, f64) {
    let pf = p as f64;
    let nf = n as f64;
    let cut = (pf / (2.0 * (pf - 1.0))).sqrt() * u;
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed ^ 0x5eed, i as u64);
            let mut m = DMatrix::<f64>::zeros(n, n);
            for a in 0..n {
                m[(a, a)] = rng.sample::<f64, _>(StandardNormal) / nf.sqrt();
                for b in a + 1..n {
                    let x = rng.sample::<f64, _>(StandardNormal) / (2.0 * nf).sqrt();
                    m[(a, b)] = x;
                    m[(b, a)] = x;
                }
            }
            m.symmetric_eigenvalues()
                .iter()
                .filter(|&&l| l < cut)
                .map(|&l| (-nf * (pf - 2.0) * l * l / (2.0 * pf)).exp())
                .sum()
        })
        .collect();
    let ns = samples as f64;
    let mean = vals.iter().sum::<f64>() / ns;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ns - 1.0);
    let log_pre = (2.0 * (2.0 / pf).sqrt()).ln() + 0.5 * nf * (pf - 1.0).ln();
    (log_pre + mean.ln(), (var / ns).sqrt() / mean)
}

#[test]
fn eigenvalue_oracle_reproduces_exact_small_n() {
    let exact = first_moment_exact_small(3, 3, 50.0).unwrap();
    let (log_mean, rel) = eigenvalue_oracle(3, 3, 50.0, 400_000, 1);
    assert!((log_mean - exact.ln()).abs() <= 3.0 * rel, "{} vs {exact}", log_mean.exp());
    let exact = first_moment_exact_small(3, 3, -0.5).unwrap();
    let (log_mean, rel) = eigenvalue_oracle(3, 3, -0.5, 400_000, 2);
    assert!((log_mean - exact.ln()).abs() <= 3.0 * rel, "{} vs {exact}", log_mean.exp());
}

#[test]
fn first_moment_matches_eigenvalue_oracle() {
    for (p, n, u) in [(3u32, 6usize, -1.6), (3, 10, -1.6), (4, 8, -1.7), (3, 8, 0.5)] {
        let ours = first_moment(p, n, u, 200_000, 7).unwrap();
        let (oracle, orel) = eigenvalue_oracle(p, n, u, 200_000, 8);
        let se = (ours.estimate.relative_error().powi(2) + orel * orel).sqrt();
        let diff = ours.estimate.log_mean - oracle;
        assert!(diff.abs() <= 3.0 * se, "p={p} N={n} u={u}: log {} vs {oracle} (se {se})", ours.estimate.log_mean);
    }
}

#[test]
fn exact_small_n_matches_monte_carlo() {
    for (n, u) in [(2usize, 10.0), (2, -0.5), (3, -0.5), (3, 1.0)] {
        let exact = first_moment_exact_small(3, n, u).unwrap();
        let mc = first_moment(3, n, u, 200_000, 3).unwrap();
        assert!((mc.estimate.mean - exact).abs() <= 3.0 * mc.estimate.std_error, "N={n} u={u}: {} vs {exact}", mc.estimate.mean);
    }
    assert!(first_moment_exact_small(3, 2, 50.0).unwrap().is_finite());
    assert!(matches!(first_moment_exact_small(3, 4, 0.0), Err(Error::Domain(_))));
}

#[test]
fn exact_small_n_vanishes_monotonically_at_low_levels() {
    for n in [2usize, 3] {
        let mut prev = f64::INFINITY;
        for u in [1.0, 0.0, -1.0, -2.0, -3.0, -5.0] {
            let v = first_moment_exact_small(3, n, u).unwrap();
            assert!(v > 0.0 && v < prev, "N={n} u={u}");
            prev = v;
        }
        assert!(prev < 1e-6, "N={n}: {prev}");
    }
}

#[test]
fn prefactor_in_log_space() {
    let pi = std::f64::consts::PI;
    let direct = 2.0 * pi * (2.0 / (2.0 * pi)).sqrt();
    assert!((first_moment_log_prefactor(3, 2) - direct.ln()).abs() < 1e-14);
    for n in [50usize, 200] {
        assert!(first_moment_log_prefactor(3, n).is_finite());
        assert!(kr_prefactors(3, n, 0.5).unwrap().log_c_n.is_finite());
    }
}

#[test]
fn no_overflow_at_large_dimension() {
    // C_N alone exceeds the largest finite double here
    assert!(kr_prefactors(3, 500, 0.0).unwrap().log_c_n > f64::MAX.ln());
    let first = first_moment(3, 500, 0.0, 20, 4).unwrap();
    assert!(first.log_per_n.is_finite() && first.estimate.log_mean > 0.0);
    let second = second_moment(3, 500, LevelSet::below(0.0), [-0.5, 0.5], 1, 2, 5).unwrap();
    assert!(second.log_per_n.is_finite(), "{second:?}");
}

#[test]
fn unreachable_level_set_is_an_empty_estimate() {
    assert!(matches!(first_moment(3, 5, -1e200, 10, 1), Err(Error::EmptyEstimate(_))));
    assert!(matches!(first_moment_set(3, 5, LevelSet::between(1.0, 0.5), 10, 1), Err(Error::Domain(_))));
}

/// At r = 0 and p ≥ 5 the two conditional Hessians and values are independent
/// and each has the single-point law, so the integrand is a squared first-moment
/// expectation.
#[test]
fn integrand_factorizes_at_zero_overlap() {
    for (p, n, u) in [(5u32, 5usize, -1.8), (6, 6, -1.8)] {
        let pair = second_moment_integrand(p, n, 0.0, LevelSet::below(u), 200_000, 11).unwrap();
        let single = first_moment(p, n, u, 200_000, 12).unwrap();
        let scale = first_moment_log_prefactor(p, n).exp();
        let (m, se) = (single.estimate.mean / scale, single.estimate.std_error / scale);
        let product = m * m;
        let se = (pair.std_error.powi(2) + (2.0 * m * se).powi(2)).sqrt();
        assert!((pair.mean - product).abs() <= 3.0 * se, "p={p}: {} vs {product} (se {se})", pair.mean);
    }
}

#[test]
fn integrand_golden_value() {
    let est = second_moment_integrand(3, 6, 0.4, LevelSet::below(-1.6), 2000, 2024).unwrap();
    let again = second_moment_integrand(3, 6, 0.4, LevelSet::below(-1.6), 2000, 2024).unwrap();
    assert_eq!(est, again);
    assert_eq!(est.mean.to_bits(), GOLDEN_INTEGRAND.to_bits(), "{:e}", est.mean);
}

const GOLDEN_INTEGRAND: f64 = 9.61426220646737e-7;

#[test]
fn even_degree_integrand_is_reflection_symmetric() {
    for r in [0.3, 0.6, 0.85] {
        let a = second_moment_integrand(4, 6, r, LevelSet::below(-1.7), 100_000, 21).unwrap();
        let b = second_moment_integrand(4, 6, -r, LevelSet::below(-1.7), 100_000, 22).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * se, "r={r}: {} vs {}", a.mean, b.mean);
    }
}

#[test]
fn second_moment_mass_concentrates_near_zero_overlap() {
    let b = LevelSet::between(-1.62, -1.58);
    let near = second_moment(3, 8, b, [-0.2, 0.2], 33, 400, 31).unwrap();
    let full = second_moment(3, 8, b, [-0.99, 0.99], 33, 400, 31).unwrap();
    let share = (near.estimate.log_mean - full.estimate.log_mean).exp();
    assert!(share > 0.2 && share <= 1.0 + 3.0 * full.estimate.relative_error(), "share {share}");
    // 0.2 of the overlap range against its 1.98 total
    assert!(share > 2.0 * 0.4 / 1.98, "share {share}");
}

#[test]
fn second_moment_dominates_squared_first_moment() {
    let (p, n, u) = (3u32, 6usize, -1.6);
    let first = first_moment(p, n, u, 100_000, 41).unwrap();
    let second = second_moment(p, n, LevelSet::below(u), [-0.99, 0.99], 33, 1000, 42).unwrap();
    let (f, fse) = (first.estimate.mean, first.estimate.std_error);
    let total = second.estimate.mean + f;
    let se = (second.estimate.std_error.powi(2) + fse.powi(2) + (2.0 * f * fse).powi(2)).sqrt();
    assert!(total >= f * f - 3.0 * se, "{total} vs {}", f * f);
}

#[test]
fn second_moment_arguments_are_validated() {
    let b = LevelSet::below(-1.6);
    assert!(matches!(second_moment(3, 2, b, [-0.5, 0.5], 5, 10, 1), Err(Error::Domain(_))));
    assert!(matches!(second_moment(3, 6, b, [-1.0, 0.5], 5, 10, 1), Err(Error::Domain(_))));
    assert!(matches!(second_moment(3, 6, b, [0.5, 0.5], 5, 10, 1), Err(Error::Domain(_))));
    assert!(matches!(second_moment_integrand(3, 6, 1.0, b, 10, 1), Err(Error::Domain(_))));
}

#[test]
fn first_moment_error_shrinks_with_dimension() {
    let rows = asymptote_report(3, -1.6, &[10, 20, 40], 20_000, 0, 0, 51).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| (r.first_log_per_n - r.theta).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(rows.iter().all(|r| r.second_log_per_n.is_none()));
}

#[test]
fn first_moment_exponent_above_zero_level() {
    let target = 0.5 * 2f64.ln();
    assert_eq!(theta(3, 1.0).unwrap(), target);
    let rows = asymptote_report(3, 1.0, &[10, 20, 40, 80], 4_000, 0, 0, 52).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| (r.first_log_per_n - target).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn first_moment_exponent_vanishes_at_ground_level() {
    let e0 = thresholds(3, 1e-12).unwrap().e_zero;
    let rows = asymptote_report(3, -e0, &[10, 20, 40], 20_000, 0, 0, 53).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r.first_log_per_n.abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn asymptote_list_must_ascend() {
    assert!(matches!(asymptote_report(3, -1.6, &[10, 8], 100, 0, 0, 1), Err(Error::Domain(_))));
}

/// Ordered pairs of distinct critical points below `u` with overlap in
/// `(-0.99, 0.99)`, counted directly on sampled Hamiltonians.
fn enumerated_pair_count(n: usize, u: f64, reps: u64, starts: usize) -> (f64, f64) {
    let counts: Vec<f64> = (0..reps)
        .map(|k| {
            let mut rng = replica_rng(70 + n as u64, k);
            let h = sample_hamiltonian(3, n, &mut rng).unwrap();
            let set = enumerate_critical_points(&h, starts, k).unwrap();
            let below: Vec<&Vec<f64>> = set.points.iter().zip(&set.values).filter(|(_, &v)| v < u).map(|(x, _)| x).collect();
            let mut pairs = 0.0;
            for (i, a) in below.iter().enumerate() {
                for (j, b) in below.iter().enumerate() {
                    let r = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / n as f64;
                    if i != j && r > -0.99 && r < 0.99 {
                        pairs += 1.0;
                    }
                }
            }
            pairs
        })
        .collect();
    let m = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
    (m, (var / reps as f64).sqrt())
}

#[test]
fn second_moment_matches_direct_enumeration() {
    for (n, reps, starts) in [(3usize, 1000u64, 500usize), (4, 500, 2000)] {
        let u = -0.8;
        let (count, count_se) = enumerated_pair_count(n, u, reps, starts);
        let kr = second_moment(3, n, LevelSet::below(u), [-0.99, 0.99], 33, 4000, 61).unwrap();
        let se = (count_se.powi(2) + kr.estimate.std_error.powi(2)).sqrt();
        assert!((count - kr.estimate.mean).abs() <= 3.0 * se, "N={n}: enumerated {count} vs {} (se {se})", kr.estimate.mean);
    }
}
