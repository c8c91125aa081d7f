use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::{json, Value};

use pspin::certification::{certify_q_negativity, certify_tilde_q, q_curves_table, tau_chain, tilde_q_table, NegativityCertificate};
use pspin::complexity_landscape::{landscape_argmax, psi, psi_bar, q_fn, zeta};
use pspin::enumeration::{concentration_experiment, enumerate_critical_points, ground_state_experiment, sample_hamiltonian};
use pspin::kac_rice::{asymptote_report, first_moment, second_moment, LevelSet};
use pspin::random_matrix::{det_abs_moment, det_perturb_check, ghat_curve, goe_sample, spectral_summary, tail_check};
use pspin::special_functions::{theta, thresholds, u_th};
use pspin::stats::replica_rng;

use crate::config::{load_config, Params};
use crate::output::{append_run_record, num, Artifacts, RunRecord, TOOL_VERSION};
use crate::{CertifyTarget, Cli, CliError, Command, EnumerateExperiment, FigureKind, KacRiceExperiment, RmtExperiment};

/// What a subcommand hands back for the run record.
struct Outcome {
    summary: Value,
    /// Set when the computation finished but a checked property failed.
    failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, failure: None }
    }

    fn check(summary: Value, passed: bool, what: &str) -> Self {
        Self { summary, failure: (!passed).then(|| what.to_string()) }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = chrono::Utc::now().to_rfc3339();
    let config = match &cli.global.config {
        Some(path) if path.exists() => load_config(path)?,
        Some(path) => return Err(CliError::Usage(format!("config file {} does not exist", path.display()))),
        None => BTreeMap::new(),
    };
    let mut params = Params::new(config);
    let seed = params.get("seed", cli.global.seed, 1u64)?;
    let out: PathBuf = match cli.global.out.clone() {
        Some(dir) => dir,
        None => PathBuf::from(params.get("out", None, ".".to_string())?),
    };
    params.effective.remove("out");
    let threads = params.get("threads", cli.global.threads, 0usize)?;
    params.effective.remove("threads");
    if threads > 0 {
        // fails only if a pool already exists, in which case it is reused
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut artifacts = Artifacts::new(&out, seed)?;
    let (name, outcome) = dispatch(cli.command, &mut params, &mut artifacts, seed)?;
    let record = RunRecord {
        command: name,
        params: params.effective.clone(),
        seed,
        tool_version: TOOL_VERSION.to_string(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs: artifacts.written.clone(),
        summary: outcome.summary,
    };
    append_run_record(&out, &record)?;
    match outcome.failure {
        Some(what) => Err(CliError::Validation(what)),
        None => Ok(()),
    }
}

fn dispatch(command: Command, params: &mut Params, art: &mut Artifacts, seed: u64) -> Result<(String, Outcome), CliError> {
    Ok(match command {
        Command::Thresholds { p_min, p_max, tol } => {
            let p_min = params.get("p-min", p_min, 3u32)?;
            let p_max = params.get("p-max", p_max, 10u32)?;
            let tol = params.get("tol", tol, 1e-13)?;
            if p_max < p_min {
                return Err(CliError::Usage("p-max must be at least p-min".into()));
            }
            let sets = (p_min..=p_max).map(|p| thresholds(p, tol)).collect::<Result<Vec<_>, _>>()?;
            art.json("thresholds.json", &params.effective, &sets)?;
            art.csv(
                "thresholds.csv",
                &["p", "e_inf", "e_zero", "u_th"],
                sets.iter().map(|s| vec![s.p.to_string(), num(s.e_inf), num(s.e_zero), num(s.u_th)]),
            )?;
            ("thresholds".into(), Outcome::ok(json!({ "count": sets.len() })))
        }
        Command::Eval { p, u, r, u2 } => {
            let p = params.get("p", p, 3u32)?;
            let u = params.get("u", u, -1.6)?;
            let mut result = json!({
                "p": p,
                "u": u,
                "theta": theta(p, u)?,
                "zeta": zeta(p, u)?,
                "u_th": u_th(p),
            });
            if let Some(r) = r.or(params_value(params, "r")?) {
                params.effective.insert("r".into(), Value::from(r));
                let u2 = params.get("u2", u2, u)?;
                result["r"] = Value::from(r);
                result["u2"] = Value::from(u2);
                result["psi"] = Value::from(psi(p, r, u, u2)?);
                result["psi_bar"] = Value::from(psi_bar(p, u, r)?);
                result["q"] = Value::from(q_fn(p, u, r)?);
            }
            art.json("eval.json", &params.effective, &result)?;
            ("eval".into(), Outcome::ok(result))
        }
        Command::Landscape { p, u, grid, refine_tol } => {
            let p = params.get("p", p, 3u32)?;
            let u = params.get("u", u, -1.6)?;
            let grid = params.get("grid", grid, 2001usize)?;
            let refine_tol = params.get("refine-tol", refine_tol, 1e-10)?;
            let arg = landscape_argmax(p, u, grid, refine_tol)?;
            art.json("landscape.json", &params.effective, &arg)?;
            let rows = (0..grid)
                .map(|i| {
                    let r = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
                    Ok(vec![num(r), num(psi_bar(p, u, r)?)])
                })
                .collect::<Result<Vec<_>, pspin::Error>>()?;
            art.csv("landscape.csv", &["r", "psi_bar"], rows)?;
            ("landscape".into(), Outcome::ok(json!({ "r_star": arg.r_star, "psi_max": arg.psi_max })))
        }
        Command::Certify { target } => certify(target, params, art)?,
        Command::Figures { figure } => figures(figure, params, art)?,
        Command::Rmt { experiment } => rmt(experiment, params, art, seed)?,
        Command::Kacrice { experiment } => kacrice(experiment, params, art, seed)?,
        Command::Enumerate { experiment } => enumerate(experiment, params, art, seed)?,
    })
}

/// Optional parameter that only exists in the config.
fn params_value(params: &mut Params, key: &str) -> Result<Option<f64>, CliError> {
    let v: f64 = params.get(key, None, f64::NAN)?;
    params.effective.remove(key);
    Ok((!v.is_nan()).then_some(v))
}

fn certificate_outcome(cert: &NegativityCertificate) -> Outcome {
    Outcome::check(
        json!({ "target": cert.target, "p": cert.p, "verdict": cert.verdict, "slack": cert.slack }),
        cert.verdict,
        &format!("certificate for {} at p={} did not pass (slack {})", cert.target, cert.p, cert.slack),
    )
}

fn certify(target: CertifyTarget, params: &mut Params, art: &mut Artifacts) -> Result<(String, Outcome), CliError> {
    Ok(match target {
        CertifyTarget::Lemma5 { p, t0, mesh } => {
            let p = params.get("p", p, 3u32)?;
            let t0 = params.get("t0", t0, 0.01)?;
            let mesh = params.get("mesh", mesh, 10_000usize)?;
            let cert = certify_q_negativity(p, t0, mesh)?;
            art.json(&format!("certificate_lemma5_p{p}.json"), &params.effective, &cert)?;
            ("certify lemma5".into(), certificate_outcome(&cert))
        }
        CertifyTarget::Tilde { p, t0, mesh } => {
            let p = params.get("p", p, 10u32)?;
            let t0 = params.get("t0", t0, 0.01)?;
            let mesh = params.get("mesh", mesh, 10_000usize)?;
            let cert = certify_tilde_q(p, t0, mesh)?;
            art.json(&format!("certificate_tilde_p{p}.json"), &params.effective, &cert)?;
            ("certify tilde".into(), certificate_outcome(&cert))
        }
        CertifyTarget::Tau { p_max } => {
            let p_max = params.get("p-max", p_max, 40u32)?;
            let chain = tau_chain(p_max)?;
            art.csv("tau.csv", &["p", "tau"], chain.iter().map(|(p, t)| vec![p.to_string(), num(*t)]))?;
            let decreasing = chain.windows(2).all(|w| w[1].1 < w[0].1);
            let negative = chain.first().is_some_and(|&(_, t)| t < 0.0);
            (
                "certify tau".into(),
                Outcome::check(
                    json!({ "decreasing": decreasing, "first_negative": negative }),
                    decreasing && negative,
                    "tau sequence is not negative and strictly decreasing",
                ),
            )
        }
    })
}

fn figures(figure: FigureKind, params: &mut Params, art: &mut Artifacts) -> Result<(String, Outcome), CliError> {
    Ok(match figure {
        FigureKind::QCurves { points, p_lo, p_hi } => {
            let points = params.get("points", points, 1001usize)?;
            let p_lo = params.get("p-lo", p_lo, 3u32)?;
            let p_hi = params.get("p-hi", p_hi, 10u32)?;
            let curves = q_curves_table(p_lo, p_hi, points)?;
            art.csv(
                "q_curves.csv",
                &["r", "p", "Q"],
                curves.rows.iter().map(|(r, p, q)| vec![num(*r), p.to_string(), num(*q)]),
            )?;
            let violations = curves.monotonicity_violations.len();
            (
                "figures q-curves".into(),
                Outcome::check(json!({ "rows": curves.rows.len(), "monotonicity_violations": violations }), violations == 0, "Q curves are not ordered in p"),
            )
        }
        FigureKind::TildeQ { p, points } => {
            let p = params.get("p", p, 10u32)?;
            let points = params.get("points", points, 1001usize)?;
            let table = tilde_q_table(p, points)?;
            art.csv("tilde_q.csv", &["r", "tilde_Q"], table.iter().map(|(r, q)| vec![num(*r), num(*q)]))?;
            ("figures tilde-q".into(), Outcome::ok(json!({ "rows": table.len() })))
        }
    })
}

fn rmt(experiment: RmtExperiment, params: &mut Params, art: &mut Artifacts, seed: u64) -> Result<(String, Outcome), CliError> {
    Ok(match experiment {
        RmtExperiment::Spectrum { n } => {
            let n = params.get("n", n, 200usize)?;
            let m = goe_sample(n, &mut replica_rng(seed, 0))?;
            let s = spectral_summary(&m)?;
            art.json("spectrum.json", &params.effective, &s)?;
            ("rmt spectrum".into(), Outcome::ok(json!({ "max_abs": s.max_abs, "semicircle_distance": s.semicircle_distance })))
        }
        RmtExperiment::Det { n, shift, power, samples } => {
            let n = params.get("n", n, 6usize)?;
            let shift = params.get("shift", shift, 2.5)?;
            let power = params.get("power", power, 1u32)?;
            let samples = params.get("samples", samples, 100_000usize)?;
            let est = det_abs_moment(n, shift, power, samples, seed)?;
            art.json("det_moment.json", &params.effective, &est)?;
            ("rmt det".into(), Outcome::ok(json!({ "mean": est.mean, "std_error": est.std_error })))
        }
        RmtExperiment::Ghat { n, shift, rho, samples } => {
            let n = params.get("n", n, 6usize)?;
            let shift = params.get("shift", shift, 2.5)?;
            let default_grid: Vec<f64> = (0..=8).map(|k| -1.0 + 0.25 * k as f64).collect();
            let rho = params.get_list("rho", rho, default_grid)?;
            let samples = params.get("samples", samples, 100_000usize)?;
            let curve = ghat_curve(n, shift, &rho, samples, seed)?;
            art.json("ghat.json", &params.effective, &curve)?;
            art.csv(
                "ghat.csv",
                &["rho", "ghat", "std_error"],
                curve.points.iter().map(|p| vec![num(p.rho), num(p.value), num(p.std_error)]),
            )?;
            ("rmt ghat".into(), Outcome::ok(json!({ "points": curve.points.len() })))
        }
        RmtExperiment::Perturb { n, rank, trials } => {
            let n = params.get("n", n, 6usize)?;
            let rank = params.get("rank", rank, 1usize)?;
            let trials = params.get("trials", trials, 10_000usize)?;
            let report = det_perturb_check(n, rank, trials, seed)?;
            art.json("perturb.json", &params.effective, &report)?;
            (
                "rmt perturb".into(),
                Outcome::check(json!({ "violations": report.violations }), report.violations == 0, "determinant perturbation bound violated"),
            )
        }
        RmtExperiment::Tail { n, m, samples } => {
            let n = params.get("n", n, 50usize)?;
            let m = params.get("m", m, 2.5)?;
            let samples = params.get("samples", samples, 10_000usize)?;
            let report = tail_check(n, m, samples, seed)?;
            art.json("tail.json", &params.effective, &report)?;
            ("rmt tail".into(), Outcome::ok(json!({ "frequency": report.frequency, "within_bound": report.within_bound })))
        }
    })
}

fn kacrice(experiment: KacRiceExperiment, params: &mut Params, art: &mut Artifacts, seed: u64) -> Result<(String, Outcome), CliError> {
    Ok(match experiment {
        KacRiceExperiment::First { p, n, u, samples } => {
            let p = params.get("p", p, 3u32)?;
            let n = params.get("n", n, 10usize)?;
            let u = params.get("u", u, -1.6)?;
            let samples = params.get("samples", samples, 20_000usize)?;
            let report = first_moment(p, n, u, samples, seed)?;
            art.json("first_moment.json", &params.effective, &report)?;
            ("kacrice first".into(), Outcome::ok(json!({ "log_per_n": report.log_per_n, "reference": report.reference_exponent })))
        }
        KacRiceExperiment::Second { p, n, u, overlap_lo, overlap_hi, nodes, samples } => {
            let p = params.get("p", p, 3u32)?;
            let n = params.get("n", n, 6usize)?;
            let u = params.get("u", u, -1.6)?;
            let lo = params.get("overlap-lo", overlap_lo, -0.99)?;
            let hi = params.get("overlap-hi", overlap_hi, 0.99)?;
            let nodes = params.get("nodes", nodes, 33usize)?;
            let samples = params.get("samples", samples, 1000usize)?;
            let report = second_moment(p, n, LevelSet::below(u), [lo, hi], nodes, samples, seed)?;
            art.json("second_moment.json", &params.effective, &report)?;
            (
                "kacrice second".into(),
                Outcome::ok(json!({ "log_per_n": report.log_per_n, "reference": report.reference_exponent, "warnings": report.warnings.len() })),
            )
        }
        KacRiceExperiment::Asymptote { p, u, n_list, samples, second_samples, second_max_n } => {
            let p = params.get("p", p, 3u32)?;
            let u = params.get("u", u, -1.6)?;
            let n_list = params.get_list("n-list", n_list, vec![10usize, 20, 40])?;
            let samples = params.get("samples", samples, 20_000usize)?;
            let second_samples = params.get("second-samples", second_samples, 1000usize)?;
            let second_max_n = params.get("second-max-n", second_max_n, 10usize)?;
            let rows = asymptote_report(p, u, &n_list, samples, second_samples, second_max_n, seed)?;
            art.json("asymptote.json", &params.effective, &rows)?;
            let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
            art.csv(
                "asymptote.csv",
                &["n", "first_per_n_ln", "first_relative_error", "theta", "second_per_n_ln", "second_relative_error", "two_theta", "ratio_ln"],
                rows.iter().map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.first_log_per_n),
                        num(r.first_relative_error),
                        num(r.theta),
                        opt(r.second_log_per_n),
                        opt(r.second_relative_error),
                        num(r.two_theta),
                        opt(r.ratio_ln),
                    ]
                }),
            )?;
            ("kacrice asymptote".into(), Outcome::ok(json!({ "rows": rows.len() })))
        }
    })
}

fn enumerate(experiment: EnumerateExperiment, params: &mut Params, art: &mut Artifacts, seed: u64) -> Result<(String, Outcome), CliError> {
    Ok(match experiment {
        EnumerateExperiment::Points { p, n, starts } => {
            let p = params.get("p", p, 3u32)?;
            let n = params.get("n", n, 3usize)?;
            let starts = params.get("starts", starts, 1000usize)?;
            let h = sample_hamiltonian(p, n, &mut replica_rng(seed, 0))?;
            let set = enumerate_critical_points(&h, starts, seed)?;
            art.json("critical_points.json", &params.effective, &set)?;
            ("enumerate points".into(), Outcome::ok(json!({ "count": set.len(), "saturated": set.diagnostics.saturated })))
        }
        EnumerateExperiment::Concentration { p, n, u, reps, starts } => {
            let p = params.get("p", p, 3u32)?;
            let n = params.get("n", n, 3usize)?;
            let u = params.get("u", u, -1.0)?;
            let reps = params.get("reps", reps, 100usize)?;
            let starts = params.get("starts", starts, 1000usize)?;
            let report = concentration_experiment(p, n, u, reps, starts, seed)?;
            art.json("concentration.json", &params.effective, &report)?;
            art.csv(
                "overlap_histogram.csv",
                &["lower", "upper", "count"],
                report.overlap_histogram.iter().map(|b| vec![num(b.lower), num(b.upper), b.count.to_string()]),
            )?;
            ("enumerate concentration".into(), Outcome::ok(json!({ "mean": report.mean, "ratio": report.ratio })))
        }
        EnumerateExperiment::GroundState { p, n_list, reps, starts } => {
            let p = params.get("p", p, 3u32)?;
            let n_list = params.get_list("n-list", n_list, vec![4usize, 8])?;
            let reps = params.get("reps", reps, 50usize)?;
            let starts = params.get("starts", starts, 500usize)?;
            let rows = ground_state_experiment(p, &n_list, reps, starts, seed)?;
            art.csv(
                "ground_state.csv",
                &["n", "mean", "std", "std_lo", "std_hi", "reference"],
                rows.iter().map(|r| vec![r.n.to_string(), num(r.mean), num(r.std), num(r.std_ci.0), num(r.std_ci.1), num(r.reference)]),
            )?;
            art.json("ground_state.json", &params.effective, &rows)?;
            ("enumerate ground-state".into(), Outcome::ok(json!({ "rows": rows.len() })))
        }
    })
}
