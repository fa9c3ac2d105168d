//! Subcommand implementations. Each returns the paths it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use scgf_core::estimators::{
    combine, ergodic_estimator, factor_estimator, factor_snapshot, naive_estimate, scaling_sweep, Algorithm, Engine,
    ScgfEstimate, SweepConfig,
};
use scgf_core::event_log::RunOptions;
use scgf_core::mckean::{check_sufficient_condition, SelectionFamily, SelectionRates};
use scgf_core::oracle::{evolve_marginals, solve_spectral};
use scgf_core::rng::{replica_id, stream};
use scgf_core::tilt::tilt;

use crate::config::ExperimentConfig;
use crate::CliError;

fn write_csv(cfg: &ExperimentConfig, name: &str, body: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
    let path = cfg.out.join(name);
    let mut text = cfg.provenance();
    text.push_str(body);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn group_of(n: usize) -> Result<u32, CliError> {
    u32::try_from(n).map_err(|_| CliError::Config(format!("population size {n} too large")))
}

/// Principal eigenvalue and gap per `k`; `oracle.csv` rows `k,scgf,gap`.
pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.load_model()?;
    let mut body = String::from("k,scgf,gap\n");
    let mut written = Vec::new();
    for &k in &cfg.ks {
        let td = tilt(&model, k)?;
        let sol = solve_spectral(&td)?;
        let _ = writeln!(body, "{k},{},{}", sol.scgf, sol.gap);
        println!("k={k} scgf={} gap={}", sol.scgf, sol.gap);
        if cfg.marginals {
            let mu0 = cfg.mu0_for(&model)?;
            let traj = evolve_marginals(&td, &mu0, cfg.horizon, cfg.horizon / 2000.0)?;
            written.push(write_csv(cfg, &format!("marginals_k{k}.csv"), &traj.to_csv())?);
        }
    }
    written.insert(0, write_csv(cfg, "oracle.csv", &body)?);
    Ok(written)
}

fn estimate_row(out: &mut String, est: &ScgfEstimate, k: f64, c: f64, oracle: Option<f64>) {
    let (oracle, err) = match oracle {
        Some(o) => (o.to_string(), (est.value - o).abs().to_string()),
        None => (String::new(), String::new()),
    };
    let _ = writeln!(
        out,
        "{},{k},{c},{},{},{},{},{},{oracle},{err}",
        est.kind.as_str(),
        est.n,
        est.window.0,
        est.window.1,
        est.value,
        est.stderr
    );
}

/// Particle estimates per `(k, N)`; `estimates.csv`.
///
/// Replica `r` at population `N` draws from stream `replica_id(N, r)` of the
/// master seed; the naive estimator uses streams `0..naive_replicas`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.load_model()?;
    let mu0 = cfg.mu0_for(&model)?;
    let t1 = cfg.horizon;
    let t0 = cfg.burn_in_fraction * t1;
    let mut body = String::from("kind,k,c,N,t0,t1,value,stderr,oracle,abs_error\n");
    let mut written = Vec::new();
    for &k in &cfg.ks {
        let engine = Engine::new(&model, k, cfg.c, cfg.algorithm)?;
        let oracle = solve_spectral(&engine.td).ok().map(|s| s.scgf);
        for &n in &cfg.ns {
            let group = group_of(n)?;
            let runs: Vec<(ScgfEstimate, Option<ScgfEstimate>, Option<String>)> = (0..cfg.replicas as u32)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(cfg.seed, replica_id(group, r));
                    let opts = RunOptions {
                        record_events: cfg.event_log && r == 0,
                        ..Default::default()
                    };
                    let run = engine.run(&mu0, n, t1, &mut rng, &opts)?;
                    let erg = ergodic_estimator(&run.log, t0, t1)?;
                    let fac = match cfg.algorithm {
                        Algorithm::Cloning => Some(factor_estimator(
                            factor_snapshot(&run.log, t0)?,
                            factor_snapshot(&run.log, t1)?,
                            cfg.c,
                            n,
                        )?),
                        _ => None,
                    };
                    let events = run.log.to_csv(cfg.algorithm == Algorithm::Cloning);
                    Ok((erg, fac, events))
                })
                .collect::<Result<_, scgf_core::Error>>()?;
            let erg = combine(&runs.iter().map(|r| r.0).collect::<Vec<_>>())?;
            estimate_row(&mut body, &erg, k, cfg.c, oracle);
            print_summary(&erg, k, oracle);
            if cfg.algorithm == Algorithm::Cloning {
                let fac = combine(&runs.iter().filter_map(|r| r.1).collect::<Vec<_>>())?;
                estimate_row(&mut body, &fac, k, cfg.c, oracle);
                print_summary(&fac, k, oracle);
            }
            if let Some(Some(events)) = runs.first().map(|r| r.2.as_ref()) {
                written.push(write_csv(cfg, &format!("events_k{k}_N{n}.csv"), events)?);
            }
        }
        if cfg.naive_replicas > 0 {
            let est = naive_estimate(&model, k, &mu0, t1, cfg.naive_replicas, cfg.seed)?;
            estimate_row(&mut body, &est, k, cfg.c, oracle);
            print_summary(&est, k, oracle);
        }
    }
    written.insert(0, write_csv(cfg, "estimates.csv", &body)?);
    Ok(written)
}

fn print_summary(est: &ScgfEstimate, k: f64, oracle: Option<f64>) {
    match oracle {
        Some(o) => println!(
            "{} k={k} N={}: {} ± {} (oracle {o}, error {})",
            est.kind.as_str(),
            est.n,
            est.value,
            est.stderr,
            (est.value - o).abs()
        ),
        None => println!("{} k={k} N={}: {} ± {}", est.kind.as_str(), est.n, est.value, est.stderr),
    }
}

/// Population-size sweep per `k`; `sweep.csv` (or `sweep_k{k}.csv` for
/// several tilts) plus `sweep_slopes.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.load_model()?;
    let mu0 = cfg.mu0_for(&model)?;
    let f = cfg.f_for(&model)?;
    let mut written = Vec::new();
    let mut slopes = String::from("k,fitted_rmse_slope,fitted_bias_slope,oracle\n");
    for &k in &cfg.ks {
        let report = scaling_sweep(&SweepConfig {
            model: model.clone(),
            k,
            c: cfg.c,
            algorithm: cfg.algorithm,
            horizon: cfg.horizon,
            ns: cfg.ns.clone(),
            replicas: cfg.replicas,
            f: f.clone(),
            mu0: mu0.clone(),
            seed: cfg.seed,
        })?;
        let name = if cfg.ks.len() == 1 { "sweep.csv".to_string() } else { format!("sweep_k{k}.csv") };
        written.push(write_csv(cfg, &name, &report.to_csv())?);
        let _ = writeln!(slopes, "{k},{},{},{}", report.fitted_rmse_slope, report.fitted_bias_slope, report.oracle);
        println!(
            "k={k}: rmse slope {} bias slope {} (oracle mu_T(f) = {})",
            report.fitted_rmse_slope, report.fitted_bias_slope, report.oracle
        );
    }
    written.push(write_csv(cfg, "sweep_slopes.csv", &slopes)?);
    Ok(written)
}

/// Invariant checks on the configured model; prints one line per check.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.load_model()?;
    let mu0 = cfg.mu0_for(&model)?;
    let mut failures = 0;
    let mut report = |name: String, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    for &k in &cfg.ks {
        let td = tilt(&model, k)?;
        let ones = vec![1.0; td.size()];
        let lk1: Vec<f64> = {
            let jump = td.jump_generator_apply(&ones);
            jump.iter().zip(td.potential()).map(|(a, v)| a + v).collect()
        };
        let worst = lk1.iter().zip(td.potential()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report(format!("k={k} generator on constants"), worst <= 1e-12, format!("max |L_k 1 - V_k| = {worst:e}"));

        match solve_spectral(&td) {
            Ok(sol) => {
                let (r, l) = sol.residuals(&td);
                report(format!("k={k} eigen residuals"), r <= 1e-8 && l <= 1e-8, format!("right {r:e}, left {l:e}"));
                let gap = (sol.mean_potential(&td) - sol.scgf).abs();
                report(format!("k={k} mu_inf(V) = scgf"), gap <= 1e-8, format!("difference {gap:e}"));
            }
            Err(e) => report(format!("k={k} spectral solve"), false, e.to_string()),
        }

        for family in [SelectionFamily::KillingCloning { c: cfg.c }, SelectionFamily::FitnessIncreasing] {
            let (ok, worst) = check_sufficient_condition(&SelectionRates::new(family, td.potential()));
            report(format!("k={k} selection {family:?}"), ok, format!("max violation {worst:e}"));
        }

        let engine = Engine::new(&model, k, cfg.c, Algorithm::Cloning)?;
        let law = engine.clone_law().expect("cloning engine has a clone law");
        let moment_err = (0..td.size())
            .map(|x| {
                let mean: f64 = law.law[x].iter().enumerate().map(|(n, p)| n as f64 * p).sum();
                let total: f64 = law.law[x].iter().sum();
                (mean - law.mean[x]).abs().max((total - 1.0).abs())
            })
            .fold(0.0, f64::max);
        report(format!("k={k} clone law moments"), moment_err <= 1e-12, format!("max error {moment_err:e}"));

        let n = law.support_bound.max(20);
        let horizon = cfg.horizon.min(5.0);
        for algorithm in [Algorithm::MeanfieldKc, Algorithm::MeanfieldFit, Algorithm::Cloning] {
            let engine = Engine::new(&model, k, cfg.c, algorithm)?;
            let opts = RunOptions {
                record_events: true,
                verify_rates: true,
                ..Default::default()
            };
            let run = engine.run(&mu0, n, horizon, &mut stream(cfg.seed, replica_id(u32::MAX, 0)), &opts)?;
            let integral = run.log.integral_at(horizon)?;
            let replay = run.log.replay_integral().unwrap_or(f64::NAN);
            let factor_replay = run.log.replay_log_factor().unwrap_or(f64::NAN);
            let bound = if algorithm == Algorithm::Cloning { law.support_bound } else { 1 };
            let ok = (integral - replay).abs() <= 1e-10 * integral.abs().max(1.0)
                && (factor_replay - run.factor.log_value).abs() <= 1e-10
                && run.log.max_changes() <= bound;
            report(
                format!("k={k} {algorithm} run bookkeeping"),
                ok,
                format!("{} events, integral drift {:e}", run.log.event_count(), (integral - replay).abs()),
            );
        }
    }
    if failures > 0 {
        return Err(CliError::Validation(failures));
    }
    Ok(Vec::new())
}
