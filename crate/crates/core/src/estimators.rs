//! SCGF estimators, replica statistics and population-size sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cloning::{build_clone_law, run_cloning_with, CloneSizeDistribution, CloningFactor};
use crate::ensemble::{init_ensemble, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::event_log::{EventLog, RunOptions};
use crate::mckean::{SelectionFamily, SelectionRates};
use crate::meanfield::run_meanfield_with;
use crate::model::JumpModel;
use crate::oracle::{evolve_marginals, naive_scgf};
use crate::rng::{replica_id, stream, SimRng};
use crate::tilt::{tilt, TiltedDynamics};

/// Minimum replicas per population size in a sweep.
pub const MIN_SWEEP_REPLICAS: usize = 50;
/// Minimum population sizes in a sweep.
pub const MIN_SWEEP_SIZES: usize = 4;
/// Minimum replicas for the quadratic-variation diagnostic.
pub const MIN_DIAGNOSTIC_REPLICAS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Ergodic,
    CloningFactor,
    Naive,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ergodic => "ergodic",
            EstimatorKind::CloningFactor => "cloning_factor",
            EstimatorKind::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgfEstimate {
    pub value: f64,
    pub window: (f64, f64),
    pub n: usize,
    pub kind: EstimatorKind,
    /// Standard error across replicas (0 for a single run).
    pub stderr: f64,
}

fn check_window(t0: f64, t1: f64) -> Result<()> {
    if !(t0 >= 0.0 && t0 < t1) {
        return Err(Error::Range(format!("invalid window [{t0}, {t1}]")));
    }
    Ok(())
}

/// Time average of `m(xi_s)(V_k)` over `[t0, t1]`.
pub fn ergodic_estimator(log: &EventLog, t0: f64, t1: f64) -> Result<ScgfEstimate> {
    check_window(t0, t1)?;
    Ok(ScgfEstimate {
        value: log.window_mean(t0, t1)?,
        window: (t0, t1),
        n: log.n(),
        kind: EstimatorKind::Ergodic,
        stderr: 0.0,
    })
}

/// Cloning factor at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorSnapshot {
    pub time: f64,
    pub factor: CloningFactor,
}

pub fn factor_snapshot(log: &EventLog, t: f64) -> Result<FactorSnapshot> {
    Ok(FactorSnapshot {
        time: t,
        factor: CloningFactor {
            log_value: log.log_factor_at(t)?,
        },
    })
}

/// `(log C_t1 - log C_t0) / (t1 - t0) + c`.
pub fn factor_estimator(at_t0: FactorSnapshot, at_t1: FactorSnapshot, c: f64, n: usize) -> Result<ScgfEstimate> {
    let (t0, t1) = (at_t0.time, at_t1.time);
    check_window(t0, t1)?;
    Ok(ScgfEstimate {
        value: (at_t1.factor.log_value - at_t0.factor.log_value) / (t1 - t0) + c,
        window: (t0, t1),
        n,
        kind: EstimatorKind::CloningFactor,
        stderr: 0.0,
    })
}

/// `nu_t^N(f) = exp(int_0^t m(xi_s)(V_k) ds) m(xi_t)(f)`.
pub fn unnormalized_estimator(log: &EventLog, f: &[f64], t: f64) -> Result<f64> {
    let integral = log.integral_at(t)?;
    let counts = log.counts_at(t)?;
    Ok(integral.exp() * counts_mean(&counts, f))
}

/// `m(f)` for an empirical measure given by state counts.
pub fn counts_mean(counts: &[usize], f: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let total: f64 = counts.iter().zip(f).filter(|(&c, _)| c > 0).map(|(&c, v)| c as f64 * v).sum();
    total / n as f64
}

/// Sample mean and standard error of the mean. Deviations are taken from the
/// first sample, so identical samples give their common value and zero error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let Some(&x0) = xs.first() else {
        return (f64::NAN, f64::NAN);
    };
    let r = xs.len() as f64;
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / r;
    let mean = x0 + shift;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Replica average of single-run estimates of one kind and window; the
/// standard error treats each replica as one batch.
pub fn combine(estimates: &[ScgfEstimate]) -> Result<ScgfEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InsufficientReplicas("no estimates to combine".into()))?;
    if estimates.iter().any(|e| e.kind != first.kind || e.window != first.window || e.n != first.n) {
        return Err(Error::InvalidArgument("estimates differ in kind, window or population size".into()));
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let (value, stderr) = mean_and_stderr(&values);
    Ok(ScgfEstimate {
        value,
        stderr,
        ..*first
    })
}

/// Naive path-reweighting estimate as an [`ScgfEstimate`].
pub fn naive_estimate(model: &JumpModel, k: f64, mu0: &[f64], horizon: f64, replicas: usize, seed: u64) -> Result<ScgfEstimate> {
    let est = naive_scgf(model, k, mu0, horizon, replicas, seed)?;
    Ok(ScgfEstimate {
        value: est.value,
        window: (0.0, horizon),
        n: 1,
        kind: EstimatorKind::Naive,
        stderr: est.stderr,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    MeanfieldKc,
    MeanfieldFit,
    Cloning,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MeanfieldKc => "meanfield_kc",
            Algorithm::MeanfieldFit => "meanfield_fit",
            Algorithm::Cloning => "cloning",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanfield_kc" => Ok(Algorithm::MeanfieldKc),
            "meanfield_fit" => Ok(Algorithm::MeanfieldFit),
            "cloning" => Ok(Algorithm::Cloning),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm `{other}` (expected meanfield_kc, meanfield_fit or cloning)"
            ))),
        }
    }
}

/// Everything a particle run needs besides the population and the random stream.
#[derive(Debug, Clone)]
pub struct Engine {
    pub td: TiltedDynamics,
    pub algorithm: Algorithm,
    pub c: f64,
    selection: Option<SelectionRates>,
    law: Option<CloneSizeDistribution>,
}

/// Result of one replica.
#[derive(Debug, Clone)]
pub struct ReplicaRun {
    pub ensemble: ParticleEnsemble,
    pub log: EventLog,
    /// Stays at 1 for the mean-field engines.
    pub factor: CloningFactor,
}

impl Engine {
    pub fn new(model: &JumpModel, k: f64, c: f64, algorithm: Algorithm) -> Result<Self> {
        let td = tilt(model, k)?;
        let (selection, law) = match algorithm {
            Algorithm::MeanfieldKc => (Some(SelectionRates::new(SelectionFamily::KillingCloning { c }, td.potential())), None),
            Algorithm::MeanfieldFit => (Some(SelectionRates::new(SelectionFamily::FitnessIncreasing, td.potential())), None),
            Algorithm::Cloning => (None, Some(build_clone_law(&td, c)?)),
        };
        Ok(Self {
            td,
            algorithm,
            c,
            selection,
            law,
        })
    }

    pub fn clone_law(&self) -> Option<&CloneSizeDistribution> {
        self.law.as_ref()
    }

    pub fn selection(&self) -> Option<&SelectionRates> {
        self.selection.as_ref()
    }

    /// Draws `n` particles from `mu0` and runs to `horizon`.
    pub fn run(&self, mu0: &[f64], n: usize, horizon: f64, rng: &mut SimRng, opts: &RunOptions) -> Result<ReplicaRun> {
        if let Some(law) = &self.law {
            law.check_population(n)?;
        }
        let ens = init_ensemble(mu0, n, rng)?;
        self.run_from(ens, horizon, rng, opts)
    }

    pub fn run_from(&self, ens: ParticleEnsemble, horizon: f64, rng: &mut SimRng, opts: &RunOptions) -> Result<ReplicaRun> {
        match (&self.selection, &self.law) {
            (Some(sr), _) => {
                let (ensemble, log) = run_meanfield_with(&self.td, sr, ens, horizon, rng, opts)?;
                Ok(ReplicaRun {
                    ensemble,
                    log,
                    factor: CloningFactor::default(),
                })
            }
            (None, Some(law)) => {
                let (ensemble, log, factor) = run_cloning_with(&self.td, law, ens, horizon, rng, opts)?;
                Ok(ReplicaRun { ensemble, log, factor })
            }
            (None, None) => unreachable!("engine without selection mechanism"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub model: JumpModel,
    pub k: f64,
    pub c: f64,
    pub algorithm: Algorithm,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub replicas: usize,
    /// Test function `f` whose mean `m(xi_T)(f)` is compared with `mu_T(f)`.
    pub f: Vec<f64>,
    pub mu0: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub ns: Vec<usize>,
    pub rmse: Vec<f64>,
    /// `|mean - oracle|` per population size.
    pub bias: Vec<f64>,
    /// Standard error of the replica mean per population size.
    pub stderr: Vec<f64>,
    pub fitted_rmse_slope: f64,
    /// NaN when fewer than two biases are positive.
    pub fitted_bias_slope: f64,
    pub replicas: Vec<usize>,
    /// Oracle value `mu_T(f)`.
    pub oracle: f64,
}

fn log_log_slope(ns: &[usize], ys: &[f64]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&n, &y)| ((n as f64).ln(), y.ln()))
        .unzip();
    if xs.len() < 2 {
        return f64::NAN;
    }
    ols_slope(&xs, &ys)
}

/// RMSE and bias of `m(xi_T)(f)` against the oracle `mu_T(f)` for each
/// population size. Replica `r` at population `N` uses stream
/// `replica_id(N, r)` of `seed`.
pub fn scaling_sweep(cfg: &SweepConfig) -> Result<ScalingReport> {
    if cfg.replicas < MIN_SWEEP_REPLICAS {
        return Err(Error::InsufficientReplicas(format!(
            "a sweep needs at least {MIN_SWEEP_REPLICAS} replicas per population size, got {}",
            cfg.replicas
        )));
    }
    if cfg.ns.len() < MIN_SWEEP_SIZES || cfg.ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "a sweep needs at least {MIN_SWEEP_SIZES} strictly increasing population sizes, got {:?}",
            cfg.ns
        )));
    }
    if cfg.f.len() != cfg.model.size() {
        return Err(Error::InvalidArgument("test function length does not match the model".into()));
    }
    let engine = Engine::new(&cfg.model, cfg.k, cfg.c, cfg.algorithm)?;
    let traj = evolve_marginals(&engine.td, &cfg.mu0, cfg.horizon, cfg.horizon / 2000.0)?;
    let oracle: f64 = traj.final_mu().iter().zip(&cfg.f).map(|(m, v)| m * v).sum();

    let mut report = ScalingReport {
        ns: cfg.ns.clone(),
        rmse: Vec::new(),
        bias: Vec::new(),
        stderr: Vec::new(),
        fitted_rmse_slope: f64::NAN,
        fitted_bias_slope: f64::NAN,
        replicas: Vec::new(),
        oracle,
    };
    for &n in &cfg.ns {
        let group = u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("population size {n} too large")))?;
        let values: Vec<f64> = (0..cfg.replicas as u32)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(cfg.seed, replica_id(group, r));
                let run = engine.run(&cfg.mu0, n, cfg.horizon, &mut rng, &RunOptions::default())?;
                Ok(run.ensemble.mean(&cfg.f))
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_and_stderr(&values);
        let mse = values.iter().map(|v| (v - oracle).powi(2)).sum::<f64>() / values.len() as f64;
        report.rmse.push(mse.sqrt());
        report.bias.push((mean - oracle).abs());
        report.stderr.push(se);
        report.replicas.push(values.len());
    }
    report.fitted_rmse_slope = log_log_slope(&report.ns, &report.rmse);
    report.fitted_bias_slope = log_log_slope(&report.ns, &report.bias);
    Ok(report)
}

impl ScalingReport {
    /// CSV rows `N,rmse,bias,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,rmse,bias,stderr\n");
        for i in 0..self.ns.len() {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", self.ns[i], self.rmse[i], self.bias[i], self.stderr[i]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    /// Sample variance of `M*_t` across replicas.
    pub empirical_variance: f64,
    /// `(1/N)` times the replica mean of `int_0^t m(xi_s)(lambda_k Q + (V_k - c)^-) ds`.
    pub predicted: f64,
    /// `empirical_variance / predicted`; `None` when the prediction is 0.
    pub ratio: Option<f64>,
    /// Replica mean of `M*_t`.
    pub mean: f64,
    pub replicas: usize,
}

/// `M*_t = log C_t - int_0^t (m(xi_s)(V_k) - c) ds` of one cloning run.
pub fn factor_martingale(log: &EventLog, t: f64, c: f64) -> Result<f64> {
    Ok(log.log_factor_at(t)? - (log.integral_at(t)? - c * (t - log.start())))
}

/// Compares the spread of `M*_t` with its predicted quadratic variation.
pub fn martingale_diagnostic(logs: &[&EventLog], t: f64, c: f64) -> Result<MartingaleReport> {
    if logs.len() < MIN_DIAGNOSTIC_REPLICAS {
        return Err(Error::InsufficientReplicas(format!(
            "the martingale diagnostic needs at least {MIN_DIAGNOSTIC_REPLICAS} replicas, got {}",
            logs.len()
        )));
    }
    let n = logs[0].n();
    if logs.iter().any(|l| l.n() != n) {
        return Err(Error::InvalidArgument("replicas differ in population size".into()));
    }
    let m: Vec<f64> = logs.iter().map(|l| factor_martingale(l, t, c)).collect::<Result<_>>()?;
    let qv: Vec<f64> = logs.iter().map(|l| l.qv_integral_at(t)).collect::<Result<_>>()?;
    let r = m.len() as f64;
    let mean = m.iter().sum::<f64>() / r;
    let empirical_variance = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let predicted = qv.iter().sum::<f64>() / r / n as f64;
    Ok(MartingaleReport {
        empirical_variance,
        predicted,
        ratio: (predicted > 0.0).then(|| empirical_variance / predicted),
        mean,
        replicas: m.len(),
    })
}
