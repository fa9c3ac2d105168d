//! Exact Feynman-Kac marginals by ODE integration.
//!
//! Instead of the unnormalized measure `nu_t`, which grows like
//! `exp(t Lambda_k)`, the integrator carries the normalized pair
//!
//! ```text
//! d mu_t / dt        = L_k^T mu_t - mu_t (mu_t . V_k)
//! d log nu_t(1) / dt = mu_t . V_k
//! ```
//!
//! with classical RK4 steps, halving the step on each grid interval until two
//! successive refinements agree to [`REFINE_TOL`].

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tilt::{tilted_matrix, TiltedDynamics};

pub const REFINE_TOL: f64 = 1e-10;
pub const MAX_HALVINGS: u32 = 20;
/// Grid points per horizon when no step is given.
pub const DEFAULT_GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTrajectory {
    pub times: Vec<f64>,
    /// Normalized marginals `mu_t`.
    pub mu: Vec<Vec<f64>>,
    /// `log nu_t(1)`.
    pub log_nu1: Vec<f64>,
    /// `mu_t(V_k)` on the grid.
    pub mean_potential: Vec<f64>,
}

struct Rhs {
    lt: DMatrix<f64>,
    v: DVector<f64>,
}

impl Rhs {
    fn eval(&self, mu: &DVector<f64>) -> (DVector<f64>, f64) {
        let mv = mu.dot(&self.v);
        (&self.lt * mu - mu * mv, mv)
    }

    fn rk4(&self, mu: &DVector<f64>, log_nu: f64, h: f64) -> (DVector<f64>, f64) {
        let (k1, l1) = self.eval(mu);
        let (k2, l2) = self.eval(&(mu + &k1 * (h / 2.0)));
        let (k3, l3) = self.eval(&(mu + &k2 * (h / 2.0)));
        let (k4, l4) = self.eval(&(mu + &k3 * h));
        let next = mu + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        (next, log_nu + (l1 + 2.0 * l2 + 2.0 * l3 + l4) * (h / 6.0))
    }

    fn advance(&self, mu: &DVector<f64>, log_nu: f64, dt: f64, substeps: usize) -> (DVector<f64>, f64) {
        let h = dt / substeps as f64;
        let mut state = (mu.clone(), log_nu);
        for _ in 0..substeps {
            state = self.rk4(&state.0, state.1, h);
        }
        state
    }
}

/// Integrate the normalized Feynman-Kac flow from `mu0` over `[0, horizon]`.
pub fn evolve_marginals(td: &TiltedDynamics, mu0: &[f64], horizon: f64, grid_step: f64) -> Result<MarginalTrajectory> {
    let s = td.size();
    if mu0.len() != s {
        return Err(Error::InvalidArgument(format!("mu0 has {} entries, model has {s} states", mu0.len())));
    }
    if mu0.iter().any(|&m| !(m >= 0.0)) || (mu0.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("mu0 must be a probability vector".into()));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need grid_step > 0 and horizon >= 0, got {grid_step}, {horizon}")));
    }
    let rhs = Rhs {
        lt: tilted_matrix(td).transpose(),
        v: DVector::from_column_slice(td.potential()),
    };

    let ratio = horizon / grid_step;
    let intervals = if (ratio - ratio.round()).abs() < 1e-9 { ratio.round() } else { ratio.ceil() } as usize;
    let mut times = Vec::with_capacity(intervals + 1);
    let mut mu = Vec::with_capacity(intervals + 1);
    let mut log_nu1 = Vec::with_capacity(intervals + 1);
    let mut mean_potential = Vec::with_capacity(intervals + 1);

    let mut cur = DVector::from_column_slice(mu0);
    let mut cur_log = 0.0;
    let mut t = 0.0;
    let mut substeps = 1usize;
    let mut halvings = 0u32;
    times.push(t);
    mean_potential.push(cur.dot(&rhs.v));
    mu.push(cur.iter().copied().collect());
    log_nu1.push(cur_log);

    for i in 0..intervals {
        let next_t = if i + 1 == intervals { horizon } else { ((i + 1) as f64 * grid_step).min(horizon) };
        let dt = next_t - t;
        let mut coarse = rhs.advance(&cur, cur_log, dt, substeps);
        loop {
            let fine = rhs.advance(&cur, cur_log, dt, substeps * 2);
            let diff = (&fine.0 - &coarse.0).amax().max((fine.1 - coarse.1).abs());
            if diff < REFINE_TOL {
                coarse = fine;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::StepTooCoarse { halvings: MAX_HALVINGS });
            }
            substeps *= 2;
            coarse = fine;
        }
        cur = coarse.0;
        cur_log = coarse.1;
        t = next_t;
        times.push(t);
        mean_potential.push(cur.dot(&rhs.v));
        mu.push(cur.iter().copied().collect());
        log_nu1.push(cur_log);
    }
    Ok(MarginalTrajectory {
        times,
        mu,
        log_nu1,
        mean_potential,
    })
}

impl MarginalTrajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_mu(&self) -> &[f64] {
        self.mu.last().unwrap()
    }

    /// `mu_t(f)` at the grid point nearest to `t`.
    pub fn expectation_at(&self, t: f64, f: &[f64]) -> f64 {
        let i = self.nearest(t);
        self.mu[i].iter().zip(f).map(|(m, v)| m * v).sum()
    }

    /// `nu_t(f) = exp(log nu_t(1)) mu_t(f)` at the grid point nearest to `t`.
    pub fn unnormalized_at(&self, t: f64, f: &[f64]) -> f64 {
        let i = self.nearest(t);
        self.log_nu1[i].exp() * self.mu[i].iter().zip(f).map(|(m, v)| m * v).sum::<f64>()
    }

    fn nearest(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.times.len() => self.times.len() - 1,
            Err(i) => {
                if t - self.times[i - 1] <= self.times[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    fn log_nu1_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&x| x <= t);
        if i == 0 {
            return self.log_nu1[0];
        }
        if i >= self.times.len() {
            return *self.log_nu1.last().unwrap();
        }
        let (a, b) = (i - 1, i);
        let h = self.times[b] - self.times[a];
        let s = (t - self.times[a]) / h;
        if s == 0.0 {
            return self.log_nu1[a];
        }
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.log_nu1[a]
            + (s3 - 2.0 * s2 + s) * h * self.mean_potential[a]
            + (-2.0 * s3 + 3.0 * s2) * self.log_nu1[b]
            + (s3 - s2) * h * self.mean_potential[b]
    }

    /// CSV rows `t,mu_0..mu_{S-1},log_nu1`.
    pub fn to_csv(&self) -> String {
        let s = self.mu[0].len();
        let mut out = String::from("t");
        for x in 0..s {
            let _ = write!(out, ",mu_{x}");
        }
        out.push_str(",log_nu1\n");
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t}");
            for m in &self.mu[i] {
                let _ = write!(out, ",{m}");
            }
            let _ = writeln!(out, ",{}", self.log_nu1[i]);
        }
        out
    }
}

/// `(1/(t1-t0)) int_{t0}^{t1} mu_s(V_k) ds`.
///
/// Since `d/dt log nu_t(1) = mu_t(V_k)`, the integral is the increment of
/// `log nu_t(1)`; between grid points it is read off a cubic Hermite
/// interpolant built from `log nu_t(1)` and its derivative `mu_t(V_k)`.
pub fn exact_finite_time_scgf(traj: &MarginalTrajectory, t0: f64, t1: f64) -> Result<f64> {
    let end = traj.horizon();
    if !(t0 >= 0.0 && t0 < t1 && t1 <= end * (1.0 + 1e-12)) {
        return Err(Error::Range(format!("window [{t0}, {t1}] not inside [0, {end}]")));
    }
    let t1 = t1.min(end);
    Ok((traj.log_nu1_at(t0) - traj.log_nu1_at(t1)) / (t0 - t1))
}

/// Slope of `log nu_t(1)` between the grid points nearest to `t0` and `t1`.
pub fn log_growth_rate(traj: &MarginalTrajectory, t0: f64, t1: f64) -> Result<f64> {
    if !(t0 < t1 && t1 <= traj.horizon() * (1.0 + 1e-12)) {
        return Err(Error::Range(format!("window [{t0}, {t1}] not inside trajectory")));
    }
    let (i0, i1) = (traj.nearest(t0), traj.nearest(t1));
    Ok((traj.log_nu1[i1] - traj.log_nu1[i0]) / (traj.times[i1] - traj.times[i0]))
}
