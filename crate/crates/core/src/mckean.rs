//! McKean selection rates.
//!
//! A selection rate `W~(x,y)` replaces a particle at `x` by a copy of a
//! particle at `y`. Any non-negative family with
//! `W~(y,x) - W~(x,y) = V(x) - V(y)` reproduces the normalized tilted
//! evolution in the mean-field limit.

use crate::ensemble::ParticleEnsemble;

/// Tolerance of [`check_sufficient_condition`].
pub const CONDITION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionFamily {
    /// `W~_c(x,y) = (V(x)-c)^- + (V(y)-c)^+`.
    KillingCloning { c: f64 },
    /// `W~(x,y) = (V(y)-V(x))^+`.
    FitnessIncreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRates {
    pub family: SelectionFamily,
    pub potential: Vec<f64>,
}

#[inline]
pub fn pos(a: f64) -> f64 {
    a.max(0.0)
}

#[inline]
pub fn neg(a: f64) -> f64 {
    (-a).max(0.0)
}

impl SelectionRates {
    pub fn new(family: SelectionFamily, potential: &[f64]) -> Self {
        Self {
            family,
            potential: potential.to_vec(),
        }
    }

    pub fn size(&self) -> usize {
        self.potential.len()
    }

    #[inline]
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        let v = &self.potential;
        match self.family {
            SelectionFamily::KillingCloning { c } => neg(v[x] - c) + pos(v[y] - c),
            SelectionFamily::FitnessIncreasing => pos(v[y] - v[x]),
        }
    }

    /// `sum_y W~(x,y) (f(y) - f(x)) mu(y)`, the McKean selection generator at `mu`.
    pub fn apply(&self, mu: &[f64], f: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|x| (0..self.size()).map(|y| self.rate(x, y) * (f[y] - f[x]) * mu[y]).sum())
            .collect()
    }
}

/// Rate at which a particle at `x` takes the state of a particle at `y`.
pub fn selection_rate(sr: &SelectionRates, x: usize, y: usize) -> f64 {
    sr.rate(x, y)
}

/// Checks `W~(y,x) - W~(x,y) = V(x) - V(y)` on all pairs; returns whether it
/// holds within [`CONDITION_TOL`] and the largest violation.
pub fn check_sufficient_condition(sr: &SelectionRates) -> (bool, f64) {
    check_condition_with(|x, y| sr.rate(x, y), &sr.potential)
}

/// The same check for an arbitrary rate function.
pub fn check_condition_with(rate: impl Fn(usize, usize) -> f64, potential: &[f64]) -> (bool, f64) {
    let s = potential.len();
    let mut worst = 0.0f64;
    for x in 0..s {
        for y in 0..s {
            let violation = (rate(y, x) - rate(x, y) - potential[x] + potential[y]).abs();
            worst = worst.max(violation);
        }
    }
    (worst <= CONDITION_TOL, worst)
}

/// `(1/N) sum_{i,j} W~(x_i, x_j)`, evaluated through state counts.
pub fn total_selection_rate(sr: &SelectionRates, ensemble: &ParticleEnsemble) -> f64 {
    let counts = ensemble.counts();
    let occupied: Vec<usize> = (0..counts.len()).filter(|&x| counts[x] > 0).collect();
    let mut total = 0.0;
    for &x in &occupied {
        for &y in &occupied {
            total += counts[x] as f64 * counts[y] as f64 * sr.rate(x, y);
        }
    }
    total / ensemble.n() as f64
}
