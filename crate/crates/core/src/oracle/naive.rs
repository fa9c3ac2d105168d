//! Direct path-reweighting estimate of the SCGF.
//!
//! `(1/T) log( (1/R) sum_r exp(k T A_T^(r)) )` over independent base-dynamics
//! paths. Independent of the particle engines; usable only where `k T` is
//! small enough that the exponential weights do not degenerate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{simulate_path, JumpModel};
use crate::rng::{categorical, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveEstimate {
    pub value: f64,
    /// Jackknife standard error.
    pub stderr: f64,
}

fn log_mean_exp(xs: &[f64]) -> Result<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Overflow);
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    Ok(m + (s / xs.len() as f64).ln())
}

/// Naive SCGF estimate from `replicas` paths started from `mu0`; replica `r`
/// uses stream `r` of `seed`.
pub fn naive_scgf(model: &JumpModel, k: f64, mu0: &[f64], horizon: f64, replicas: usize, seed: u64) -> Result<NaiveEstimate> {
    if replicas < 2 {
        return Err(Error::InsufficientReplicas(format!("naive estimator needs at least 2 replicas, got {replicas}")));
    }
    if mu0.len() != model.size() {
        return Err(Error::InvalidArgument("mu0 length does not match the model".into()));
    }
    let weights: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let x0 = categorical(&mut rng, mu0.iter().copied(), mu0.iter().sum());
            simulate_path(model, x0, horizon, &mut rng).map(|p| k * p.additive_value)
        })
        .collect::<Result<_>>()?;

    let value = log_mean_exp(&weights)? / horizon;
    if !value.is_finite() {
        return Err(Error::Overflow);
    }

    // Leave-one-out values from the shared shifted sum.
    let m = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = weights.iter().map(|w| (w - m).exp()).collect();
    let total: f64 = terms.iter().sum();
    let n = replicas as f64;
    let loo: Vec<f64> = terms
        .iter()
        .map(|t| (m + ((total - t).max(f64::MIN_POSITIVE) / (n - 1.0)).ln()) / horizon)
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();
    Ok(NaiveEstimate {
        value,
        stderr: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry_model;
    use crate::oracle::spectral::solve_spectral;
    use crate::tilt::tilt;
    use std::collections::BTreeMap;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn zero_tilt_is_zero() {
        let model = registry_model("two_state", &BTreeMap::new()).unwrap();
        let est = naive_scgf(&model, 0.0, &[1.0, 0.0], 10.0, 10, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn needs_two_replicas() {
        let model = registry_model("two_state", &BTreeMap::new()).unwrap();
        assert!(matches!(
            naive_scgf(&model, 0.5, &[1.0, 0.0], 10.0, 1, 1),
            Err(Error::InsufficientReplicas(_))
        ));
    }

    #[test]
    fn two_state_matches_spectral() {
        let model = registry_model("two_state", &BTreeMap::new()).unwrap();
        let est = naive_scgf(&model, 0.5, &[0.5, 0.5], 20.0, 100_000, 17).unwrap();
        let exact = 0.5f64.exp() - 1.0;
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }

    #[test]
    fn biased_ring_matches_spectral() {
        let model = registry_model("ring_current", &params(&[("S", 6.0), ("p", 0.7), ("q", 0.3)])).unwrap();
        let k = -0.2;
        let exact = solve_spectral(&tilt(&model, k).unwrap()).unwrap().scgf;
        let mu0 = vec![1.0 / 6.0; 6];
        let est = naive_scgf(&model, k, &mu0, 30.0, 100_000, 23).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }
}
