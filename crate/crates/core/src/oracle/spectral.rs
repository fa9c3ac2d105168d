//! Principal eigen-elements of the tilted generator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tilt::{tilted_matrix, TiltedDynamics};

/// Above this size the gap is estimated by deflated power iteration instead
/// of a full Schur decomposition.
pub const DENSE_LIMIT: usize = 512;

/// Gaps below this are treated as a degenerate principal eigenvalue.
pub const MIN_GAP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    /// Principal eigenvalue `Lambda_k` (the SCGF).
    pub scgf: f64,
    /// Positive right eigenvector, normalized so `left_eigmeasure . right_eigvec = 1`.
    pub right_eigvec: Vec<f64>,
    /// Positive left eigenvector normalized to a probability vector.
    pub left_eigmeasure: Vec<f64>,
    /// Principal eigenvalue minus the next largest real part of the spectrum.
    pub gap: f64,
}

impl SpectralSolution {
    /// Largest residuals `(|L r - Lambda r|, |L^T mu - Lambda mu|)` in sup norm.
    pub fn residuals(&self, td: &TiltedDynamics) -> (f64, f64) {
        let l = tilted_matrix(td);
        let r = DVector::from_column_slice(&self.right_eigvec);
        let mu = DVector::from_column_slice(&self.left_eigmeasure);
        let right = (&l * &r - &r * self.scgf).amax();
        let left = (l.transpose() * &mu - &mu * self.scgf).amax();
        (right, left)
    }

    /// `mu_inf(V_k)`, which equals the SCGF.
    pub fn mean_potential(&self, td: &TiltedDynamics) -> f64 {
        self.left_eigmeasure.iter().zip(td.potential()).map(|(m, v)| m * v).sum()
    }
}

/// SCGF, eigenvectors and spectral gap of `L_k` on an irreducible chain.
pub fn solve_spectral(td: &TiltedDynamics) -> Result<SpectralSolution> {
    if let Some(unreachable) = td.base().unreachable_state() {
        return Err(Error::NotIrreducible { unreachable });
    }
    let l = tilted_matrix(td);
    let s = l.nrows();
    if s == 1 {
        return Ok(SpectralSolution {
            scgf: l[(0, 0)],
            right_eigvec: vec![1.0],
            left_eigmeasure: vec![1.0],
            gap: f64::INFINITY,
        });
    }
    // Uniformization shift: L + cI has a strictly positive diagonal and is
    // irreducible, hence primitive.
    let shift = (0..s).map(|x| l[(x, x)].abs()).fold(0.0, f64::max) + 1.0;

    let (estimate, gap_hint) = if s <= DENSE_LIMIT {
        let eig = l.clone().schur().complex_eigenvalues();
        let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| b.total_cmp(a));
        (re[0], Some(re[0] - re[1]))
    } else {
        (power_estimate(&l, shift), None)
    };

    let scale = l.amax().max(1.0);
    let sigma = estimate + 1e-9 * scale;
    let right = inverse_iteration(&l, sigma)?;
    let left = inverse_iteration(&l.transpose(), sigma)?;

    let mut mu: Vec<f64> = positive(left);
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= total);
    let mut r = positive(right);
    let mu_r: f64 = mu.iter().zip(&r).map(|(a, b)| a * b).sum();
    r.iter_mut().for_each(|v| *v /= mu_r);

    let rv = DVector::from_column_slice(&r);
    let muv = DVector::from_column_slice(&mu);
    // Two-sided Rayleigh quotient, with mu . r = 1.
    let scgf = muv.dot(&(&l * &rv));

    let gap = match gap_hint {
        Some(g) => g,
        None => deflated_gap(&l, shift, scgf, &rv, &muv),
    };
    if gap < MIN_GAP {
        return Err(Error::NoGap(gap));
    }
    Ok(SpectralSolution {
        scgf,
        right_eigvec: r,
        left_eigmeasure: mu,
        gap,
    })
}

fn positive(v: DVector<f64>) -> Vec<f64> {
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| (sign * x).max(0.0)).collect()
}

fn inverse_iteration(m: &DMatrix<f64>, sigma: f64) -> Result<DVector<f64>> {
    let s = m.nrows();
    let shifted = m - DMatrix::identity(s, s) * sigma;
    let lu = shifted.lu();
    let mut v = DVector::from_element(s, 1.0 / (s as f64).sqrt());
    for _ in 0..8 {
        let mut next = lu
            .solve(&v)
            .ok_or(Error::NoGap(0.0))?;
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NoGap(0.0));
        }
        next /= norm;
        let done = (&next - &v).amax() < 1e-15 || (&next + &v).amax() < 1e-15;
        v = next;
        if done {
            break;
        }
    }
    Ok(v)
}

/// Dominant eigenvalue of `m` by power iteration on `m + shift I`.
fn power_estimate(m: &DMatrix<f64>, shift: f64) -> f64 {
    let s = m.nrows();
    let b = m + DMatrix::identity(s, s) * shift;
    let mut v = DVector::from_element(s, 1.0 / s as f64);
    let mut rate = 0.0;
    for _ in 0..200_000 {
        let w = &b * &v;
        let next_rate = w.sum() / v.sum();
        let w = &w / w.sum();
        let converged = (&w - &v).amax() < 1e-13 && (next_rate - rate).abs() < 1e-13 * next_rate.abs();
        v = w;
        rate = next_rate;
        if converged {
            break;
        }
    }
    rate - shift
}

/// Conservative gap estimate for large chains: the growth rate of the shifted
/// matrix with the principal component removed bounds `|lambda_2 + c|`, and
/// `Re lambda_2 <= |lambda_2 + c| - c`.
fn deflated_gap(m: &DMatrix<f64>, shift: f64, scgf: f64, r: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let s = m.nrows();
    let b = m + DMatrix::identity(s, s) * shift;
    let project = |v: &DVector<f64>| v - r * mu.dot(v);
    let mut v = project(&DVector::from_fn(s, |i, _| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5));
    let mut log_growth = 0.0;
    let iters = 2000;
    let burn = 200;
    for it in 0..iters {
        let w = project(&(&b * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        if it >= burn {
            log_growth += (norm / v.norm()).ln();
        }
        v = w / norm;
    }
    let modulus = (log_growth / (iters - burn) as f64).exp();
    (scgf + shift) - modulus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{registry_model, JumpModel, ModelSpec};
    use crate::tilt::tilt;
    use std::collections::BTreeMap;
    use std::f64::consts::E;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn check_invariants(td: &TiltedDynamics, sol: &SpectralSolution) {
        let total: f64 = sol.left_eigmeasure.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sol.left_eigmeasure.iter().all(|&m| m >= 0.0));
        assert!(sol.right_eigvec.iter().all(|&r| r > 0.0));
        let (right, left) = sol.residuals(td);
        assert!(right <= 1e-8 && left <= 1e-8, "{right} {left}");
        assert!((sol.mean_potential(td) - sol.scgf).abs() <= 1e-8);
    }

    #[test]
    fn two_state_closed_form() {
        let model = registry_model("two_state", &BTreeMap::new()).unwrap();
        let td = tilt(&model, 1.0).unwrap();
        let sol = solve_spectral(&td).unwrap();
        assert!((sol.scgf - (E - 1.0)).abs() < 1e-12);
        assert!((sol.gap - 2.0 * E).abs() < 1e-12);
        for m in &sol.left_eigmeasure {
            assert!((m - 0.5).abs() < 1e-12);
        }
        check_invariants(&td, &sol);
    }

    #[test]
    fn zero_tilt_gives_stationary_law() {
        let model = registry_model("birth_death", &params(&[("S", 5.0), ("up", 1.0), ("down", 2.0)])).unwrap();
        let td = tilt(&model, 0.0).unwrap();
        let sol = solve_spectral(&td).unwrap();
        assert!(sol.scgf.abs() < 1e-10);
        // detailed balance: pi(x) proportional to (1/2)^x
        let z: f64 = (0..5).map(|x| 0.5f64.powi(x)).sum();
        for (x, m) in sol.left_eigmeasure.iter().enumerate() {
            assert!((m - 0.5f64.powi(x as i32) / z).abs() < 1e-10);
        }
        for r in &sol.right_eigvec {
            assert!((r - 1.0).abs() < 1e-10);
        }
        check_invariants(&td, &sol);
    }

    #[test]
    fn symmetric_ring_cosh() {
        let model = registry_model("ring_current", &params(&[("S", 6.0)])).unwrap();
        for k in [-1.5, -0.2, 0.7, 2.0] {
            let td = tilt(&model, k).unwrap();
            let sol = solve_spectral(&td).unwrap();
            assert!((sol.scgf - (k.cosh() - 1.0)).abs() < 1e-10, "k={k}");
            for m in &sol.left_eigmeasure {
                assert!((m - 1.0 / 6.0).abs() < 1e-10);
            }
            check_invariants(&td, &sol);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let model = JumpModel::build(&ModelSpec::with_size(3).rate(0, 1, 1.0).rate(1, 0, 1.0).rate(2, 0, 1.0)).unwrap();
        let td = tilt(&model, 0.5).unwrap();
        assert_eq!(solve_spectral(&td), Err(Error::NotIrreducible { unreachable: 2 }));
    }

    #[test]
    fn power_route_agrees_with_schur() {
        let model = registry_model("ring_current", &params(&[("S", 9.0), ("p", 0.8), ("q", 0.3)])).unwrap();
        let td = tilt(&model, 0.6).unwrap();
        let sol = solve_spectral(&td).unwrap();
        let l = tilted_matrix(&td);
        let shift = 2.0;
        let est = power_estimate(&l, shift);
        assert!((est - sol.scgf).abs() < 1e-9);
        let gap = deflated_gap(
            &l,
            shift,
            sol.scgf,
            &DVector::from_column_slice(&sol.right_eigvec),
            &DVector::from_column_slice(&sol.left_eigmeasure),
        );
        assert!(gap > 0.0 && gap <= sol.gap + 1e-6, "{gap} vs {}", sol.gap);
    }

    #[test]
    fn convex_in_tilt() {
        let model = registry_model("ring_current", &params(&[("S", 5.0), ("p", 0.7), ("q", 0.3)])).unwrap();
        let ks: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.1).collect();
        let scgf: Vec<f64> = ks.iter().map(|&k| solve_spectral(&tilt(&model, k).unwrap()).unwrap().scgf).collect();
        for w in scgf.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }
}
