//! Tilted generator and its split into jump dynamics plus a potential.
//!
//! For a tilt `k` the generator
//!
//! ```text
//! L_k f(x) = sum_y W(x,y) [exp(k g(x,y)) f(y) - f(x)] + k h(x) f(x)
//! ```
//!
//! decomposes as a conservative jump generator with rates
//! `W(x,y) exp(k g(x,y))` plus the diagonal potential
//! `V_k(x) = escape_k(x) - escape(x) + k h(x)`. The particle engines
//! mutate with the former and select with the latter.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::JumpModel;

/// Largest admissible `|k g(x,y)|` before `exp` leaves the double range.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedTransition {
    pub to: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDynamics {
    base: JumpModel,
    k: f64,
    out: Vec<Vec<TiltedTransition>>,
    tilted_escape: Vec<f64>,
    potential: Vec<f64>,
}

/// Tilt `model` by `k`.
pub fn tilt(model: &JumpModel, k: f64) -> Result<TiltedDynamics> {
    if !k.is_finite() {
        return Err(Error::InvalidArgument(format!("tilt k = {k} is not finite")));
    }
    let s = model.size();
    let mut out = Vec::with_capacity(s);
    let mut tilted_escape = Vec::with_capacity(s);
    for x in 0..s {
        let mut row = Vec::with_capacity(model.transitions(x).len());
        let mut esc = 0.0;
        for t in model.transitions(x) {
            let exponent = k * t.g;
            if exponent.abs() > MAX_EXPONENT {
                return Err(Error::NonFinite(exponent.abs()));
            }
            let rate = t.rate * exponent.exp();
            esc += rate;
            row.push(TiltedTransition { to: t.to, rate });
        }
        if !(esc > 0.0 && esc.is_finite()) {
            return Err(Error::NonFinite(esc));
        }
        out.push(row);
        tilted_escape.push(esc);
    }
    let potential = (0..s)
        .map(|x| tilted_escape[x] - model.escape()[x] + k * model.stay_h()[x])
        .collect();
    Ok(TiltedDynamics {
        base: model.clone(),
        k,
        out,
        tilted_escape,
        potential,
    })
}

impl TiltedDynamics {
    pub fn base(&self) -> &JumpModel {
        &self.base
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn size(&self) -> usize {
        self.base.size()
    }

    pub fn transitions(&self, x: usize) -> &[TiltedTransition] {
        &self.out[x]
    }

    pub fn tilted_rate(&self, x: usize, y: usize) -> f64 {
        self.out[x].iter().find(|t| t.to == y).map_or(0.0, |t| t.rate)
    }

    pub fn tilted_escape(&self) -> &[f64] {
        &self.tilted_escape
    }

    /// `V_k`.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Draw a target from the tilted jump kernel at `x`.
    #[inline]
    pub fn sample_jump<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let row = &self.out[x];
        let target = rng.random::<f64>() * self.tilted_escape[x];
        let mut acc = 0.0;
        for t in row {
            acc += t.rate;
            if target < acc {
                return t.to;
            }
        }
        row[row.len() - 1].to
    }

    /// Tilted jump generator applied to `f`: `sum_y W_k(x,y) (f(y) - f(x))`.
    pub fn jump_generator_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|x| self.out[x].iter().map(|t| t.rate * (f[t.to] - f[x])).sum())
            .collect()
    }

    /// Dense matrix of the conservative tilted jump generator (zero row sums).
    pub fn jump_generator_matrix(&self) -> DMatrix<f64> {
        let s = self.size();
        let mut m = DMatrix::zeros(s, s);
        for x in 0..s {
            for t in &self.out[x] {
                m[(x, t.to)] = t.rate;
            }
            m[(x, x)] = -self.tilted_escape[x];
        }
        m
    }
}

/// Dense matrix of `L_k`: off-diagonal tilted rates, diagonal `-escape(x) + k h(x)`.
pub fn tilted_matrix(td: &TiltedDynamics) -> DMatrix<f64> {
    let s = td.size();
    let base = td.base();
    let mut m = DMatrix::zeros(s, s);
    for x in 0..s {
        for t in &td.out[x] {
            m[(x, t.to)] = t.rate;
        }
        m[(x, x)] = -base.escape()[x] + td.k * base.stay_h()[x];
    }
    m
}
