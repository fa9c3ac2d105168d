//! Finite-state Markov jump processes with additive path observables.
//!
//! A model is a set of transition rates `W(x,y)` on states `0..S`, a jump
//! increment `g(x,y)` and an occupation density `h(x)`. Along a path the
//! observable accumulates `g(x_-, x)` at every jump and `h(x)` per unit of
//! time spent in `x`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::exp_time;

/// Relative tolerance for the escape-rate row-sum invariant.
pub const ESCAPE_RTOL: f64 = 1e-12;

/// Outgoing transition `x -> to` with rate `W(x,to)` and increment `g(x,to)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub to: usize,
    pub rate: f64,
    pub g: f64,
}

/// Description of a model as sparse triples, before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSpec {
    /// Number of states; when `None` it is inferred from the largest index cited.
    pub size: Option<usize>,
    pub rates: Vec<(usize, usize, f64)>,
    pub g: Vec<(usize, usize, f64)>,
    pub h: Vec<(usize, f64)>,
}

impl ModelSpec {
    pub fn with_size(size: usize) -> Self {
        Self {
            size: Some(size),
            ..Self::default()
        }
    }

    pub fn rate(mut self, x: usize, y: usize, w: f64) -> Self {
        self.rates.push((x, y, w));
        self
    }

    pub fn increment(mut self, x: usize, y: usize, g: f64) -> Self {
        self.g.push((x, y, g));
        self
    }

    pub fn density(mut self, x: usize, h: f64) -> Self {
        self.h.push((x, h));
        self
    }

    fn inferred_size(&self) -> usize {
        let from_rates = self.rates.iter().map(|&(x, y, _)| x.max(y) + 1);
        let from_g = self.g.iter().map(|&(x, y, _)| x.max(y) + 1);
        let from_h = self.h.iter().map(|&(x, _)| x + 1);
        from_rates.chain(from_g).chain(from_h).max().unwrap_or(0)
    }
}

/// Validated, immutable jump model.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpModel {
    size: usize,
    out: Vec<Vec<Transition>>,
    /// Non-zero `g` entries by row, including pairs without a rate.
    g_rows: Vec<Vec<(usize, f64)>>,
    escape: Vec<f64>,
    stay_h: Vec<f64>,
}

impl JumpModel {
    /// Validate a model description.
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let size = spec.size.unwrap_or_else(|| spec.inferred_size());
        if size == 0 {
            return Err(Error::MalformedSpec("model has no states".into()));
        }
        let check = |x: usize, what: &str| {
            if x >= size {
                Err(Error::MalformedSpec(format!(
                    "{what} cites state {x} outside 0..{size}"
                )))
            } else {
                Ok(())
            }
        };

        let mut rates: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(x, y, w) in &spec.rates {
            check(x, "rate")?;
            check(y, "rate")?;
            if x == y {
                return Err(Error::MalformedSpec(format!("diagonal rate entry ({x},{x})")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::MalformedSpec(format!("rate({x},{y}) = {w} is not a non-negative number")));
            }
            if rates.insert((x, y), w).is_some() {
                return Err(Error::MalformedSpec(format!("duplicate rate entry ({x},{y})")));
            }
        }

        let mut gs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(x, y, g) in &spec.g {
            check(x, "g")?;
            check(y, "g")?;
            if x == y {
                return Err(Error::MalformedSpec(format!("diagonal g entry ({x},{x})")));
            }
            if !g.is_finite() {
                return Err(Error::MalformedSpec(format!("g({x},{y}) is not finite")));
            }
            if gs.insert((x, y), g).is_some() {
                return Err(Error::MalformedSpec(format!("duplicate g entry ({x},{y})")));
            }
        }

        let mut stay_h = vec![0.0; size];
        let mut seen_h = vec![false; size];
        for &(x, h) in &spec.h {
            check(x, "h")?;
            if !h.is_finite() {
                return Err(Error::MalformedSpec(format!("h({x}) is not finite")));
            }
            if std::mem::replace(&mut seen_h[x], true) {
                return Err(Error::MalformedSpec(format!("duplicate h entry for state {x}")));
            }
            stay_h[x] = h;
        }

        let mut out = vec![Vec::new(); size];
        for (&(x, y), &w) in &rates {
            if w > 0.0 {
                let g = gs.get(&(x, y)).copied().unwrap_or(0.0);
                out[x].push(Transition { to: y, rate: w, g });
            }
        }
        let mut g_rows = vec![Vec::new(); size];
        for (&(x, y), &g) in &gs {
            if g != 0.0 {
                g_rows[x].push((y, g));
            }
        }

        let escape: Vec<f64> = out.iter().map(|row| row.iter().map(|t| t.rate).sum()).collect();
        if let Some(state) = escape.iter().position(|&e| e <= 0.0) {
            return Err(Error::ZeroEscapeRate { state });
        }

        Ok(Self {
            size,
            out,
            g_rows,
            escape,
            stay_h,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Outgoing transitions with positive rate, ordered by target state.
    pub fn transitions(&self, x: usize) -> &[Transition] {
        &self.out[x]
    }

    pub fn escape(&self) -> &[f64] {
        &self.escape
    }

    pub fn stay_h(&self) -> &[f64] {
        &self.stay_h
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.out[x].iter().find(|t| t.to == y).map_or(0.0, |t| t.rate)
    }

    pub fn jump_g(&self, x: usize, y: usize) -> f64 {
        self.g_rows[x].iter().find(|&&(to, _)| to == y).map_or(0.0, |&(_, g)| g)
    }

    /// Non-zero `g` entries of row `x`.
    pub fn g_row(&self, x: usize) -> &[(usize, f64)] {
        &self.g_rows[x]
    }

    /// Dense `S x S` rate matrix, row-major.
    pub fn dense_rates(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.size]; self.size];
        for (x, row) in self.out.iter().enumerate() {
            for t in row {
                m[x][t.to] = t.rate;
            }
        }
        m
    }

    /// Back to a triple description (rates, then g, then h; zero entries omitted).
    pub fn to_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::with_size(self.size);
        for (x, row) in self.out.iter().enumerate() {
            for t in row {
                spec.rates.push((x, t.to, t.rate));
            }
        }
        for (x, row) in self.g_rows.iter().enumerate() {
            for &(y, g) in row {
                spec.g.push((x, y, g));
            }
        }
        for (x, &h) in self.stay_h.iter().enumerate() {
            if h != 0.0 {
                spec.h.push((x, h));
            }
        }
        spec
    }

    /// `true` when every state reaches every other state along positive rates.
    pub fn irreducible(&self) -> bool {
        self.unreachable_state().is_none()
    }

    /// Some state that is not mutually reachable with state 0, if any.
    pub fn unreachable_state(&self) -> Option<usize> {
        let forward = self.reach_from(0, false);
        let backward = self.reach_from(0, true);
        (0..self.size).find(|&x| !(forward[x] && backward[x]))
    }

    fn reach_from(&self, start: usize, reversed: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.size];
        for (x, row) in self.out.iter().enumerate() {
            for t in row {
                if reversed {
                    adj[t.to].push(x);
                } else {
                    adj[x].push(t.to);
                }
            }
        }
        let mut seen = vec![false; self.size];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::BadParams(format!("{name} must be positive, got {v}")))
    }
}

fn state_count(v: f64, min: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < min as f64 || v > 1e7 {
        return Err(Error::BadParams(format!("S must be an integer >= {min}, got {v}")));
    }
    Ok(v as usize)
}

fn reject_unknown(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::BadParams(format!("unknown parameter `{k}` (allowed: {})", allowed.join(", ")))),
        None => Ok(()),
    }
}

/// Built-in model families.
///
/// * `two_state(a=1, b=1)`: `0 -> 1` at rate `a`, `1 -> 0` at rate `b`, `g = 1` on both jumps.
/// * `ring_current(S=6, p=0.5, q=0.5)`: ring walk, clockwise at `p` with `g = +1`,
///   counter-clockwise at `q` with `g = -1`.
/// * `birth_death(S=5, up=1, down=2)`: nearest-neighbour chain on `0..S`, `g = 0`,
///   occupation observable `h(x) = x`.
pub fn registry_model(name: &str, params: &BTreeMap<String, f64>) -> Result<JumpModel> {
    match name {
        "two_state" => {
            reject_unknown(params, &["a", "b"])?;
            let a = positive("a", param(params, "a", 1.0))?;
            let b = positive("b", param(params, "b", 1.0))?;
            JumpModel::build(
                &ModelSpec::with_size(2)
                    .rate(0, 1, a)
                    .rate(1, 0, b)
                    .increment(0, 1, 1.0)
                    .increment(1, 0, 1.0),
            )
        }
        "ring_current" => {
            reject_unknown(params, &["S", "p", "q"])?;
            let s = state_count(param(params, "S", 6.0), 3)?;
            let p = positive("p", param(params, "p", 0.5))?;
            let q = positive("q", param(params, "q", 0.5))?;
            let mut spec = ModelSpec::with_size(s);
            for x in 0..s {
                let cw = (x + 1) % s;
                let ccw = (x + s - 1) % s;
                spec = spec.rate(x, cw, p).increment(x, cw, 1.0).rate(x, ccw, q).increment(x, ccw, -1.0);
            }
            JumpModel::build(&spec)
        }
        "birth_death" => {
            reject_unknown(params, &["S", "up", "down"])?;
            let s = state_count(param(params, "S", 5.0), 2)?;
            let up = positive("up", param(params, "up", 1.0))?;
            let down = positive("down", param(params, "down", 2.0))?;
            let mut spec = ModelSpec::with_size(s);
            for x in 0..s {
                if x + 1 < s {
                    spec = spec.rate(x, x + 1, up);
                }
                if x > 0 {
                    spec = spec.rate(x, x - 1, down);
                }
                spec = spec.density(x, x as f64);
            }
            JumpModel::build(&spec)
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Names accepted by [`registry_model`].
pub const REGISTRY: [&str; 3] = ["two_state", "ring_current", "birth_death"];

/// One simulated trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    /// Visited states; `states[i]` is occupied on `[jump_times[i-1], jump_times[i])`.
    pub states: Vec<usize>,
    pub jump_times: Vec<f64>,
    pub horizon: f64,
    /// `T * A_T`: sum of jump increments plus the time integral of `h`.
    pub additive_value: f64,
}

impl PathSample {
    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// `A_T`, the time-averaged observable.
    pub fn time_average(&self) -> f64 {
        self.additive_value / self.horizon
    }

    /// Direct recomputation of `T * A_T` from the stored path (dwell-time sum).
    pub fn recompute_additive(&self, model: &JumpModel) -> f64 {
        let mut total = 0.0;
        let mut prev_t = 0.0;
        for (i, &t) in self.jump_times.iter().enumerate() {
            let x = self.states[i];
            total += model.stay_h()[x] * (t - prev_t) + model.jump_g(x, self.states[i + 1]);
            prev_t = t;
        }
        total + model.stay_h()[*self.states.last().unwrap()] * (self.horizon - prev_t)
    }
}

/// Exact event-driven simulation of the base dynamics from `x0`.
pub fn simulate_path<R: Rng + ?Sized>(model: &JumpModel, x0: usize, horizon: f64, rng: &mut R) -> Result<PathSample> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if x0 >= model.size() {
        return Err(Error::InvalidArgument(format!("initial state {x0} outside 0..{}", model.size())));
    }
    let h = model.stay_h();
    let mut states = vec![x0];
    let mut jump_times = Vec::new();
    let mut jump_sum = 0.0;
    // Occupation integral by summation by parts:
    //   int_0^T h(x_s) ds = h(x_n) T - sum_i t_i (h(x_i) - h(x_{i-1})),
    // exact when h is constant along the path.
    let mut boundary = 0.0;
    let mut x = x0;
    let mut t = 0.0;
    loop {
        t += exp_time(rng, model.escape[x]);
        if t >= horizon {
            break;
        }
        let row = &model.out[x];
        let target = rng.random::<f64>() * model.escape[x];
        let mut acc = 0.0;
        let mut next = row[row.len() - 1];
        for tr in row {
            acc += tr.rate;
            if target < acc {
                next = *tr;
                break;
            }
        }
        jump_sum += next.g;
        boundary += t * (h[next.to] - h[x]);
        x = next.to;
        states.push(x);
        jump_times.push(t);
    }
    let additive_value = jump_sum + (h[x] * horizon - boundary);
    Ok(PathSample {
        states,
        jump_times,
        horizon,
        additive_value,
    })
}
