//! Particle ensembles with per-state occupancy bookkeeping.
//!
//! Besides the state of every particle the ensemble keeps, for each state,
//! the list of particles currently occupying it. Engines pick "a uniform
//! particle in state x" in O(1) and move particles in O(1).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::categorical;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    states: Vec<usize>,
    clock: f64,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl PartialEq for ParticleEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states && self.clock == other.clock && self.members.len() == other.members.len()
    }
}

impl ParticleEnsemble {
    /// Ensemble with the given particle states on a space of `num_states` states, clock 0.
    pub fn from_states(states: Vec<usize>, num_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one particle".into()));
        }
        if let Some(&x) = states.iter().find(|&&x| x >= num_states) {
            return Err(Error::InvalidArgument(format!("particle state {x} outside 0..{num_states}")));
        }
        let mut members = vec![Vec::new(); num_states];
        let mut slot = vec![0; states.len()];
        for (i, &x) in states.iter().enumerate() {
            slot[i] = members[x].len();
            members[x].push(i);
        }
        Ok(Self {
            states,
            clock: 0.0,
            members,
            slot,
        })
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn num_states(&self) -> usize {
        self.members.len()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn state(&self, i: usize) -> usize {
        self.states[i]
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub(crate) fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    /// Number of particles in state `x`.
    #[inline]
    pub fn count(&self, x: usize) -> usize {
        self.members[x].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Empirical distribution `m(xi)`.
    pub fn empirical(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.members.iter().map(|m| m.len() as f64 / n).collect()
    }

    /// `m(xi)(f)`, summed over occupied states.
    pub fn mean(&self, f: &[f64]) -> f64 {
        let total: f64 = self
            .members
            .iter()
            .zip(f)
            .filter(|(m, _)| !m.is_empty())
            .map(|(m, v)| m.len() as f64 * v)
            .sum();
        total / self.n() as f64
    }

    /// Move particle `i` to state `y`; returns the previous state.
    #[inline]
    pub fn set_state(&mut self, i: usize, y: usize) -> usize {
        let x = self.states[i];
        if x == y {
            return x;
        }
        let pos = self.slot[i];
        let list = &mut self.members[x];
        let last = list.pop().expect("particle listed under its state");
        if last != i {
            list[pos] = last;
            self.slot[last] = pos;
        }
        self.slot[i] = self.members[y].len();
        self.members[y].push(i);
        self.states[i] = y;
        x
    }

    /// Uniformly chosen particle among those in state `x` (which must be occupied).
    #[inline]
    pub fn random_member<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let list = &self.members[x];
        list[rng.random_range(0..list.len())]
    }
}

/// `n` i.i.d. particles drawn from `mu0`, clock 0.
pub fn init_ensemble<R: Rng + ?Sized>(mu0: &[f64], n: usize, rng: &mut R) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be at least 1".into()));
    }
    if mu0.is_empty() || mu0.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidArgument("mu0 must be a non-negative vector".into()));
    }
    let total: f64 = mu0.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("mu0 sums to {total}, not 1")));
    }
    let states = (0..n).map(|_| categorical(rng, mu0.iter().copied(), total)).collect();
    ParticleEnsemble::from_states(states, mu0.len())
}
