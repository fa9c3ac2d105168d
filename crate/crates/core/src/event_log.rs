//! Run records shared by the particle engines.
//!
//! Between events the configuration is constant, so `m(xi_s)(V)` is
//! piecewise constant and its time integral is a finite sum. The log keeps
//! one knot per configuration change. Averages are stored relative to
//! `v_ref = min V`, which makes a constant potential reproduce exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Mutation,
    SelectionReplace,
    Clone,
    Kill,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Mutation => "mutation",
            EventKind::SelectionReplace => "selection_replace",
            EventKind::Clone => "clone",
            EventKind::Kill => "kill",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Change {
    pub index: usize,
    pub pre: usize,
    pub post: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub actor: usize,
    pub changes: Vec<Change>,
    /// Clone burst size `n` (0 for other kinds).
    pub clone_size: usize,
    /// Cloning-factor log after the event (0 for mean-field runs).
    pub log_factor: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Keep every event, not only the integral knots.
    pub record_events: bool,
    /// Compare the cached total rate against a fresh recomputation at every event.
    pub verify_rates: bool,
    /// Times at which the state counts are stored.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    n: usize,
    potential: Vec<f64>,
    v_ref: f64,
    start: f64,
    end: f64,
    initial_states: Vec<usize>,
    final_counts: Vec<usize>,
    // knot i holds the configuration on [times[i], times[i+1])
    times: Vec<f64>,
    excess: Vec<f64>,
    cum_excess: Vec<f64>,
    log_factor: Vec<f64>,
    qv_density: Vec<f64>,
    cum_qv: Vec<f64>,
    events: Option<Vec<EventRecord>>,
    snapshots: Vec<(f64, Vec<usize>)>,
    event_count: u64,
    max_changes: usize,
}

impl EventLog {
    pub(crate) fn new(potential: &[f64], initial_states: &[usize], start: f64, excess: f64, qv_density: f64, record_events: bool) -> Self {
        Self {
            n: initial_states.len(),
            potential: potential.to_vec(),
            v_ref: reference_level(potential),
            start,
            end: start,
            initial_states: initial_states.to_vec(),
            final_counts: Vec::new(),
            times: vec![start],
            excess: vec![excess],
            cum_excess: vec![0.0],
            log_factor: vec![0.0],
            qv_density: vec![qv_density],
            cum_qv: vec![0.0],
            events: record_events.then(Vec::new),
            snapshots: Vec::new(),
            event_count: 0,
            max_changes: 0,
        }
    }

    /// Closes the current segment at `t` and opens a new one.
    pub(crate) fn push_knot(&mut self, t: f64, excess: f64, log_factor: f64, qv_density: f64) {
        let i = self.times.len() - 1;
        let dt = t - self.times[i];
        let ce = self.cum_excess[i] + dt * self.excess[i];
        let cq = self.cum_qv[i] + dt * self.qv_density[i];
        if dt == 0.0 {
            // overwrite a zero-length segment
            self.excess[i] = excess;
            self.log_factor[i] = log_factor;
            self.qv_density[i] = qv_density;
            return;
        }
        self.times.push(t);
        self.excess.push(excess);
        self.cum_excess.push(ce);
        self.log_factor.push(log_factor);
        self.qv_density.push(qv_density);
        self.cum_qv.push(cq);
    }

    pub(crate) fn note_event(&mut self, changes: usize) {
        self.event_count += 1;
        self.max_changes = self.max_changes.max(changes);
    }

    pub(crate) fn push_event(&mut self, record: EventRecord) {
        if let Some(events) = self.events.as_mut() {
            events.push(record);
        }
    }

    pub(crate) fn push_snapshot(&mut self, t: f64, counts: Vec<usize>) {
        self.snapshots.push((t, counts));
    }

    pub(crate) fn finish(&mut self, end: f64, counts: Vec<usize>) {
        self.end = end;
        self.final_counts = counts;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn initial_states(&self) -> &[usize] {
        &self.initial_states
    }

    pub fn initial_counts(&self) -> Vec<usize> {
        counts_of(&self.initial_states, self.potential.len())
    }

    pub fn final_counts(&self) -> &[usize] {
        &self.final_counts
    }

    pub fn events(&self) -> Option<&[EventRecord]> {
        self.events.as_deref()
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Largest number of particles changed by a single event.
    pub fn max_changes(&self) -> usize {
        self.max_changes
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.times
    }

    /// `m(xi)(V)` on each knot segment.
    pub fn segment_means(&self) -> Vec<f64> {
        self.excess.iter().map(|e| self.v_ref + e).collect()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.start && t <= self.end) {
            return Err(Error::Range(format!("time {t} outside the logged window [{}, {}]", self.start, self.end)));
        }
        Ok(())
    }

    fn knot(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn cum_excess_at(&self, t: f64) -> f64 {
        let i = self.knot(t);
        self.cum_excess[i] + (t - self.times[i]) * self.excess[i]
    }

    /// `int_start^t m(xi_s)(V) ds`.
    pub fn integral_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.v_ref * (t - self.start) + self.cum_excess_at(t))
    }

    /// `(1/(t1-t0)) int_t0^t1 m(xi_s)(V) ds`.
    pub fn window_mean(&self, t0: f64, t1: f64) -> Result<f64> {
        self.check_time(t0)?;
        self.check_time(t1)?;
        if !(t0 < t1) {
            return Err(Error::Range(format!("empty window [{t0}, {t1}]")));
        }
        Ok(self.v_ref + (self.cum_excess_at(t1) - self.cum_excess_at(t0)) / (t1 - t0))
    }

    /// Log of the cloning factor at time `t` (0 for mean-field runs).
    pub fn log_factor_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.log_factor[self.knot(t)])
    }

    /// `int_start^t m(xi_s)(q) ds` for the engine's quadratic-variation density `q`.
    pub fn qv_integral_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let i = self.knot(t);
        Ok(self.cum_qv[i] + (t - self.times[i]) * self.qv_density[i])
    }

    /// State counts at time `t`: the initial or final configuration,
    /// a stored snapshot, or a replay of the recorded events.
    pub fn counts_at(&self, t: f64) -> Result<Vec<usize>> {
        self.check_time(t)?;
        if t == self.end {
            return Ok(self.final_counts.clone());
        }
        if let Some((_, c)) = self.snapshots.iter().find(|(s, _)| *s == t) {
            return Ok(c.clone());
        }
        if t == self.start {
            return Ok(self.initial_counts());
        }
        match &self.events {
            Some(events) => {
                let mut states = self.initial_states.clone();
                for e in events.iter().take_while(|e| e.time <= t) {
                    for ch in &e.changes {
                        states[ch.index] = ch.post;
                    }
                }
                Ok(counts_of(&states, self.potential.len()))
            }
            None => Err(Error::Range(format!(
                "no snapshot at time {t}; request it in RunOptions::snapshot_times or record events"
            ))),
        }
    }

    /// Recomputes `int m(xi_s)(V) ds` over the whole run from the raw events
    /// with a plain left-to-right sum.
    pub fn replay_integral(&self) -> Option<f64> {
        let events = self.events.as_ref()?;
        let mut states = self.initial_states.clone();
        let mean = |s: &[usize]| s.iter().map(|&x| self.potential[x]).sum::<f64>() / self.n as f64;
        let mut t = self.start;
        let mut total = 0.0;
        for e in events {
            total += (e.time - t) * mean(&states);
            t = e.time;
            for ch in &e.changes {
                states[ch.index] = ch.post;
            }
        }
        total += (self.end - t) * mean(&states);
        Some(total)
    }

    /// Recomputes the cloning-factor log from the recorded burst sizes and kills.
    pub fn replay_log_factor(&self) -> Option<f64> {
        let events = self.events.as_ref()?;
        let n = self.n as f64;
        let mut acc = 0.0;
        for e in events {
            match e.kind {
                EventKind::Clone if e.clone_size > 0 => acc += (e.clone_size as f64 / n).ln_1p(),
                EventKind::Kill => acc += (-1.0 / n).ln_1p(),
                _ => {}
            }
        }
        Some(acc)
    }

    /// The same run with particle `i` renamed `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<EventLog> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("relabeling must be a permutation of the particle indices".into()));
        }
        let mut out = self.clone();
        for (i, &x) in self.initial_states.iter().enumerate() {
            out.initial_states[perm[i]] = x;
        }
        if let Some(events) = out.events.as_mut() {
            for e in events.iter_mut() {
                e.actor = perm[e.actor];
                for ch in e.changes.iter_mut() {
                    ch.index = perm[ch.index];
                }
            }
        }
        Ok(out)
    }

    /// Event CSV. Multiple affected particles are joined with `;`.
    pub fn to_csv(&self, cloning_columns: bool) -> Option<String> {
        let events = self.events.as_ref()?;
        let mut out = String::from("t,kind,actor,affected,pre,post");
        if cloning_columns {
            out.push_str(",clone_size,log_factor");
        }
        out.push('\n');
        let join = |f: &dyn Fn(&Change) -> usize, changes: &[Change]| {
            changes.iter().map(|c| f(c).to_string()).collect::<Vec<_>>().join(";")
        };
        for e in events {
            let _ = write!(
                out,
                "{:?},{},{},{},{},{}",
                e.time,
                e.kind.as_str(),
                e.actor,
                join(&|c| c.index, &e.changes),
                join(&|c| c.pre, &e.changes),
                join(&|c| c.post, &e.changes),
            );
            if cloning_columns {
                let _ = write!(out, ",{},{:?}", e.clone_size, e.log_factor);
            }
            out.push('\n');
        }
        Some(out)
    }
}

/// Reference level used for exact averaging: the smallest potential value.
pub(crate) fn reference_level(potential: &[f64]) -> f64 {
    potential.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn counts_of(states: &[usize], s: usize) -> Vec<usize> {
    let mut c = vec![0; s];
    for &x in states {
        c[x] += 1;
    }
    c
}
