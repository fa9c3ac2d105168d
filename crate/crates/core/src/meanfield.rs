//! Mean-field particle approximation.
//!
//! Particle `i` mutates at rate `escape_k(x_i)` with the tilted jump kernel
//! and is replaced by the state of a uniformly chosen particle `j` at rate
//! `W~(x_i, x_j) / N`. Rates depend on the configuration only through the
//! state counts, so the engine keeps per-state selection rates
//! `sel(x) = (1/N) sum_y c_y W~(x,y)` and updates them in O(S) per move.

use rand::Rng;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::event_log::{counts_of, reference_level, Change, EventKind, EventLog, EventRecord, RunOptions};
use crate::mckean::SelectionRates;
use crate::rng::{categorical, exp_time};
use crate::tilt::TiltedDynamics;

/// Events between full recomputations of the cached rates.
pub const REFRESH_INTERVAL: u64 = 10_000;

/// Relative tolerance of the per-event rate verification.
pub const RATE_CHECK_TOL: f64 = 1e-9;

pub fn run_meanfield<R: Rng + ?Sized>(
    td: &TiltedDynamics,
    sr: &SelectionRates,
    ensemble: ParticleEnsemble,
    horizon: f64,
    rng: &mut R,
) -> Result<(ParticleEnsemble, EventLog)> {
    run_meanfield_with(td, sr, ensemble, horizon, rng, &RunOptions::default())
}

fn selection_rows(sr: &SelectionRates, counts: &[usize], n: f64) -> Vec<f64> {
    let s = counts.len();
    (0..s)
        .map(|x| {
            (0..s)
                .filter(|&y| counts[y] > 0)
                .map(|y| counts[y] as f64 * sr.rate(x, y))
                .sum::<f64>()
                / n
        })
        .collect()
}

fn excess_sum(counts: &[usize], dv: &[f64]) -> f64 {
    counts.iter().zip(dv).map(|(&c, d)| c as f64 * d).sum()
}

/// Total event rate recomputed from the particle states alone.
pub fn fresh_total_rate(td: &TiltedDynamics, sr: &SelectionRates, ensemble: &ParticleEnsemble) -> f64 {
    let counts = counts_of(ensemble.states(), td.size());
    let sel = selection_rows(sr, &counts, ensemble.n() as f64);
    ensemble
        .states()
        .iter()
        .map(|&x| td.tilted_escape()[x] + sel[x])
        .sum()
}

pub fn run_meanfield_with<R: Rng + ?Sized>(
    td: &TiltedDynamics,
    sr: &SelectionRates,
    mut ens: ParticleEnsemble,
    horizon: f64,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<(ParticleEnsemble, EventLog)> {
    let s = td.size();
    if sr.size() != s || ens.num_states() != s {
        return Err(Error::InvalidArgument("selection rates, ensemble and dynamics disagree on the state space".into()));
    }
    let mut t = ens.clock();
    if !(horizon > t) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must exceed the current clock {t}")));
    }
    let n = ens.n() as f64;
    let lam = td.tilted_escape();
    let v = &sr.potential;
    let v_ref = reference_level(v);
    let dv: Vec<f64> = v.iter().map(|x| x - v_ref).collect();

    let mut counts = ens.counts();
    let mut sel = selection_rows(sr, &counts, n);
    let mut excess = excess_sum(&counts, &dv);
    let mut log = EventLog::new(v, ens.states(), t, excess / n, 0.0, opts.record_events);

    let mut snaps: Vec<f64> = opts.snapshot_times.iter().copied().filter(|&s| s > t && s <= horizon).collect();
    snaps.sort_by(f64::total_cmp);
    let mut next_snap = 0;
    let mut since_refresh = 0u64;

    loop {
        let total: f64 = (0..s).map(|x| counts[x] as f64 * (lam[x] + sel[x])).sum();
        if opts.verify_rates {
            let fresh = fresh_total_rate(td, sr, &ens);
            assert!(
                (total - fresh).abs() <= RATE_CHECK_TOL * fresh.max(1.0),
                "cached total rate {total} drifted from {fresh}"
            );
        }
        let t_next = t + exp_time(rng, total);
        while next_snap < snaps.len() && snaps[next_snap] < t_next {
            log.push_snapshot(snaps[next_snap], counts.clone());
            next_snap += 1;
        }
        if t_next > horizon {
            break;
        }
        t = t_next;

        let x = categorical(rng, (0..s).map(|z| counts[z] as f64 * (lam[z] + sel[z])), total);
        let i = ens.random_member(x, rng);
        let (kind, y) = if rng.random::<f64>() * (lam[x] + sel[x]) < lam[x] {
            (EventKind::Mutation, td.sample_jump(x, rng))
        } else {
            let y = categorical(rng, (0..s).map(|z| counts[z] as f64 * sr.rate(x, z)), sel[x] * n);
            (EventKind::SelectionReplace, y)
        };

        let mut changed = 0;
        if y != x {
            ens.set_state(i, y);
            counts[x] -= 1;
            counts[y] += 1;
            for (z, row) in sel.iter_mut().enumerate() {
                *row += (sr.rate(z, y) - sr.rate(z, x)) / n;
            }
            excess += dv[y] - dv[x];
            since_refresh += 1;
            if since_refresh >= REFRESH_INTERVAL {
                sel = selection_rows(sr, &counts, n);
                excess = excess_sum(&counts, &dv);
                since_refresh = 0;
            }
            log.push_knot(t, excess / n, 0.0, 0.0);
            changed = 1;
        }
        log.note_event(changed);
        if opts.record_events {
            log.push_event(EventRecord {
                time: t,
                kind,
                actor: i,
                changes: vec![Change { index: i, pre: x, post: y }],
                clone_size: 0,
                log_factor: 0.0,
            });
        }
    }
    for &snap in &snaps[next_snap..] {
        log.push_snapshot(snap, counts.clone());
    }
    ens.set_clock(horizon);
    log.finish(horizon, counts);
    Ok((ens, log))
}
