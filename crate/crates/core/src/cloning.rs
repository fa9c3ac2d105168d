//! Continuous-time cloning algorithm.
//!
//! Particle `i` fires at rate `escape_k(x_i)`. On firing it draws a burst
//! size `n` from the clone law at `x_i`, copies its state onto a uniform
//! `n`-subset `A` of all particles (which may contain `i`), then jumps with
//! the tilted kernel. Independently, particles with `V_k(x) < c` are killed
//! at rate `(V_k(x) - c)^-` and replaced by a uniformly chosen particle. The
//! cloning factor multiplies by `1 + n/N` per burst and `1 - 1/N` per kill.

use rand::Rng;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::event_log::{counts_of, reference_level, Change, EventKind, EventLog, EventRecord, RunOptions};
use crate::mckean::{neg, pos};
use crate::meanfield::{RATE_CHECK_TOL, REFRESH_INTERVAL};
use crate::rng::{categorical, exp_time};
use crate::tilt::TiltedDynamics;

#[derive(Debug, Clone, PartialEq)]
pub struct CloneSizeDistribution {
    pub c: f64,
    /// `M(x) = (V_k(x) - c)^+ / escape_k(x)`.
    pub mean: Vec<f64>,
    /// `law[x][n]` for `n` in `0..support_bound`.
    pub law: Vec<Vec<f64>>,
    /// `Q(x) = sum_n n^2 law[x][n]`.
    pub second_moment: Vec<f64>,
    /// `K`: every law vanishes from `K` on.
    pub support_bound: usize,
    floor: Vec<usize>,
    upper: Vec<f64>,
}

/// Binary law on `{floor(m), floor(m)+1}` with mean `m`, as `(floor(m), P(floor(m)+1))`.
pub fn binary_law(m: f64) -> (usize, f64) {
    let fl = m.floor();
    (fl as usize, m - fl)
}

/// Probability vector of [`binary_law`] on `0..=floor(m)+1`.
pub fn binary_law_vector(m: f64) -> Vec<f64> {
    let (fl, up) = binary_law(m);
    let mut p = vec![0.0; fl + 2];
    p[fl] = 1.0 - up;
    p[fl + 1] = up;
    p
}

/// Binary clone law for threshold `c`.
pub fn build_clone_law(td: &TiltedDynamics, c: f64) -> Result<CloneSizeDistribution> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold c = {c} is not finite")));
    }
    let s = td.size();
    let mut mean = Vec::with_capacity(s);
    let mut floor = Vec::with_capacity(s);
    let mut upper = Vec::with_capacity(s);
    for x in 0..s {
        let m = pos(td.potential()[x] - c) / td.tilted_escape()[x];
        if !(m.is_finite() && m < u32::MAX as f64) {
            return Err(Error::MeanTooLarge {
                state: x,
                mean: m,
                support: usize::MAX,
                n: 0,
            });
        }
        let (fl, up) = binary_law(m);
        mean.push(m);
        floor.push(fl);
        upper.push(up);
    }
    let support_bound = floor.iter().max().copied().unwrap_or(0) + 2;
    let mut law = Vec::with_capacity(s);
    let mut second_moment = Vec::with_capacity(s);
    for x in 0..s {
        let mut p = vec![0.0; support_bound];
        p[floor[x]] = 1.0 - upper[x];
        p[floor[x] + 1] = upper[x];
        let fl = floor[x] as f64;
        second_moment.push(fl * fl * (1.0 - upper[x]) + (fl + 1.0) * (fl + 1.0) * upper[x]);
        law.push(p);
    }
    Ok(CloneSizeDistribution {
        c,
        mean,
        law,
        second_moment,
        support_bound,
        floor,
        upper,
    })
}

/// [`build_clone_law`] checked against a population of `n` particles.
pub fn build_clone_law_for(td: &TiltedDynamics, c: f64, n: usize) -> Result<CloneSizeDistribution> {
    let law = build_clone_law(td, c)?;
    if law.support_bound > n {
        let state = (0..td.size()).max_by(|&a, &b| law.mean[a].total_cmp(&law.mean[b])).unwrap_or(0);
        return Err(Error::MeanTooLarge {
            state,
            mean: law.mean[state],
            support: law.support_bound,
            n,
        });
    }
    Ok(law)
}

impl CloneSizeDistribution {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let up = self.upper[x];
        if up > 0.0 && rng.random::<f64>() < up {
            self.floor[x] + 1
        } else {
            self.floor[x]
        }
    }

    pub fn check_population(&self, n: usize) -> Result<()> {
        if n < self.support_bound {
            return Err(Error::EnsembleTooSmall { n, k: self.support_bound });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CloningFactor {
    pub log_value: f64,
}

impl CloningFactor {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn record_clone(&mut self, size: usize, n: usize) {
        if size > 0 {
            self.log_value += (size as f64 / n as f64).ln_1p();
        }
    }

    pub fn record_kill(&mut self, n: usize) {
        self.log_value += (-1.0 / n as f64).ln_1p();
    }
}

pub fn run_cloning<R: Rng + ?Sized>(
    td: &TiltedDynamics,
    law: &CloneSizeDistribution,
    ensemble: ParticleEnsemble,
    horizon: f64,
    rng: &mut R,
) -> Result<(ParticleEnsemble, EventLog, CloningFactor)> {
    run_cloning_with(td, law, ensemble, horizon, rng, &RunOptions::default())
}

/// Density `lambda_k Q + (V_k - c)^-` whose empirical mean drives the
/// quadratic variation of the log cloning factor.
pub fn qv_density(td: &TiltedDynamics, law: &CloneSizeDistribution) -> Vec<f64> {
    (0..td.size())
        .map(|x| td.tilted_escape()[x] * law.second_moment[x] + neg(td.potential()[x] - law.c))
        .collect()
}

pub fn run_cloning_with<R: Rng + ?Sized>(
    td: &TiltedDynamics,
    law: &CloneSizeDistribution,
    mut ens: ParticleEnsemble,
    horizon: f64,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<(ParticleEnsemble, EventLog, CloningFactor)> {
    let s = td.size();
    if law.mean.len() != s || ens.num_states() != s {
        return Err(Error::InvalidArgument("clone law, ensemble and dynamics disagree on the state space".into()));
    }
    let n = ens.n();
    law.check_population(n)?;
    let mut t = ens.clock();
    if !(horizon > t) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must exceed the current clock {t}")));
    }
    let nf = n as f64;
    let lam = td.tilted_escape();
    let v = td.potential();
    let v_ref = reference_level(v);
    let dv: Vec<f64> = v.iter().map(|x| x - v_ref).collect();
    let kill: Vec<f64> = v.iter().map(|&vx| neg(vx - law.c)).collect();
    let rate: Vec<f64> = (0..s).map(|x| lam[x] + kill[x]).collect();
    let q = qv_density(td, law);
    for x in 0..s {
        assert_eq!(law.mean[x] == 0.0, v[x] <= law.c, "clone mean and threshold disagree at state {x}");
    }

    let weighted = |counts: &[usize], w: &[f64]| -> f64 { counts.iter().zip(w).map(|(&c, w)| c as f64 * w).sum() };
    let mut counts = ens.counts();
    let mut excess = weighted(&counts, &dv);
    let mut q_sum = weighted(&counts, &q);
    let mut factor = CloningFactor::default();
    let mut log = EventLog::new(v, ens.states(), t, excess / nf, q_sum / nf, opts.record_events);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut changes: Vec<Change> = Vec::with_capacity(law.support_bound);
    let mut snaps: Vec<f64> = opts.snapshot_times.iter().copied().filter(|&s| s > t && s <= horizon).collect();
    snaps.sort_by(f64::total_cmp);
    let mut next_snap = 0;
    let mut since_refresh = 0u64;

    loop {
        let total = weighted(&counts, &rate);
        if opts.verify_rates {
            let fresh: f64 = ens.states().iter().map(|&x| rate[x]).sum();
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

        let x = categorical(rng, (0..s).map(|z| counts[z] as f64 * rate[z]), total);
        let i = ens.random_member(x, rng);
        changes.clear();
        let (kind, size) = if rng.random::<f64>() * rate[x] < lam[x] {
            let size = law.sample(x, rng);
            for k in 0..size {
                let r = rng.random_range(k..n);
                perm.swap(k, r);
                let j = perm[k];
                if j != i && ens.state(j) != x {
                    let pre = ens.set_state(j, x);
                    changes.push(Change { index: j, pre, post: x });
                }
            }
            let y = td.sample_jump(x, rng);
            ens.set_state(i, y);
            changes.push(Change { index: i, pre: x, post: y });
            factor.record_clone(size, n);
            (if size > 0 { EventKind::Clone } else { EventKind::Mutation }, size)
        } else {
            let j = rng.random_range(0..n);
            let post = ens.state(j);
            if post != x {
                ens.set_state(i, post);
                changes.push(Change { index: i, pre: x, post });
            }
            factor.record_kill(n);
            (EventKind::Kill, 0)
        };
        debug_assert!(changes.len() <= law.support_bound);

        for ch in &changes {
            counts[ch.pre] -= 1;
            counts[ch.post] += 1;
            excess += dv[ch.post] - dv[ch.pre];
            q_sum += q[ch.post] - q[ch.pre];
        }
        since_refresh += 1;
        if since_refresh >= REFRESH_INTERVAL {
            excess = weighted(&counts, &dv);
            q_sum = weighted(&counts, &q);
            since_refresh = 0;
        }
        if !changes.is_empty() || kind != EventKind::Mutation {
            log.push_knot(t, excess / nf, factor.log_value, q_sum / nf);
        }
        log.note_event(changes.len());
        if opts.record_events {
            log.push_event(EventRecord {
                time: t,
                kind,
                actor: i,
                changes: changes.clone(),
                clone_size: size,
                log_factor: factor.log_value,
            });
        }
    }
    for &snap in &snaps[next_snap..] {
        log.push_snapshot(snap, counts.clone());
    }
    debug_assert_eq!(counts, counts_of(ens.states(), s));
    ens.set_clock(horizon);
    log.finish(horizon, counts);
    Ok((ens, log, factor))
}

/// Predicted variance density `(1/N) m(G_m(f,f))` of `F = m(.)(f)` under the
/// cloning dynamics at the current configuration: the carre du champ of the
/// McKean generator, plus `lambda (Q - M) (l f)^2` from burst-size
/// fluctuations, minus the mutation/cloning cross term
/// `(2/lambda) L^ f (V - c)^+ l f`, where `l f(x) = m(f) - f(x)`.
pub fn predict_carre(td: &TiltedDynamics, law: &CloneSizeDistribution, ensemble: &ParticleEnsemble, f: &[f64]) -> f64 {
    let s = td.size();
    let mu = ensemble.empirical();
    let mu_f: f64 = mu.iter().zip(f).map(|(a, b)| a * b).sum();
    let v = td.potential();
    let lam = td.tilted_escape();
    let lf = td.jump_generator_apply(f);
    let mut total = 0.0;
    for x in (0..s).filter(|&x| mu[x] > 0.0) {
        let mutation: f64 = td.transitions(x).iter().map(|t| t.rate * (f[t.to] - f[x]).powi(2)).sum();
        let selection: f64 = (0..s)
            .map(|y| (neg(v[x] - law.c) + pos(v[y] - law.c)) * (f[y] - f[x]).powi(2) * mu[y])
            .sum();
        let l = mu_f - f[x];
        let burst = lam[x] * (law.second_moment[x] - law.mean[x]) * l * l;
        let cross = 2.0 / lam[x] * lf[x] * pos(v[x] - law.c) * l;
        total += mu[x] * (mutation + selection + burst - cross);
    }
    total / ensemble.n() as f64
}
