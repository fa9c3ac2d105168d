//! Statistical checks of the particle engines against deterministic references.

mod common;

use common::*;
use rayon::prelude::*;
use scgf_core::ensemble::{init_ensemble, ParticleEnsemble};
use scgf_core::estimators::{
    ergodic_estimator, factor_estimator, factor_snapshot, mean_and_stderr, scaling_sweep, unnormalized_estimator, Algorithm, Engine,
    SweepConfig,
};
use scgf_core::event_log::RunOptions;
use scgf_core::mckean::{SelectionFamily, SelectionRates};
use scgf_core::meanfield::run_meanfield_with;
use scgf_core::model::registry_model;
use scgf_core::oracle::{evolve_marginals, solve_spectral};
use scgf_core::rng::{replica_id, stream};
use scgf_core::tilt::tilt;

const ALGORITHMS: [Algorithm; 3] = [Algorithm::MeanfieldKc, Algorithm::MeanfieldFit, Algorithm::Cloning];

#[test]
fn zero_tilt_particles_follow_the_base_chain() {
    let model = registry_model("birth_death", &params(&[])).unwrap();
    let td = tilt(&model, 0.0).unwrap();
    let mu0 = [1.0, 0.0, 0.0, 0.0, 0.0];
    let exact = evolve_marginals(&td, &mu0, 3.0, 0.01).unwrap();
    let n = 20_000;
    for algorithm in ALGORITHMS {
        let engine = Engine::new(&model, 0.0, 0.0, algorithm).unwrap();
        let run = engine.run(&mu0, n, 3.0, &mut stream(21, 0), &RunOptions::default()).unwrap();
        assert_eq!(run.factor.log_value, 0.0);
        for (x, &p) in exact.final_mu().iter().enumerate() {
            let frac = run.ensemble.count(x) as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() < 4.0 * sd + 1e-12, "{algorithm} state {x}: {frac} vs {p}");
        }
    }
}

#[test]
fn constant_potential_meanfield_example() {
    let model = two_state(1.0, 1.0);
    let engine = Engine::new(&model, 1.0, 0.0, Algorithm::MeanfieldKc).unwrap();
    let run = engine.run(&[0.5, 0.5], 500, 100.0, &mut stream(5, 0), &RunOptions::default()).unwrap();
    let est = ergodic_estimator(&run.log, 50.0, 100.0).unwrap();
    assert!((est.value - (std::f64::consts::E - 1.0)).abs() < 1e-12);
}

#[test]
fn ergodic_estimators_match_spectral_on_biased_ring() {
    let model = registry_model("ring_current", &params(&[("S", 6.0), ("p", 0.7), ("q", 0.3)])).unwrap();
    let k = 0.5;
    let exact = solve_spectral(&tilt(&model, k).unwrap()).unwrap().scgf;
    let n = 200;
    let mu0 = vec![1.0 / 6.0; 6];
    for algorithm in ALGORITHMS {
        let engine = Engine::new(&model, k, 0.0, algorithm).unwrap();
        let values: Vec<(f64, f64)> = (0..20u32)
            .into_par_iter()
            .map(|r| {
                let run = engine.run(&mu0, n, 60.0, &mut stream(77, replica_id(0, r)), &RunOptions::default()).unwrap();
                let erg = ergodic_estimator(&run.log, 30.0, 60.0).unwrap().value;
                let fac = factor_estimator(factor_snapshot(&run.log, 30.0).unwrap(), factor_snapshot(&run.log, 60.0).unwrap(), 0.0, n)
                    .unwrap()
                    .value;
                (erg, fac)
            })
            .collect();
        let erg: Vec<f64> = values.iter().map(|v| v.0).collect();
        let (mean, se) = mean_and_stderr(&erg);
        // 4 SE plus an allowance for the O(1/N) finite-population bias
        assert!((mean - exact).abs() < 4.0 * se + 2.0 / n as f64, "{algorithm}: {mean} ± {se} vs {exact}");
        if algorithm == Algorithm::Cloning {
            let fac: Vec<f64> = values.iter().map(|v| v.1).collect();
            let (mean, se) = mean_and_stderr(&fac);
            assert!((mean - exact).abs() < 4.0 * se + 2.0 / n as f64, "factor: {mean} ± {se} vs {exact}");
        }
    }
}

#[test]
fn unnormalized_measure_is_unbiased() {
    // non-constant potential, so the check is not trivial
    let model = two_state(0.3, 1.7);
    let k = 0.8;
    let t = 1.0;
    let mu0 = [0.5, 0.5];
    let f = [1.0, 0.25];
    let td = tilt(&model, k).unwrap();
    let traj = evolve_marginals(&td, &mu0, t, 0.001).unwrap();
    let nu_f = traj.unnormalized_at(t, &f);
    let nu_1 = traj.unnormalized_at(t, &[1.0, 1.0]);
    for (algorithm, c) in [(Algorithm::MeanfieldKc, 0.0), (Algorithm::MeanfieldFit, 0.0), (Algorithm::Cloning, 0.0), (Algorithm::Cloning, 1.5)] {
        let engine = Engine::new(&model, k, c, algorithm).unwrap();
        let samples: Vec<(f64, f64)> = (0..20_000u32)
            .into_par_iter()
            .map(|r| {
                let run = engine.run(&mu0, 10, t, &mut stream(31, replica_id(1, r)), &RunOptions::default()).unwrap();
                let nu = unnormalized_estimator(&run.log, &f, t).unwrap();
                (nu, (t * c).exp() * run.factor.value())
            })
            .collect();
        let nus: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let (mean, se) = mean_and_stderr(&nus);
        assert!((mean - nu_f).abs() < 3.5 * se, "{algorithm} c={c}: {mean} ± {se} vs {nu_f}");
        if algorithm == Algorithm::Cloning {
            let facs: Vec<f64> = samples.iter().map(|s| s.1).collect();
            let (mean, se) = mean_and_stderr(&facs);
            assert!((mean - nu_1).abs() < 3.5 * se, "factor c={c}: {mean} ± {se} vs {nu_1}");
        }
    }
}

#[test]
fn short_time_drift_matches_mckean_generator() {
    let model = two_state(0.3, 1.7);
    let k = 1.2;
    let td = tilt(&model, k).unwrap();
    let f = [1.0, -0.5];
    let conf: Vec<usize> = (0..10).map(|i| usize::from(i >= 4)).collect();
    let mu = empirical(&conf, 2);
    let f0 = dot(&mu, &f);
    let delta = 1e-3;
    let v = td.potential();
    let c_mid = 0.5 * (v[0] + v[1]);
    for (algorithm, c) in [(Algorithm::Cloning, 0.0), (Algorithm::Cloning, c_mid), (Algorithm::MeanfieldKc, c_mid)] {
        let engine = Engine::new(&model, k, c, algorithm).unwrap();
        let expected = dot(&mu, &mckean_generator(&td, c, &mu, &f));
        let incr: Vec<f64> = (0..400_000u32)
            .into_par_iter()
            .map(|r| {
                let ens = ParticleEnsemble::from_states(conf.clone(), 2).unwrap();
                let run = engine.run_from(ens, delta, &mut stream(41, replica_id(2, r)), &RunOptions::default()).unwrap();
                (run.ensemble.mean(&f) - f0) / delta
            })
            .collect();
        let (mean, se) = mean_and_stderr(&incr);
        assert!((mean - expected).abs() < 3.5 * se + 0.02, "{algorithm} c={c}: {mean} ± {se} vs {expected}");
    }
}

#[test]
fn count_law_matches_exact_chain() {
    let model = two_state(0.1, 1.0);
    let k = 1.0;
    let td = tilt(&model, k).unwrap();
    let n = 10;
    let horizon = 2.0;
    let exact = evolve_chain(&meanfield_count_chain(&td, 0.0, n), &binomial(n, 1.0), horizon, 20_000);
    let engine = Engine::new(&model, k, 0.0, Algorithm::MeanfieldKc).unwrap();
    let replicas = 40_000u32;
    let counts: Vec<usize> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let run = engine.run(&[1.0, 0.0], n, horizon, &mut stream(51, replica_id(3, r)), &RunOptions::default()).unwrap();
            run.ensemble.count(0)
        })
        .collect();
    let mut hist = vec![0usize; n + 1];
    for c in counts {
        hist[c] += 1;
    }
    for j in 0..=n {
        let p = exact[j];
        let frac = hist[j] as f64 / replicas as f64;
        let sd = (p * (1.0 - p) / replicas as f64).sqrt();
        assert!((frac - p).abs() < 4.5 * sd + 1e-4, "j={j}: {frac} vs {p}");
    }
}

#[test]
fn meanfield_bias_is_first_order_in_population() {
    // exact law of the state counts, no sampling
    let model = two_state(0.1, 1.0);
    let k = 1.0;
    let td = tilt(&model, k).unwrap();
    let horizon = 20.0;
    let oracle = evolve_marginals(&td, &[1.0, 0.0], horizon, 0.01).unwrap().final_mu()[0];
    let mut bias = Vec::new();
    let mut rmse = Vec::new();
    let ns = [50usize, 100, 200, 400];
    for &n in &ns {
        let rows = meanfield_count_chain(&td, 0.0, n);
        let max_rate: f64 = rows.iter().map(|r| r.iter().map(|e| e.1).sum::<f64>()).fold(0.0, f64::max);
        let steps = (horizon * max_rate).ceil() as usize;
        let p = evolve_chain(&rows, &binomial(n, 1.0), horizon, steps);
        let m: f64 = p.iter().enumerate().map(|(j, w)| w * j as f64 / n as f64).sum();
        let mse: f64 = p.iter().enumerate().map(|(j, w)| w * (j as f64 / n as f64 - oracle).powi(2)).sum();
        bias.push((m - oracle).abs());
        rmse.push(mse.sqrt());
    }
    for i in 1..ns.len() {
        let b = bias[i - 1] / bias[i];
        let r = rmse[i - 1] / rmse[i];
        assert!((1.8..2.2).contains(&b), "bias ratio {b} ({bias:?})");
        assert!((1.3..1.5).contains(&r), "rmse ratio {r} ({rmse:?})");
    }
}

#[test]
fn rate_bookkeeping_survives_refreshes() {
    let model = registry_model("ring_current", &params(&[("S", 8.0), ("p", 0.9), ("q", 0.4)])).unwrap();
    let td = tilt(&model, 0.7).unwrap();
    let opts = RunOptions {
        verify_rates: true,
        ..Default::default()
    };
    for family in [SelectionFamily::KillingCloning { c: 0.2 }, SelectionFamily::FitnessIncreasing] {
        let sr = SelectionRates::new(family, td.potential());
        let ens = init_ensemble(&[0.125; 8], 60, &mut stream(61, 0)).unwrap();
        let (_, log) = run_meanfield_with(&td, &sr, ens, 300.0, &mut stream(61, 1), &opts).unwrap();
        assert!(log.event_count() > 20_000, "{}", log.event_count());
    }
    let engine = Engine::new(&model, 0.7, 0.2, Algorithm::Cloning).unwrap();
    let run = engine.run(&[0.125; 8], 60, 300.0, &mut stream(61, 2), &opts).unwrap();
    assert!(run.log.event_count() > 20_000);
    assert!(run.log.max_changes() <= engine.clone_law().unwrap().support_bound);
}

#[test]
fn estimates_ignore_particle_labels() {
    let model = registry_model("birth_death", &params(&[])).unwrap();
    let engine = Engine::new(&model, 0.4, 0.5, Algorithm::Cloning).unwrap();
    let opts = RunOptions {
        record_events: true,
        ..Default::default()
    };
    let run = engine.run(&[0.2; 5], 25, 10.0, &mut stream(71, 0), &opts).unwrap();
    let perm: Vec<usize> = (0..25).map(|i| (7 * i + 3) % 25).collect();
    let other = run.log.relabeled(&perm).unwrap();
    let f = [0.0, 1.0, 2.0, 3.0, 4.0];
    for t in [2.5, 7.0] {
        assert_eq!(unnormalized_estimator(&run.log, &f, t).unwrap(), unnormalized_estimator(&other, &f, t).unwrap());
        assert_eq!(run.log.counts_at(t).unwrap(), other.counts_at(t).unwrap());
    }
    assert_eq!(ergodic_estimator(&run.log, 2.0, 10.0).unwrap(), ergodic_estimator(&other, 2.0, 10.0).unwrap());
    assert_eq!(other.replay_integral(), run.log.replay_integral());
}

#[test]
fn runs_are_reproducible() {
    let model = two_state(0.3, 1.7);
    for algorithm in ALGORITHMS {
        let engine = Engine::new(&model, 0.9, 0.1, algorithm).unwrap();
        let opts = RunOptions {
            record_events: true,
            ..Default::default()
        };
        let a = engine.run(&[0.5, 0.5], 30, 5.0, &mut stream(9, 4), &opts).unwrap();
        let b = engine.run(&[0.5, 0.5], 30, 5.0, &mut stream(9, 4), &opts).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.ensemble, b.ensemble);
    }
}

#[test]
fn factor_and_ergodic_estimates_converge_together() {
    let model = two_state(0.3, 1.7);
    let engine = Engine::new(&model, 0.8, 0.0, Algorithm::Cloning).unwrap();
    let paired_rms = |n: usize, horizon: f64| {
        let sq: Vec<f64> = (0..100u32)
            .into_par_iter()
            .map(|r| {
                let run = engine.run(&[0.5, 0.5], n, horizon, &mut stream(61, replica_id(n as u32, r)), &RunOptions::default()).unwrap();
                let t0 = horizon / 2.0;
                let erg = ergodic_estimator(&run.log, t0, horizon).unwrap().value;
                let fac = factor_estimator(factor_snapshot(&run.log, t0).unwrap(), factor_snapshot(&run.log, horizon).unwrap(), 0.0, n)
                    .unwrap()
                    .value;
                (fac - erg).powi(2)
            })
            .collect();
        (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
    };
    let base = paired_rms(50, 20.0);
    let more_particles = paired_rms(400, 20.0);
    let longer_window = paired_rms(50, 160.0);
    // both scale like 1/sqrt(N (t1 - t0)); expected ratios are sqrt(8)
    assert!(more_particles < base / 2.0, "{base} vs {more_particles}");
    assert!(longer_window < base / 2.0, "{base} vs {longer_window}");
}

#[test]
fn rmse_slope_does_not_depend_on_horizon() {
    let slope = |horizon: f64| {
        scaling_sweep(&SweepConfig {
            model: two_state(1.0, 1.0),
            k: 1.0,
            c: 0.0,
            algorithm: Algorithm::MeanfieldKc,
            horizon,
            ns: vec![50, 100, 200, 400],
            replicas: 200,
            f: vec![1.0, 0.0],
            mu0: vec![1.0, 0.0],
            seed: 23,
        })
        .unwrap()
        .fitted_rmse_slope
    };
    let (short, long) = (slope(10.0), slope(20.0));
    assert!((short - long).abs() < 0.2, "{short} vs {long}");
    assert!((-0.65..=-0.35).contains(&short) && (-0.65..=-0.35).contains(&long));
}
