use cb2o::dynamics::{reinit_if_stuck, run_with, Cb2oParams, ReinitState, RunOptions, TraceLevel};
use cb2o::problems::{ackley_circle, himmelblau_problem};
use cb2o::{consensus_point, run, Ensemble, InitSpec, RngStream, StopReason};

fn short(n: usize, k: usize) -> Cb2oParams {
    Cb2oParams {
        n_particles: n,
        max_iters: k,
        ..Cb2oParams::default()
    }
}

#[test]
fn zero_iterations_reports_the_initial_consensus() {
    let p = ackley_circle::<f64>();
    let init = InitSpec::default();
    let t = run(&p, &short(50, 0), &init, 11).unwrap();
    assert_eq!(t.summary.iterations, 0);
    assert_eq!(t.summary.stop_reason, StopReason::MaxIters);
    assert!(t.records.is_empty());
    // same draws as the run: stream 0 of seed 11
    let ens: Ensemble<f64> = cb2o::init_ensemble(50, 2, &init, &mut RngStream::new(11, 0)).unwrap();
    let m = consensus_point(&ens, &p, 30.0, 1.0 / 20.0).unwrap().point;
    assert_eq!(t.summary.final_consensus, m);
    assert_eq!(t.init.consensus, m);
}

#[test]
fn identical_seeds_reproduce_the_trace() {
    let p = ackley_circle::<f64>();
    let opts = RunOptions {
        trace: TraceLevel::Full,
        ..RunOptions::default()
    };
    let a = run_with(&p, &short(80, 400), &InitSpec::default(), 5, &opts).unwrap();
    let b = run_with(&p, &short(80, 400), &InitSpec::default(), 5, &opts).unwrap();
    assert_eq!(a.records.len(), 400);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.consensus, y.consensus);
        assert_eq!(x.c_stop.to_bits(), y.c_stop.to_bits());
    }
    assert_eq!(a.summary.final_consensus, b.summary.final_consensus);

    let other = RunOptions {
        stream_id: 1,
        ..opts.clone()
    };
    let c = run_with(&p, &short(80, 400), &InitSpec::default(), 5, &other).unwrap();
    assert_ne!(a.summary.final_consensus, c.summary.final_consensus);
}

#[test]
fn checkpointed_c_stop_matches_recomputation() {
    let p = ackley_circle::<f64>();
    let opts = RunOptions {
        trace: TraceLevel::Full,
        checkpoint_every: Some(50),
        ..RunOptions::default()
    };
    let t = run_with(&p, &short(60, 200), &InitSpec::default(), 2, &opts).unwrap();
    assert_eq!(t.checkpoints.len(), 4);
    for cp in &t.checkpoints {
        let rec = &t.records[cp.iter];
        assert_eq!(rec.iter, cp.iter);
        let m = &rec.consensus;
        let sq: f64 = cp
            .after
            .chunks(2)
            .map(|r| (r[0] - m[0]).powi(2) + (r[1] - m[1]).powi(2))
            .sum();
        let want = sq / (2.0 * 60.0);
        assert!(
            (rec.c_stop - want).abs() <= 1e-14 * want.max(1e-300),
            "iter {}",
            cp.iter
        );
        // the recorded consensus is the one of the state before the step
        let before = Ensemble::from_flat(cp.before.clone(), 60, 2).unwrap();
        assert_eq!(
            consensus_point(&before, &p, 30.0, 1.0 / 20.0)
                .unwrap()
                .point,
            *m
        );
    }
}

#[test]
fn loose_threshold_stops_after_one_step() {
    let params = Cb2oParams {
        eps_stop: 1e6,
        ..short(40, 1000)
    };
    let t = run(&ackley_circle::<f64>(), &params, &InitSpec::default(), 0).unwrap();
    assert_eq!(t.summary.iterations, 1);
    assert_eq!(t.summary.stop_reason, StopReason::Converged);
    assert_eq!(t.records.len(), 1);
}

#[test]
fn himmelblau_demo_selects_the_minimiser_nearest_the_parabola() {
    let params = Cb2oParams {
        n_particles: 200,
        max_iters: 2000,
        ..Cb2oParams::default()
    };
    let t = run(
        &himmelblau_problem::<f64>(),
        &params,
        &InitSpec::uniform(-5.0, 5.0),
        3,
    )
    .unwrap();
    assert!(t.summary.final_precision.unwrap() < 1e-3);
}

#[test]
fn single_precision_run() {
    let t = run(
        &ackley_circle::<f32>(),
        &short(100, 3000),
        &InitSpec::default(),
        0,
    )
    .unwrap();
    assert!(t.summary.final_precision.unwrap() < 0.05);
}

#[test]
fn reinit_perturbs_after_patience_steps() {
    let rows = [[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
    let mut ens = Ensemble::from_rows(&rows).unwrap();
    let mut state = ReinitState::default();
    let mut rng = RngStream::new(17, 3);
    let m = [0.1, 0.2];
    let moved = [0.2, 0.2];
    assert!(!reinit_if_stuck(
        &mut state, &m, &m, &mut ens, 0.5, &mut rng, 3
    ));
    assert!(!reinit_if_stuck(
        &mut state, &m, &moved, &mut ens, 0.5, &mut rng, 3
    ));
    assert_eq!(state.frozen_steps, 0);
    assert!(!reinit_if_stuck(
        &mut state, &m, &m, &mut ens, 0.5, &mut rng, 3
    ));
    assert!(!reinit_if_stuck(
        &mut state, &m, &m, &mut ens, 0.5, &mut rng, 3
    ));
    assert_eq!(ens.as_flat(), Ensemble::from_rows(&rows).unwrap().as_flat());
    assert!(reinit_if_stuck(
        &mut state, &m, &m, &mut ens, 0.5, &mut rng, 3
    ));
    assert_eq!(state.frozen_steps, 0);

    // untouched stream: one N(0, sigma^2) draw per coordinate, row-major
    let mut oracle = RngStream::new(17, 3);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..2 {
            let want = r[j] + 0.5 * oracle.standard_normal();
            assert_eq!(ens.row(i)[j], want);
        }
    }
}
