use cb2o::baselines::{
    adapt_penalty, cbo_gradient_force_run, penalized_cbo_run, projected_cbo_run, run_baseline,
    BaselineKind, PENALTY_CAP,
};
use cb2o::dynamics::{Cb2oParams, RunOptions, TraceLevel};
use cb2o::problems::{ackley, ackley_circle, ackley_star};
use cb2o::{run, BiLevelProblem, InitSpec};

fn params(n: usize, k: usize) -> Cb2oParams {
    Cb2oParams {
        n_particles: n,
        max_iters: k,
        ..Cb2oParams::default()
    }
}

fn flat_problem() -> BiLevelProblem<f64> {
    BiLevelProblem::new(|_: &[f64]| 0.0, ackley::<f64>)
        .with_lower_grad(|_: &[f64], g: &mut [f64]| g.iter_mut().for_each(|v| *v = 0.0))
        .with_lower_hessian(|_: &[f64], h: &mut [f64]| h.iter_mut().for_each(|v| *v = 0.0))
        .with_dim(2)
}

#[test]
fn unpenalized_cbo_is_cb2o_with_full_quantile() {
    let p = ackley_circle::<f64>();
    let pen = penalized_cbo_run(&p, 0.0, &params(60, 300), &InitSpec::default(), 4).unwrap();
    let plain = BiLevelProblem::new(|_: &[f64]| 0.0, ackley::<f64>).with_dim(2);
    let full = Cb2oParams {
        beta: 1.0,
        ..params(60, 300)
    };
    let cb = run(&plain, &full, &InitSpec::default(), 4).unwrap();
    for (a, b) in pen
        .summary
        .final_consensus
        .iter()
        .zip(&cb.summary.final_consensus)
    {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn gradient_force_without_gradient_is_plain_cbo() {
    let p = flat_problem();
    let gf = cbo_gradient_force_run(&p, 100.0, &params(50, 300), &InitSpec::default(), 9).unwrap();
    let pen = penalized_cbo_run(&p, 0.0, &params(50, 300), &InitSpec::default(), 9).unwrap();
    assert_eq!(gf.summary.final_consensus, pen.summary.final_consensus);
}

#[test]
fn projected_cbo_stays_on_the_circle() {
    let p = ackley_circle::<f64>();
    let opts = RunOptions {
        trace: TraceLevel::Full,
        checkpoint_every: Some(1),
        ..RunOptions::default()
    };
    let t = run_baseline(
        BaselineKind::ProjectedCbo,
        &p,
        &params(40, 200),
        &InitSpec::default(),
        1,
        &opts,
    )
    .unwrap();
    for cp in &t.checkpoints {
        for r in cp.after.chunks(2) {
            assert!(((r[0] * r[0] + r[1] * r[1]).sqrt() - 1.0).abs() <= 1e-12);
        }
    }
    let full = projected_cbo_run(&p, &params(100, 3000), &InitSpec::default(), 0).unwrap();
    assert!(full.summary.final_precision.unwrap() < 0.05);
}

#[test]
fn projected_cbo_needs_a_projector() {
    let err = projected_cbo_run(
        &ackley_star::<f64>(),
        &params(10, 1),
        &InitSpec::default(),
        0,
    )
    .unwrap_err();
    assert!(err.is_config());
}

#[test]
fn adaptive_rule() {
    // violation 0.05 < 1/sqrt(100): tighten the tolerance
    assert_eq!(adapt_penalty(2.0, 100.0, 0.05, 1.1, 1.5), (2.0, 150.0));
    // violation 0.2 >= 0.1: raise the penalty
    let (chi, zeta) = adapt_penalty(2.0, 100.0, 0.2, 1.1, 1.5);
    assert!((chi - 2.2).abs() < 1e-15 && zeta == 100.0);
    assert_eq!(
        adapt_penalty(PENALTY_CAP, 1.0, 5.0, 2.0, 2.0).0,
        PENALTY_CAP
    );
}

#[test]
fn penalized_cbo_approaches_the_circle() {
    let t = penalized_cbo_run(
        &ackley_circle::<f64>(),
        100.0,
        &params(100, 3000),
        &InitSpec::default(),
        0,
    )
    .unwrap();
    let m = &t.summary.final_consensus;
    assert!(((m[0] * m[0] + m[1] * m[1]).sqrt() - 1.0).abs() < 0.05);
}
