use std::f64::consts::PI;

use sdre::estimators::{EstimatorKind, PfPropagation};
use sdre::models::LinearModel;
use sdre::numerics::{Mat, Vector};
use sdre::sim::*;

fn noise_free(mut cfg: SimConfig) -> SimConfig {
    cfg.injected = Some(InjectedNoise {
        qd: Mat::zeros(2, 2),
        rn: Mat::zeros(1, 1),
    });
    cfg
}

fn target(cfg: &SimConfig) -> Vector {
    cfg.model.build().unwrap().equilibrium()
}

fn final_error(cfg: &SimConfig, run: &RunResult) -> f64 {
    (run.x_true.last().unwrap() - target(cfg)).norm()
}

#[test]
fn pendulum_regulates_to_inverted_position() {
    let mut cfg = noise_free(SimConfig::pendulum_benchmark());
    cfg.estimator = EstimatorKind::None;
    let run = run_closed_loop(&cfg, 0).unwrap();
    assert_eq!(run.x_true.len(), 1001);
    assert!(final_error(&cfg, &run) < 0.01);
    let e1 = (&run.x_true[100] - Vector::from_vec(vec![PI, 0.0])).norm();
    assert!(final_error(&cfg, &run) <= e1);
}

#[test]
fn vdp_regulates_to_origin() {
    let mut cfg = noise_free(SimConfig::vdp_benchmark());
    cfg.estimator = EstimatorKind::None;
    let run = run_closed_loop(&cfg, 0).unwrap();
    assert!(final_error(&cfg, &run) < 0.05);
}

#[test]
fn perfect_estimator_reproduces_truth_feedback() {
    for base in [SimConfig::pendulum_benchmark(), SimConfig::vdp_benchmark()] {
        let mut none = noise_free(base);
        none.estimator = EstimatorKind::None;
        let mut kf = none.clone();
        kf.estimator = EstimatorKind::SdreKf;
        let a = run_closed_loop(&none, 0).unwrap();
        let b = run_closed_loop(&kf, 0).unwrap();
        assert_eq!(a.u.len(), b.u.len());
        for (ua, ub) in a.u.iter().zip(&b.u) {
            assert!((ua - ub).amax() <= 1e-9);
        }
    }
}

#[test]
fn noise_free_estimates_are_exact() {
    for base in [SimConfig::pendulum_benchmark(), SimConfig::vdp_benchmark()] {
        for kind in EstimatorKind::ALL_FILTERS {
            let mut cfg = noise_free(base.clone());
            cfg.estimator = kind;
            cfg.n_runs = 2;
            if kind == EstimatorKind::Pf {
                // A noiseless particle cloud started on the truth, propagated
                // with the same integrator as the plant.
                cfg.noise.qd = Mat::zeros(2, 2);
                cfg.p0 = Mat::zeros(2, 2);
                cfg.pf_particles = 20;
                cfg.pf_propagation = PfPropagation::Rk4;
            }
            let out = monte_carlo(&cfg).unwrap();
            for mse in &out.metrics.mse {
                assert!(*mse < 1e-10, "{kind}: MSE {mse}");
            }
        }
    }
}

#[test]
fn metric_identity_holds_for_every_batch() {
    for base in [SimConfig::pendulum_benchmark(), SimConfig::vdp_benchmark()] {
        for kind in EstimatorKind::ALL_FILTERS {
            let cfg = SimConfig {
                estimator: kind,
                n_runs: 3,
                horizon: 3.0,
                pf_particles: 200,
                ..base.clone()
            };
            let m = monte_carlo(&cfg).unwrap().metrics;
            for i in 0..2 {
                assert!(m.mae[i] * m.mae[i] <= m.mse[i]);
            }
            for r in &m.per_run {
                for i in 0..2 {
                    assert!(r.mae[i] * r.mae[i] <= r.mse[i]);
                }
            }
        }
    }
}

#[test]
fn single_run_batch_equals_direct_run() {
    let cfg = SimConfig {
        estimator: EstimatorKind::Ekf,
        n_runs: 1,
        seed: 17,
        ..SimConfig::vdp_benchmark()
    };
    let direct = run_closed_loop(&cfg, 0).unwrap();
    let batch = monte_carlo(&cfg).unwrap();
    assert_eq!(batch.runs, vec![direct.clone()]);
    assert_eq!(
        batch.metrics,
        compute_metrics(EstimatorKind::Ekf, &[direct]).unwrap()
    );
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let cfg = SimConfig {
        estimator: EstimatorKind::Pf,
        n_runs: 6,
        horizon: 2.0,
        pf_particles: 100,
        seed: 99,
        ..SimConfig::pendulum_benchmark()
    };
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo(&cfg).unwrap())
    };
    let one = run_with(1);
    assert_eq!(one, run_with(4));
    assert_eq!(one, run_with(1));
}

#[test]
fn seeds_change_realizations() {
    let cfg = SimConfig {
        n_runs: 1,
        horizon: 1.0,
        ..SimConfig::pendulum_benchmark()
    };
    let a = run_closed_loop(&cfg, 0).unwrap();
    let b = run_closed_loop(
        &SimConfig {
            seed: 1,
            ..cfg.clone()
        },
        0,
    )
    .unwrap();
    let c = run_closed_loop(&cfg, 1).unwrap();
    assert_ne!(a.x_true, b.x_true);
    assert_ne!(a.x_true, c.x_true);
}

#[test]
fn truth_is_paired_across_estimators_without_feedback() {
    let mut reference = None;
    for kind in [
        EstimatorKind::SdreKf,
        EstimatorKind::Ekf,
        EstimatorKind::Pf,
        EstimatorKind::None,
    ] {
        let cfg = SimConfig {
            estimator: kind,
            control_source: ControlSource::Truth,
            horizon: 2.0,
            pf_particles: 100,
            seed: 5,
            ..SimConfig::vdp_benchmark()
        };
        let run = run_closed_loop(&cfg, 3).unwrap();
        match &reference {
            None => reference = Some(run.x_true),
            Some(x) => assert_eq!(&run.x_true, x, "{kind}"),
        }
    }
}

#[test]
fn kalman_covariances_stay_symmetric_psd() {
    for base in [SimConfig::pendulum_benchmark(), SimConfig::vdp_benchmark()] {
        for kind in [EstimatorKind::SdreKf, EstimatorKind::Ekf] {
            let cfg = SimConfig {
                estimator: kind,
                n_runs: 3,
                ..base.clone()
            };
            for run in monte_carlo(&cfg).unwrap().runs {
                assert!(run.diagnostics.max_cov_asymmetry <= 1e-10);
                assert!(run.diagnostics.min_cov_eigenvalue >= -1e-10);
            }
        }
    }
}

fn window_costs(run: &RunResult, cfg: &SimConfig) -> Vec<f64> {
    let x_ref = target(cfg);
    let per_window = (1.0 / cfg.dt).round() as usize;
    run.x_true
        .chunks(per_window)
        .map(|w| {
            w.iter()
                .map(|x| {
                    let e = x - &x_ref;
                    0.5 * (e.transpose() * &cfg.controller.qw * &e)[0] * cfg.dt
                })
                .sum()
        })
        .collect()
}

#[test]
fn noise_free_cost_decreases_until_settled() {
    for base in [SimConfig::pendulum_benchmark(), SimConfig::vdp_benchmark()] {
        let cfg = SimConfig {
            estimator: EstimatorKind::None,
            ..noise_free(base)
        };
        let run = run_closed_loop(&cfg, 0).unwrap();
        assert!(run.accumulated_cost.is_finite() && run.accumulated_cost >= 0.0);
        let costs = window_costs(&run, &cfg);
        for pair in costs.windows(2) {
            if pair[0] < 1e-8 {
                break;
            }
            assert!(pair[1] <= pair[0], "{costs:?}");
        }
    }
}

fn unstable_uncontrolled() -> SimConfig {
    let model = LinearModel::new(
        Mat::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 5.0]),
        Mat::zeros(2, 1),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    SimConfig {
        model: ModelSpec::Linear(model),
        estimator: EstimatorKind::None,
        x0: Vector::from_vec(vec![1.0, 1.0]),
        x0_hat: Vector::from_vec(vec![1.0, 1.0]),
        n_runs: 4,
        horizon: 5.0,
        ..SimConfig::pendulum_benchmark()
    }
}

#[test]
fn divergence_is_flagged_and_fails_the_batch() {
    let cfg = unstable_uncontrolled();
    let run = run_closed_loop(&cfg, 0).unwrap();
    let div = run.diverged.as_ref().expect("run should diverge");
    assert!(div.step < cfg.n_steps());
    assert_eq!(run.x_true.len(), div.step);
    assert!(run.flags.iter().all(|f| f.controllability_loss));
    assert!(matches!(
        monte_carlo(&cfg),
        Err(SimError::TooManyDiverged {
            diverged: 4,
            total: 4
        })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = SimConfig::pendulum_benchmark();
    let bad = [
        SimConfig {
            dt: 0.0,
            ..base.clone()
        },
        SimConfig {
            horizon: 0.001,
            ..base.clone()
        },
        SimConfig {
            n_runs: 0,
            ..base.clone()
        },
        SimConfig {
            estimator: EstimatorKind::Pf,
            pf_particles: 0,
            ..base.clone()
        },
        SimConfig {
            x0: Vector::zeros(3),
            ..base.clone()
        },
    ];
    for cfg in bad {
        assert!(run_closed_loop(&cfg, 0).is_err());
    }
}
