//! Invariant checks over short batches of both benchmark presets.

use sdre::estimators::EstimatorKind;
use sdre::sim::{monte_carlo, BatchOutcome, RunResult, SimConfig, SimError};

use crate::config::ExperimentPreset;

const COV_TOL: f64 = 1e-9;
const WEIGHT_TOL: f64 = 1e-12;
const FACTOR_TOL: f64 = 1e-10;

/// Outcome of one preset/estimator batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub preset: ExperimentPreset,
    pub estimator: EstimatorKind,
    pub runs: usize,
    pub checks: usize,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub cases: Vec<CaseReport>,
}

impl SelftestReport {
    pub fn violations(&self) -> usize {
        self.cases.iter().map(|c| c.violations.len()).sum()
    }

    pub fn checks(&self) -> usize {
        self.cases.iter().map(|c| c.checks).sum()
    }
}

struct Tally {
    checks: usize,
    violations: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(what());
        }
    }
}

fn check_run(cfg: &SimConfig, run: &RunResult, t: &mut Tally) -> Result<(), SimError> {
    let model = cfg.model.build()?;
    let x_ref = model.equilibrium();
    let r = run.run_index;
    let len = run.times.len();
    t.check(
        [run.x_true.len(), run.x_hat.len(), run.y.len(), run.u.len()]
            .iter()
            .all(|&l| l == len),
        || format!("run {r}: sequence lengths differ"),
    );
    if run.diverged.is_none() {
        t.check(len == cfg.n_steps() + 1, || {
            format!("run {r}: {len} samples")
        });
    }
    let finite = run
        .x_true
        .iter()
        .chain(&run.x_hat)
        .chain(&run.y)
        .chain(&run.u)
        .all(|v| v.iter().all(|x| x.is_finite()));
    t.check(finite || run.diverged.is_some(), || {
        format!("run {r}: non-finite output without a divergence flag")
    });

    let d = &run.diagnostics;
    if matches!(cfg.estimator, EstimatorKind::SdreKf | EstimatorKind::Ekf) {
        t.check(d.max_cov_asymmetry <= COV_TOL, || {
            format!("run {r}: covariance asymmetry {:e}", d.max_cov_asymmetry)
        });
        t.check(d.min_cov_eigenvalue >= -COV_TOL, || {
            format!("run {r}: covariance eigenvalue {:e}", d.min_cov_eigenvalue)
        });
    }
    if cfg.estimator == EstimatorKind::Pf {
        t.check(d.max_weight_sum_error <= WEIGHT_TOL, || {
            format!("run {r}: weight sum off by {:e}", d.max_weight_sum_error)
        });
    }

    for (k, (x, u)) in run.x_true.iter().zip(&run.u).enumerate() {
        let f = model.dynamics(x, u);
        let sdc = model.error_drift(&(x - &x_ref), u);
        let err = (&sdc - &f).amax();
        t.check(err <= FACTOR_TOL * (1.0 + f.amax()), || {
            format!("run {r} step {k}: factorization mismatch {err:e}")
        });
    }
    Ok(())
}

fn check_metrics(out: &BatchOutcome, t: &mut Tally) {
    let m = &out.metrics;
    let jensen = |mse: &[f64], mae: &[f64]| {
        mse.iter()
            .zip(mae)
            .all(|(s, a)| *s >= 0.0 && *a >= 0.0 && a * a <= s * (1.0 + 1e-12))
    };
    t.check(jensen(&m.mse, &m.mae), || {
        format!("pooled MAE² > MSE: {:?} vs {:?}", m.mae, m.mse)
    });
    for r in &m.per_run {
        t.check(jensen(&r.mse, &r.mae), || {
            format!("run {}: MAE² > MSE", r.run_index)
        });
    }
}

/// Runs every filter on both presets with `runs` runs each.
pub fn selftest(runs: usize, seed: u64) -> Result<SelftestReport, SimError> {
    let mut report = SelftestReport::default();
    for preset in ExperimentPreset::ALL {
        for estimator in EstimatorKind::ALL_FILTERS {
            let cfg = SimConfig {
                estimator,
                n_runs: runs,
                seed,
                ..preset.expand()
            };
            let out = monte_carlo(&cfg)?;
            let mut t = Tally {
                checks: 0,
                violations: Vec::new(),
            };
            for run in &out.runs {
                check_run(&cfg, run, &mut t)?;
            }
            check_metrics(&out, &mut t);
            report.cases.push(CaseReport {
                preset,
                estimator,
                runs,
                checks: t.checks,
                violations: t.violations,
            });
        }
    }
    Ok(report)
}
