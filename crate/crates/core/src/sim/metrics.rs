use super::{RunResult, SimError};
use crate::estimators::EstimatorKind;

/// Per-state squared and absolute estimation error for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_index: usize,
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    pub estimator: EstimatorKind,
    /// Runs that entered the pooled statistics.
    pub n_runs: usize,
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
    pub per_run: Vec<RunMetrics>,
    /// Indices of diverged runs left out of the pooled statistics.
    pub excluded: Vec<usize>,
}

fn run_sums(run: &RunResult) -> Result<(Vec<f64>, Vec<f64>, usize), SimError> {
    let n = run.x_true.first().map_or(0, |x| x.len());
    if run.x_true.len() != run.x_hat.len() {
        return Err(SimError::ShapeMismatch(format!(
            "run {}: {} true samples vs {} estimates",
            run.run_index,
            run.x_true.len(),
            run.x_hat.len()
        )));
    }
    let mut sq = vec![0.0; n];
    let mut abs = vec![0.0; n];
    for (x, xh) in run.x_true.iter().zip(&run.x_hat) {
        if x.len() != n || xh.len() != n {
            return Err(SimError::ShapeMismatch(format!(
                "run {}: state dimension changes mid-run",
                run.run_index
            )));
        }
        for i in 0..n {
            let d = x[i] - xh[i];
            sq[i] += d * d;
            abs[i] += d.abs();
        }
    }
    Ok((sq, abs, run.x_true.len()))
}

/// Pools squared and absolute errors over every sample of every run.
pub fn compute_metrics(
    estimator: EstimatorKind,
    runs: &[RunResult],
) -> Result<BatchMetrics, SimError> {
    if runs.is_empty() {
        return Err(SimError::NoRuns);
    }
    let n = runs[0].x_true.first().map_or(0, |x| x.len());
    let mut sq = vec![0.0; n];
    let mut abs = vec![0.0; n];
    let mut count = 0usize;
    let mut per_run = Vec::with_capacity(runs.len());
    for run in runs {
        let (rs, ra, len) = run_sums(run)?;
        if rs.len() != n {
            return Err(SimError::ShapeMismatch(format!(
                "run {} has {} states, expected {n}",
                run.run_index,
                rs.len()
            )));
        }
        let denom = len.max(1) as f64;
        per_run.push(RunMetrics {
            run_index: run.run_index,
            mse: rs.iter().map(|s| s / denom).collect(),
            mae: ra.iter().map(|s| s / denom).collect(),
        });
        for i in 0..n {
            sq[i] += rs[i];
            abs[i] += ra[i];
        }
        count += len;
    }
    let denom = count.max(1) as f64;
    Ok(BatchMetrics {
        estimator,
        n_runs: runs.len(),
        mse: sq.iter().map(|s| s / denom).collect(),
        mae: abs.iter().map(|s| s / denom).collect(),
        per_run,
        excluded: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Vector;

    fn run_with_error(err: f64, steps: usize) -> RunResult {
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let xh = Vector::from_vec(vec![1.0 + err, 2.0]);
        RunResult {
            x_true: vec![x; steps],
            x_hat: vec![xh; steps],
            ..RunResult::empty(0)
        }
    }

    #[test]
    fn perfect_estimate_has_zero_error() {
        let m = compute_metrics(EstimatorKind::Ekf, &[run_with_error(0.0, 10)]).unwrap();
        assert_eq!(m.mse, vec![0.0, 0.0]);
        assert_eq!(m.mae, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_error() {
        let m = compute_metrics(EstimatorKind::Ekf, &[run_with_error(0.1, 7)]).unwrap();
        assert!((m.mse[0] - 0.01).abs() < 1e-15);
        assert!((m.mae[0] - 0.1).abs() < 1e-15);
        assert_eq!(m.mse[1], 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            compute_metrics(EstimatorKind::Pf, &[]),
            Err(SimError::NoRuns)
        ));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut run = run_with_error(0.1, 5);
        run.x_hat.pop();
        assert!(matches!(
            compute_metrics(EstimatorKind::Pf, &[run]),
            Err(SimError::ShapeMismatch(_))
        ));
    }
}
