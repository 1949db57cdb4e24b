//! Trajectory CSVs, metric tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sdre::estimators::EstimatorKind;
use sdre::sim::{BatchMetrics, ModelSpec, RunResult, SimConfig};

use crate::config::emit_config;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Results of one estimator within an output bundle.
#[derive(Debug, Clone)]
pub struct EstimatorResults {
    pub kind: EstimatorKind,
    pub runs: Vec<RunResult>,
    /// `None` when the batch produced no usable metrics.
    pub metrics: Option<BatchMetrics>,
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputBundle {
    pub trajectories: Vec<PathBuf>,
    pub metrics_csv: PathBuf,
    pub metrics_md: PathBuf,
    pub manifest: PathBuf,
}

/// Row labels for the metric tables.
pub fn state_labels(model: &ModelSpec, n: usize) -> Vec<String> {
    match model {
        ModelSpec::Pendulum(_) => vec!["theta".into(), "theta_dot".into()],
        _ => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize, p: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_true_{i}")));
    cols.extend((1..=n).map(|i| format!("x_hat_{i}")));
    cols.extend((1..=p).map(|i| format!("y_{i}")));
    cols.extend((1..=m).map(|i| format!("u_{i}")));
    cols.join(",")
}

/// One row per recorded step, floats with 17 significant digits.
pub fn trajectory_csv(run: &RunResult, n: usize, p: usize, m: usize) -> String {
    let mut s = trajectory_header(n, p, m);
    s.push('\n');
    for k in 0..run.times.len() {
        let mut row = vec![fmt_num(run.times[k])];
        row.extend(run.x_true[k].iter().map(|v| fmt_num(*v)));
        row.extend(run.x_hat[k].iter().map(|v| fmt_num(*v)));
        row.extend(run.y[k].iter().map(|v| fmt_num(*v)));
        row.extend(run.u[k].iter().map(|v| fmt_num(*v)));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Long-format metrics: one line per estimator and state.
pub fn metrics_csv(results: &[EstimatorResults], labels: &[String]) -> String {
    let mut s = String::from("estimator,state,mse,mae,n_runs,excluded\n");
    for r in results {
        let Some(m) = &r.metrics else { continue };
        for (i, label) in labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.kind,
                label,
                fmt_num(m.mse[i]),
                fmt_num(m.mae[i]),
                m.n_runs,
                m.excluded.len()
            );
        }
    }
    s
}

fn table(
    title: &str,
    results: &[&EstimatorResults],
    labels: &[String],
    pick: impl Fn(&BatchMetrics) -> &[f64],
) -> String {
    let mut header = vec![title.to_string()];
    header.extend(results.iter().map(|r| r.kind.label().to_string()));
    let mut rows = vec![header];
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        for r in results {
            row.push(match &r.metrics {
                Some(m) => format!("{:.5}", pick(m)[i]),
                None => "-".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut s = line(&rows[0]);
    let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    s.push_str(&format!("|-{}-|\n", dashes.join("-|-")));
    for r in &rows[1..] {
        s.push_str(&line(r));
    }
    s
}

/// Aligned markdown tables (MSE then MAE): rows are states, columns are
/// estimators.
pub fn metrics_markdown(results: &[EstimatorResults], labels: &[String]) -> String {
    let with: Vec<&EstimatorResults> = results.iter().collect();
    let mut s = table("MSE", &with, labels, |m| &m.mse);
    s.push('\n');
    s.push_str(&table("MAE", &with, labels, |m| &m.mae));
    s
}

/// Manifest: the full config followed by provenance keys.
pub fn manifest(cfg: &SimConfig, command: &str, results: &[EstimatorResults]) -> String {
    let kinds: Vec<EstimatorKind> = results.iter().map(|r| r.kind).collect();
    let mut extra = vec![
        (
            "artifact.version".to_string(),
            format!("\"{ARTIFACT_VERSION}\""),
        ),
        ("artifact.command".to_string(), format!("\"{command}\"")),
    ];
    let diverged: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.runs.iter().filter_map(move |run| {
                run.diverged
                    .as_ref()
                    .map(|d| format!("\"{} run {} step {}\"", r.kind, run.run_index, d.step))
            })
        })
        .collect();
    extra.push((
        "artifact.diverged".into(),
        format!("[{}]", diverged.join(", ")),
    ));
    let list = (command == "compare").then_some(kinds.as_slice());
    emit_config(cfg, list, &extra)
}

pub fn trajectory_name(kind: EstimatorKind, run_index: usize) -> String {
    format!("traj_{kind}_run{run_index:03}.csv")
}

/// Writes every file of a bundle into `dir`, creating it if needed.
pub fn emit_outputs(
    dir: &Path,
    cfg: &SimConfig,
    command: &str,
    results: &[EstimatorResults],
) -> io::Result<OutputBundle> {
    fs::create_dir_all(dir)?;
    let model = cfg
        .model
        .build()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let (n, p, m) = (model.n_states(), model.n_outputs(), model.n_inputs());
    let labels = state_labels(&cfg.model, n);

    let mut trajectories = Vec::new();
    for r in results {
        for run in &r.runs {
            let path = dir.join(trajectory_name(r.kind, run.run_index));
            fs::write(&path, trajectory_csv(run, n, p, m))?;
            trajectories.push(path);
        }
    }
    let bundle = OutputBundle {
        trajectories,
        metrics_csv: dir.join("metrics.csv"),
        metrics_md: dir.join("metrics.md"),
        manifest: dir.join("manifest.txt"),
    };
    fs::write(&bundle.metrics_csv, metrics_csv(results, &labels))?;
    fs::write(&bundle.metrics_md, metrics_markdown(results, &labels))?;
    fs::write(&bundle.manifest, manifest(cfg, command, results))?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sdre::numerics::Vector;

    #[test]
    fn header_layout() {
        assert_eq!(
            trajectory_header(2, 1, 1),
            "t,x_true_1,x_true_2,x_hat_1,x_hat_2,y_1,u_1"
        );
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, std::f64::consts::PI + 0.5, -1.0 / 3.0, 1e-300, 6.02e23] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_rows_follow_the_run() {
        let mut run = RunResult::empty(0);
        run.times = vec![0.0, 0.01];
        run.x_true = vec![Vector::from_vec(vec![1.0, 2.0]); 2];
        run.x_hat = vec![Vector::from_vec(vec![1.5, 2.5]); 2];
        run.y = vec![Vector::from_vec(vec![1.1]); 2];
        run.u = vec![Vector::from_vec(vec![-0.5]); 2];
        let csv = trajectory_csv(&run, 2, 1, 1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].split(',').count(), 7);
        assert!(lines[2].starts_with("1.0000000000000000e-2,"));
    }

    #[test]
    fn empty_batch_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig::pendulum_benchmark();
        let results = [EstimatorResults {
            kind: EstimatorKind::SdreKf,
            runs: vec![],
            metrics: None,
        }];
        let b = emit_outputs(dir.path(), &cfg, "batch", &results).unwrap();
        assert_eq!(
            fs::read_to_string(&b.metrics_csv).unwrap(),
            "estimator,state,mse,mae,n_runs,excluded\n"
        );
        assert!(b.trajectories.is_empty());
        assert!(b.manifest.exists());
    }

    #[test]
    fn markdown_is_aligned() {
        let m = BatchMetrics {
            estimator: EstimatorKind::Ekf,
            n_runs: 1,
            mse: vec![0.00051, 0.00257],
            mae: vec![0.01786, 0.03991],
            per_run: vec![],
            excluded: vec![],
        };
        let results = [EstimatorResults {
            kind: EstimatorKind::Ekf,
            runs: vec![],
            metrics: Some(m),
        }];
        let md = metrics_markdown(
            &results,
            &state_labels(&ModelSpec::by_name("pendulum").unwrap(), 2),
        );
        let first: Vec<&str> = md.lines().take(4).collect();
        assert_eq!(first[0], "| MSE       | EKF     |");
        assert_eq!(first[2], "| theta     | 0.00051 |");
        assert!(first.iter().all(|l| l.len() == first[0].len()));
    }
}
