//! Evaluation protocol: per-initializer mean initial loss and mean
//! convergence steps over a test set, comparison rows, and report files.

use crate::dataset::DatasetRecord;
use crate::ddpm::{linear_schedule, sample_parameters, TrainedModel};
use crate::encoding::{decode_grid, denormalize_grid};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, uniform_angle};
use crate::tasks::{build_task, TaskFamily};
use crate::vqe::{optimize, OptimizerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const METRICS_SCHEMA_VERSION: &str = "diffq-metrics-v1";

/// Where initial parameters come from.
pub enum Initializer<'a> {
    /// Uniform angles in [-pi, pi); per-instance streams derived from `seed`.
    Random { seed: u64 },
    /// One diffusion sample per instance, decoded to angles.
    Model { model: &'a TrainedModel, seed: u64 },
    /// The optimized parameters stored in each record (diagnostic upper bound).
    StoredOptimum,
}

impl Initializer<'_> {
    pub fn scheme_name(&self) -> &'static str {
        match self {
            Initializer::Random { .. } => "random",
            Initializer::Model { .. } => "diffq",
            Initializer::StoredOptimum => "stored_optimum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub schema_version: String,
    pub scheme: String,
    pub family: TaskFamily,
    pub instance_ids: Vec<u64>,
    pub initial_losses: Vec<f64>,
    /// Full loss sequences, one per instance (length max_steps + 1).
    pub trajectories: Vec<Vec<f64>>,
    pub converged_steps: Vec<Option<usize>>,
    pub mean_initial_loss: f64,
    /// Non-converged runs are counted at max_steps.
    pub mean_convergence_steps: f64,
    pub max_steps: usize,
}

/// One comparison row (scheme a = baseline, scheme b = candidate); positive
/// deltas mean the candidate improved on the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: TaskFamily,
    pub scheme_a: String,
    pub scheme_b: String,
    pub a_mean_initial_loss: f64,
    pub a_mean_convergence_steps: f64,
    pub b_mean_initial_loss: f64,
    pub b_mean_convergence_steps: f64,
    /// a - b (reduction in initial loss).
    pub delta_initial_loss: f64,
    /// 100 * (a - b) / a (percentage reduction in convergence steps).
    pub delta_steps_pct: f64,
}

/// Rebuilds each test task, draws the scheme's initial parameters, records
/// the initial loss, runs the optimizer, and aggregates. Instances evaluate
/// in parallel and aggregate in id order.
pub fn evaluate_initializer(
    records: &[&DatasetRecord],
    init: &Initializer,
    cfg: &OptimizerConfig,
) -> Result<EvalMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    cfg.validate()?;
    let family = records[0].family;
    for r in records {
        if r.family != family {
            return Err(Error::FamilyMismatch {
                expected: family.to_string(),
                got: r.family.to_string(),
            });
        }
    }
    if let Initializer::Model { model, .. } = init {
        if model.family != family {
            return Err(Error::FamilyMismatch {
                expected: family.to_string(),
                got: model.family.to_string(),
            });
        }
    }

    let per_instance: Vec<(u64, crate::vqe::Trajectory)> = records
        .par_iter()
        .map(|rec| {
            let task = build_task(rec.family, &rec.params, rec.seed)?;
            let theta_init: Vec<f64> = match init {
                Initializer::Random { seed } => {
                    let mut rng = rng_from_seed(derive_seed(*seed, rec.id));
                    (0..task.layout.n_params)
                        .map(|_| uniform_angle(&mut rng))
                        .collect()
                }
                Initializer::Model { model, seed } => {
                    let mut rng = rng_from_seed(derive_seed(*seed, rec.id));
                    let sched = linear_schedule(&model.diffusion)?;
                    let grid = sample_parameters(
                        &model.params,
                        &task.layout,
                        &rec.conditioning,
                        &sched,
                        model.diffusion.guidance_scale,
                        &mut rng,
                    )?;
                    decode_grid(&task.layout, &denormalize_grid(&grid)?)?
                }
                Initializer::StoredOptimum => rec.theta_opt.clone(),
            };
            let traj = optimize(&task, &theta_init, cfg)?;
            if !traj.losses[0].is_finite() {
                return Err(Error::NonFiniteLoss { step: 0 });
            }
            Ok((rec.id, traj))
        })
        .collect::<Result<Vec<_>>>()?;

    let instance_ids: Vec<u64> = per_instance.iter().map(|(id, _)| *id).collect();
    let initial_losses: Vec<f64> = per_instance.iter().map(|(_, t)| t.losses[0]).collect();
    let trajectories: Vec<Vec<f64>> = per_instance.iter().map(|(_, t)| t.losses.clone()).collect();
    let converged_steps: Vec<Option<usize>> =
        per_instance.iter().map(|(_, t)| t.converged_step).collect();
    let n = records.len() as f64;
    let mean_initial_loss = initial_losses.iter().sum::<f64>() / n;
    let mean_convergence_steps = converged_steps
        .iter()
        .map(|s| s.unwrap_or(cfg.max_steps) as f64)
        .sum::<f64>()
        / n;
    Ok(EvalMetrics {
        schema_version: METRICS_SCHEMA_VERSION.to_string(),
        scheme: init.scheme_name().to_string(),
        family,
        instance_ids,
        initial_losses,
        trajectories,
        converged_steps,
        mean_initial_loss,
        mean_convergence_steps,
        max_steps: cfg.max_steps,
    })
}

/// Delta fields as baseline minus candidate (positive = candidate improved).
pub fn compare_schemes(a: &EvalMetrics, b: &EvalMetrics) -> Result<ComparisonRow> {
    if a.family != b.family {
        return Err(Error::FamilyMismatch {
            expected: a.family.to_string(),
            got: b.family.to_string(),
        });
    }
    if a.instance_ids != b.instance_ids {
        return Err(Error::InstanceSetMismatch);
    }
    Ok(ComparisonRow {
        family: a.family,
        scheme_a: a.scheme.clone(),
        scheme_b: b.scheme.clone(),
        a_mean_initial_loss: a.mean_initial_loss,
        a_mean_convergence_steps: a.mean_convergence_steps,
        b_mean_initial_loss: b.mean_initial_loss,
        b_mean_convergence_steps: b.mean_convergence_steps,
        delta_initial_loss: a.mean_initial_loss - b.mean_initial_loss,
        delta_steps_pct: 100.0 * (a.mean_convergence_steps - b.mean_convergence_steps)
            / a.mean_convergence_steps,
    })
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

const COMPARISON_HEADER: &str = "family,scheme_a,scheme_b,a_mean_initial_loss,a_mean_convergence_steps,b_mean_initial_loss,b_mean_convergence_steps,delta_initial_loss,delta_steps_pct";

/// Comma-separated comparison table; floats render in shortest round-trip
/// form so parsing reproduces the values exactly.
pub fn emit_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.family,
            r.scheme_a,
            r.scheme_b,
            r.a_mean_initial_loss,
            r.a_mean_convergence_steps,
            r.b_mean_initial_loss,
            r.b_mean_convergence_steps,
            r.delta_initial_loss,
            r.delta_steps_pct
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn parse_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != COMPARISON_HEADER {
        return Err(Error::RecordInvalid {
            line: 1,
            reason: "unexpected comparison header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::RecordInvalid {
                line: i + 2,
                reason: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, line: usize| -> Result<f64> {
            s.parse().map_err(|_| Error::RecordInvalid {
                line,
                reason: format!("bad float '{s}'"),
            })
        };
        rows.push(ComparisonRow {
            family: TaskFamily::parse(fields[0])?,
            scheme_a: fields[1].to_string(),
            scheme_b: fields[2].to_string(),
            a_mean_initial_loss: parse_f(fields[3], i + 2)?,
            a_mean_convergence_steps: parse_f(fields[4], i + 2)?,
            b_mean_initial_loss: parse_f(fields[5], i + 2)?,
            b_mean_convergence_steps: parse_f(fields[6], i + 2)?,
            delta_initial_loss: parse_f(fields[7], i + 2)?,
            delta_steps_pct: parse_f(fields[8], i + 2)?,
        });
    }
    Ok(rows)
}

/// Per-instance initial losses (histogram data).
pub fn emit_init_losses_csv(metrics: &EvalMetrics, path: &Path) -> Result<()> {
    let mut out = String::from("instance_id,initial_loss\n");
    for (id, loss) in metrics.instance_ids.iter().zip(&metrics.initial_losses) {
        out.push_str(&format!("{id},{loss}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Pointwise mean/min/max loss-curve data: one row per step, max_steps + 1
/// rows in total.
pub fn emit_loss_curve_csv(metrics: &EvalMetrics, path: &Path) -> Result<()> {
    let mut out = String::from("step,mean,min,max\n");
    let steps = metrics.max_steps + 1;
    for s in 0..steps {
        let column: Vec<f64> = metrics.trajectories.iter().map(|t| t[s]).collect();
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("{s},{mean},{lo},{hi}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the full report bundle for one baseline/candidate pair.
pub fn emit_report(
    row: &ComparisonRow,
    a: &EvalMetrics,
    b: &EvalMetrics,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    emit_comparison_csv(std::slice::from_ref(row), &out_dir.join("comparison.csv"))?;
    for m in [a, b] {
        emit_init_losses_csv(m, &out_dir.join(format!("init_losses_{}.csv", m.scheme)))?;
        emit_loss_curve_csv(m, &out_dir.join(format!("loss_curve_{}.csv", m.scheme)))?;
    }
    Ok(())
}

pub fn save_metrics(metrics: &EvalMetrics, path: &Path) -> Result<()> {
    let text = serde_json::to_string(metrics).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_metrics(path: &Path) -> Result<EvalMetrics> {
    let text = fs::read_to_string(path)?;
    let metrics: EvalMetrics = serde_json::from_str(&text).map_err(|e| Error::RecordInvalid {
        line: 1,
        reason: format!("bad metrics file: {e}"),
    })?;
    if metrics.schema_version != METRICS_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: metrics.schema_version,
            supported: METRICS_SCHEMA_VERSION.to_string(),
        });
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_dataset;

    fn quick_cfg(max_steps: usize) -> OptimizerConfig {
        OptimizerConfig {
            max_steps,
            window: 5,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let records: Vec<&DatasetRecord> = vec![];
        assert!(matches!(
            evaluate_initializer(&records, &Initializer::Random { seed: 1 }, &quick_cfg(10)),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn stored_optimum_of_flat_task_converges_at_window() {
        // XYZ(0,0,0): zero gradient everywhere, constant trajectory
        let cfg = quick_cfg(20);
        let rec = crate::dataset::generate_instance(TaskFamily::Xyz1d, &[0.0, 0.0, 0.0], 3, &cfg)
            .unwrap();
        let refs = vec![&rec];
        let m = evaluate_initializer(&refs, &Initializer::StoredOptimum, &cfg).unwrap();
        assert_eq!(m.converged_steps[0], Some(cfg.window));
        assert_eq!(m.mean_convergence_steps, cfg.window as f64);
        assert_eq!(m.initial_losses[0], 0.0);
    }

    #[test]
    fn initial_loss_equals_trajectory_head_exactly() {
        let cfg = quick_cfg(15);
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 4, 11, &cfg).unwrap();
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let m = evaluate_initializer(&refs, &Initializer::Random { seed: 5 }, &cfg).unwrap();
        for (init, traj) in m.initial_losses.iter().zip(&m.trajectories) {
            assert_eq!(*init, traj[0]);
            assert_eq!(traj.len(), cfg.max_steps + 1);
        }
        // fixed seeds fix every number bit-exactly
        let m2 = evaluate_initializer(&refs, &Initializer::Random { seed: 5 }, &cfg).unwrap();
        assert_eq!(m, m2);
        let means: f64 = m.initial_losses.iter().sum::<f64>() / 4.0;
        assert!((m.mean_initial_loss - means).abs() < 1e-12);
    }

    #[test]
    fn family_mixing_is_rejected() {
        let cfg = quick_cfg(10);
        let (a, _) = generate_dataset(TaskFamily::Xyz1d, 2, 1, &cfg).unwrap();
        let (b, _) = generate_dataset(TaskFamily::Fh1d, 1, 1, &cfg).unwrap();
        let refs: Vec<&DatasetRecord> = a.iter().chain(b.iter()).collect();
        assert!(matches!(
            evaluate_initializer(&refs, &Initializer::Random { seed: 0 }, &cfg),
            Err(Error::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn comparison_of_identical_metrics_is_zero() {
        let cfg = quick_cfg(10);
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 3, 9, &cfg).unwrap();
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let m = evaluate_initializer(&refs, &Initializer::Random { seed: 2 }, &cfg).unwrap();
        let row = compare_schemes(&m, &m).unwrap();
        assert_eq!(row.delta_initial_loss, 0.0);
        assert_eq!(row.delta_steps_pct, 0.0);
    }

    #[test]
    fn comparison_matches_reference_deltas() {
        // reference numbers: steps 235.93 -> 180.83 is a 23.4% reduction;
        // initial loss -3.23 -> -12.18 is an 8.95 reduction
        let base = EvalMetrics {
            schema_version: METRICS_SCHEMA_VERSION.to_string(),
            scheme: "random".into(),
            family: TaskFamily::Tfi2d,
            instance_ids: vec![0],
            initial_losses: vec![-3.23],
            trajectories: vec![vec![-3.23]],
            converged_steps: vec![None],
            mean_initial_loss: -3.23,
            mean_convergence_steps: 235.93,
            max_steps: 500,
        };
        let cand = EvalMetrics {
            scheme: "diffq".into(),
            initial_losses: vec![-12.18],
            trajectories: vec![vec![-12.18]],
            mean_initial_loss: -12.18,
            mean_convergence_steps: 180.83,
            ..base.clone()
        };
        let row = compare_schemes(&base, &cand).unwrap();
        assert!((row.delta_initial_loss - 8.95).abs() < 1e-12);
        assert!(((row.delta_steps_pct * 10.0).round() / 10.0 - 23.4).abs() < 1e-12);
    }

    #[test]
    fn mismatched_instance_sets_are_rejected() {
        let cfg = quick_cfg(10);
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 4, 9, &cfg).unwrap();
        let refs_a: Vec<&DatasetRecord> = records.iter().take(3).collect();
        let refs_b: Vec<&DatasetRecord> = records.iter().skip(1).collect();
        let a = evaluate_initializer(&refs_a, &Initializer::Random { seed: 2 }, &cfg).unwrap();
        let b = evaluate_initializer(&refs_b, &Initializer::Random { seed: 2 }, &cfg).unwrap();
        assert!(matches!(
            compare_schemes(&a, &b),
            Err(Error::InstanceSetMismatch)
        ));
    }

    #[test]
    fn report_round_trip_and_curve_shape() {
        let cfg = quick_cfg(12);
        let (records, _) = generate_dataset(TaskFamily::Fh1d, 3, 4, &cfg).unwrap();
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let a = evaluate_initializer(&refs, &Initializer::Random { seed: 1 }, &cfg).unwrap();
        let b = evaluate_initializer(&refs, &Initializer::StoredOptimum, &cfg).unwrap();
        let row = compare_schemes(&a, &b).unwrap();
        let dir = std::env::temp_dir().join("diffq-eval-tests");
        emit_report(&row, &a, &b, &dir).unwrap();

        let parsed = parse_comparison_csv(&dir.join("comparison.csv")).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], row);

        let curve = fs::read_to_string(dir.join("loss_curve_random.csv")).unwrap();
        let lines: Vec<&str> = curve.lines().collect();
        assert_eq!(lines.len(), 1 + cfg.max_steps + 1);
        for line in &lines[1..] {
            let f: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
            let (mean, lo, hi) = (f[0], f[1], f[2]);
            assert!(lo <= mean && mean <= hi);
        }

        let metrics_path = dir.join("metrics_random.json");
        save_metrics(&a, &metrics_path).unwrap();
        assert_eq!(load_metrics(&metrics_path).unwrap(), a);
    }

    #[test]
    fn evaluation_does_not_mutate_records() {
        let cfg = quick_cfg(10);
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 2, 3, &cfg).unwrap();
        let before = records.clone();
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let _ = evaluate_initializer(&refs, &Initializer::Random { seed: 2 }, &cfg).unwrap();
        assert_eq!(records, before);
    }
}
