//! Dataset generation, persistence, and splitting: corpora of
//! (task, optimized parameters, prompt, conditioning) records.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, uniform_angle};
use crate::tasks::{
    build_task, conditioning_features, task_loss, TaskFamily, CONDITIONING_LEN,
};
use crate::vqe::{optimize, OptimizerConfig};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const RECORD_SCHEMA_VERSION: &str = "diffq-records-v1";
pub const SPLIT_SCHEMA_VERSION: &str = "diffq-split-v1";

/// Stream tag separating the theta0 draw from the task-structure draw.
const THETA0_STREAM: u64 = 0xD1FF_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub family: TaskFamily,
    pub params: Vec<f64>,
    pub seed: u64,
    pub prompt: String,
    pub conditioning: Vec<f64>,
    pub theta_opt: Vec<f64>,
    pub final_loss: f64,
    pub converged_step: Option<usize>,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub family: TaskFamily,
    pub count: usize,
    pub master_seed: u64,
    pub optimizer: OptimizerConfig,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub schema_version: String,
    pub split_seed: u64,
    pub ratio: f64,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

/// Paper-scale instance counts per family.
pub fn paper_scale_count(family: TaskFamily) -> usize {
    match family {
        TaskFamily::Xyz1d => 2000,
        TaskFamily::Fh1d => 1000,
        TaskFamily::Tfi2d => 1000,
        TaskFamily::QPulse => 8285,
        TaskFamily::RandomVqe => 2800,
    }
}

/// Desk-scale preset used by the acceptance pipeline.
pub const DESK_SCALE_COUNT: usize = 200;

pub use crate::tasks::sample_task_params;

/// Builds the task, draws theta0 ~ U[-pi, pi)^n from the seed, optimizes,
/// and records the outcome. Pure function of its arguments.
pub fn generate_instance(
    family: TaskFamily,
    params: &[f64],
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<DatasetRecord> {
    let task = build_task(family, params, seed)?;
    let mut theta_rng = rng_from_seed(derive_seed(seed, THETA0_STREAM));
    let theta0: Vec<f64> = (0..task.layout.n_params)
        .map(|_| uniform_angle(&mut theta_rng))
        .collect();
    let traj = optimize(&task, &theta0, cfg)?;
    let conditioning = conditioning_features(&task)?;
    Ok(DatasetRecord {
        id: 0,
        family,
        params: params.to_vec(),
        seed,
        prompt: task.prompt.clone(),
        conditioning: conditioning.to_vec(),
        final_loss: *traj.losses.last().expect("non-empty losses"),
        theta_opt: traj.final_theta,
        converged_step: traj.converged_step,
        generator_version: crate::GENERATOR_VERSION.to_string(),
    })
}

/// Generates `n` records with per-instance seeds derived from the master
/// seed by counter. Instances are produced in parallel but collected in id
/// order, so the output is independent of the worker count.
pub fn generate_dataset(
    family: TaskFamily,
    n: usize,
    master_seed: u64,
    cfg: &OptimizerConfig,
) -> Result<(Vec<DatasetRecord>, DatasetManifest)> {
    if n < 1 {
        return Err(Error::TooFewRecords { got: n, needed: 1 });
    }
    let mut records = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let mut rng = rng_from_seed(seed);
            let params = sample_task_params(family, &mut rng);
            let mut rec = generate_instance(family, &params, seed, cfg)?;
            rec.id = i as u64;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.id);
    let manifest = DatasetManifest {
        schema_version: RECORD_SCHEMA_VERSION.to_string(),
        family,
        count: n,
        master_seed,
        optimizer: cfg.clone(),
        generator_version: crate::GENERATOR_VERSION.to_string(),
    };
    Ok((records, manifest))
}

/// Uniform shuffle by seed; floor(ratio * n) records go to the train side
/// (at least one on each side).
pub fn split_dataset(records: &[DatasetRecord], ratio: f64, seed: u64) -> Result<SplitManifest> {
    if records.len() < 2 {
        return Err(Error::TooFewRecords {
            got: records.len(),
            needed: 2,
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
    let mut rng = rng_from_seed(seed);
    // Fisher-Yates, pinned here so the shuffle never changes under
    // dependency upgrades
    for i in (1..ids.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        ids.swap(i, j);
    }
    let n_train = ((ratio * records.len() as f64).floor() as usize)
        .clamp(1, records.len() - 1);
    let (train, test) = ids.split_at(n_train);
    Ok(SplitManifest {
        schema_version: SPLIT_SCHEMA_VERSION.to_string(),
        split_seed: seed,
        ratio,
        train_ids: train.to_vec(),
        test_ids: test.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Persistence: header line, one JSON record per line, checksum footer.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    schema_version: String,
    family: TaskFamily,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileFooter {
    checksum: String,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Writes records as line-delimited JSON with a schema header and a
/// checksum footer.
pub fn persist_records(records: &[DatasetRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::TooFewRecords { got: 0, needed: 1 });
    }
    let header = FileHeader {
        schema_version: RECORD_SCHEMA_VERSION.to_string(),
        family: records[0].family,
        count: records.len(),
    };
    let mut body = String::new();
    for rec in records {
        body.push_str(&serde_json::to_string(rec).map_err(|e| Error::Io(e.to_string()))?);
        body.push('\n');
    }
    let footer = FileFooter {
        checksum: format!("fnv1a:{:016x}", fnv1a64(body.as_bytes())),
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?);
    out.push('\n');
    out.push_str(&body);
    out.push_str(&serde_json::to_string(&footer).map_err(|e| Error::Io(e.to_string()))?);
    out.push('\n');
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads records, verifying the schema version, the checksum, per-record
/// structural invariants, and that the stored final loss matches a
/// recomputation within 1e-9.
pub fn load_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::RecordInvalid { line: 1, reason: "empty file".into() })??;
    let header: FileHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::RecordInvalid {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
    if header.schema_version != RECORD_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: header.schema_version,
            supported: RECORD_SCHEMA_VERSION.to_string(),
        });
    }
    let mut records = Vec::with_capacity(header.count);
    let mut body = String::new();
    let mut footer: Option<FileFooter> = None;
    let mut line_no = 1;
    for line in lines {
        let line = line?;
        line_no += 1;
        if records.len() < header.count {
            let rec: DatasetRecord =
                serde_json::from_str(&line).map_err(|e| Error::RecordInvalid {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            body.push_str(&line);
            body.push('\n');
            validate_record(&rec, line_no)?;
            records.push(rec);
        } else {
            footer = Some(serde_json::from_str(&line).map_err(|e| Error::RecordInvalid {
                line: line_no,
                reason: format!("bad footer: {e}"),
            })?);
            break;
        }
    }
    if records.len() != header.count {
        return Err(Error::RecordInvalid {
            line: line_no,
            reason: format!(
                "file ends after {} of {} records",
                records.len(),
                header.count
            ),
        });
    }
    let footer = footer.ok_or(Error::ChecksumMismatch)?;
    let expected = format!("fnv1a:{:016x}", fnv1a64(body.as_bytes()));
    if footer.checksum != expected {
        return Err(Error::ChecksumMismatch);
    }
    Ok(records)
}

fn validate_record(rec: &DatasetRecord, line: usize) -> Result<()> {
    let fail = |reason: String| Error::RecordInvalid { line, reason };
    if rec.conditioning.len() != CONDITIONING_LEN {
        return Err(fail(format!(
            "conditioning has {} slots, expected {CONDITIONING_LEN}",
            rec.conditioning.len()
        )));
    }
    if rec.theta_opt.len() != rec.family.n_params() {
        return Err(fail(format!(
            "theta_opt has {} entries, family {} expects {}",
            rec.theta_opt.len(),
            rec.family,
            rec.family.n_params()
        )));
    }
    let task = build_task(rec.family, &rec.params, rec.seed)
        .map_err(|e| fail(format!("task rebuild failed: {e}")))?;
    let recomputed = task_loss(&task, &rec.theta_opt)
        .map_err(|e| fail(format!("loss recompute failed: {e}")))?;
    if (recomputed - rec.final_loss).abs() > 1e-9 {
        return Err(Error::FinalLossMismatch {
            id: rec.id,
            stored: rec.final_loss,
            recomputed,
        });
    }
    Ok(())
}

pub fn persist_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn persist_split(split: &SplitManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(split).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<SplitManifest> {
    let text = fs::read_to_string(path)?;
    let split: SplitManifest = serde_json::from_str(&text).map_err(|e| Error::RecordInvalid {
        line: 1,
        reason: format!("bad split manifest: {e}"),
    })?;
    if split.schema_version != SPLIT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: split.schema_version,
            supported: SPLIT_SCHEMA_VERSION.to_string(),
        });
    }
    Ok(split)
}

/// Select records by id.
pub fn subset<'a>(records: &'a [DatasetRecord], ids: &[u64]) -> Vec<&'a DatasetRecord> {
    ids.iter()
        .filter_map(|id| records.iter().find(|r| r.id == *id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn quick_cfg() -> OptimizerConfig {
        OptimizerConfig {
            max_steps: 30,
            window: 5,
            ..OptimizerConfig::default()
        }
    }

    fn tmp_path(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("diffq-dataset-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn sample_params_deterministic_and_in_range() {
        for family in TaskFamily::ALL {
            let a = sample_task_params(family, &mut rng_from_seed(4));
            let b = sample_task_params(family, &mut rng_from_seed(4));
            assert_eq!(a, b);
        }
        let mut rng = rng_from_seed(100);
        let mut sums = [0.0; 3];
        let n = 1000;
        for _ in 0..n {
            let p = sample_task_params(TaskFamily::Xyz1d, &mut rng);
            for (s, v) in sums.iter_mut().zip(&p) {
                assert!((0.0..2.0).contains(v));
                *s += v;
            }
        }
        // mean within 2*(range)/sqrt(12 n) of the midpoint
        let tol = 2.0 * 2.0 / (12.0 * n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64 - 1.0).abs() < tol);
        }
    }

    #[test]
    fn representative_prompts_are_interior_points() {
        // XYZ (2,1,0.5); FH (0.5,1); TFI (0.2,3); QPulse (0.3,0.2,0.4,...)
        assert!((0.0..=2.0).contains(&2.0) && (0.0..=2.0).contains(&0.5));
        assert!((0.1..=1.0).contains(&0.5) && (0.0..=2.0).contains(&1.0));
        assert!((0.0..=1.0).contains(&0.2) && (0.0..=4.0).contains(&3.0));
        for v in [0.3, 0.2] {
            assert!((0.0..=0.5).contains(&v));
        }
        assert!((0.1..=0.5).contains(&0.4));
    }

    #[test]
    fn zero_coupling_instance_keeps_theta0() {
        let rec = generate_instance(TaskFamily::Xyz1d, &[0.0, 0.0, 0.0], 9, &quick_cfg()).unwrap();
        assert_eq!(rec.final_loss, 0.0);
        // zero gradient everywhere: theta never moves
        let mut theta_rng = rng_from_seed(derive_seed(9, THETA0_STREAM));
        let theta0: Vec<f64> = (0..8).map(|_| uniform_angle(&mut theta_rng)).collect();
        assert_eq!(rec.theta_opt, theta0);
    }

    #[test]
    fn identical_seeds_reproduce_records() {
        let cfg = quick_cfg();
        let a = generate_instance(TaskFamily::Fh1d, &[0.5, 1.0], 33, &cfg).unwrap();
        let b = generate_instance(TaskFamily::Fh1d, &[0.5, 1.0], 33, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_dataset_assigns_sequential_ids() {
        let (records, manifest) =
            generate_dataset(TaskFamily::RandomVqe, 5, 7, &quick_cfg()).unwrap();
        assert_eq!(records.len(), 5);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.id, i as u64);
        }
        assert_eq!(manifest.count, 5);
        // regeneration is identical (worker-count independence included)
        let (again, _) = generate_dataset(TaskFamily::RandomVqe, 5, 7, &quick_cfg()).unwrap();
        assert_eq!(records, again);
    }

    #[test]
    fn split_ratios_and_determinism() {
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 10, 1, &quick_cfg()).unwrap();
        let s = split_dataset(&records, 0.7, 5).unwrap();
        assert_eq!(s.train_ids.len(), 7);
        assert_eq!(s.test_ids.len(), 3);
        let s2 = split_dataset(&records, 0.7, 5).unwrap();
        assert_eq!(s, s2);
        let mut all: Vec<u64> = s.train_ids.iter().chain(&s.test_ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u64>>());

        let s3 = split_dataset(&records[..2], 0.7, 5).unwrap();
        assert_eq!((s3.train_ids.len(), s3.test_ids.len()), (1, 1));
        assert!(split_dataset(&records[..1], 0.7, 5).is_err());
    }

    #[test]
    fn persist_load_round_trip_is_bit_exact() {
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 4, 21, &quick_cfg()).unwrap();
        let path = tmp_path("roundtrip.jsonl");
        persist_records(&records, &path).unwrap();
        let loaded = load_records(&path).unwrap();
        assert_eq!(records, loaded);
    }

    #[test]
    fn corrupted_line_reports_line_number() {
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 3, 2, &quick_cfg()).unwrap();
        let path = tmp_path("corrupt.jsonl");
        persist_records(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replace("theta_opt", "thetaopt");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        match load_records(&path).unwrap_err() {
            Error::RecordInvalid { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tampered_payload_fails_checksum() {
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 3, 2, &quick_cfg()).unwrap();
        let path = tmp_path("checksum.jsonl");
        persist_records(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        // swap two record lines: each still parses and validates on its own,
        // but the hashed byte stream changes
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines.swap(1, 2);
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(
            load_records(&path).unwrap_err(),
            Error::ChecksumMismatch
        ));
    }

    #[test]
    fn newer_schema_version_is_an_explicit_error() {
        let (records, _) = generate_dataset(TaskFamily::Xyz1d, 2, 2, &quick_cfg()).unwrap();
        let path = tmp_path("version.jsonl");
        persist_records(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let bumped = text.replace("diffq-records-v1", "diffq-records-v9");
        fs::write(&path, bumped).unwrap();
        assert!(matches!(
            load_records(&path).unwrap_err(),
            Error::SchemaVersion { .. }
        ));
    }

    #[test]
    fn doctored_final_loss_is_rejected() {
        let (mut records, _) = generate_dataset(TaskFamily::Xyz1d, 2, 3, &quick_cfg()).unwrap();
        records[1].final_loss += 0.5;
        let path = tmp_path("loss.jsonl");
        persist_records(&records, &path).unwrap();
        assert!(matches!(
            load_records(&path).unwrap_err(),
            Error::FinalLossMismatch { .. } | Error::RecordInvalid { .. }
        ));
    }

    #[test]
    fn split_manifest_round_trip() {
        let (records, _) = generate_dataset(TaskFamily::Fh1d, 6, 8, &quick_cfg()).unwrap();
        let split = split_dataset(&records, 0.7, 99).unwrap();
        let path = tmp_path("split.json");
        persist_split(&split, &path).unwrap();
        assert_eq!(load_split(&path).unwrap(), split);
    }
}
