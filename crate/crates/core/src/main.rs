//! Command-line pipeline: dataset generation, splitting, diffusion
//! training, sampling, evaluation, comparison, and a self-test suite.

use clap::{Parser, Subcommand};
use diffq::config::{snapshot, FileConfig, RunConfig};
use diffq::dataset::{
    generate_dataset, load_records, load_split, paper_scale_count, persist_manifest,
    persist_records, persist_split, split_dataset, subset, DatasetRecord, DESK_SCALE_COUNT,
};
use diffq::ddpm::{linear_schedule, load_checkpoint, sample_parameters, save_checkpoint, train_model};
use diffq::encoding::{decode_grid, denormalize_grid};
use diffq::error::Error;
use diffq::eval::{
    compare_schemes, emit_report, evaluate_initializer, load_metrics, save_metrics, EvalMetrics,
    Initializer,
};
use diffq::rng::{derive_seed, rng_from_seed};
use diffq::tasks::{build_task, task_loss, TaskFamily};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "diffq", version, about = "Diffusion-generated initialization for variational quantum ansatz parameters")]
struct Cli {
    /// Key-value config file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (outputs are identical for any worker count).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of optimized task instances.
    GenDataset {
        #[arg(long)]
        family: Option<String>,
        /// Instance count; overrides --preset.
        #[arg(long)]
        n: Option<usize>,
        /// "desk" (200) or "paper" (per-family published counts).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a record file into train and test ids.
    Split {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the diffusion model on the train side of a split.
    Train {
        #[arg(long)]
        records: PathBuf,
        /// Split manifest; without it the whole file is used for training.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Family sanity check against the records.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long = "T")]
        t_max: Option<usize>,
        #[arg(long = "g")]
        guidance: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        p_guidance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw initialization parameters from a trained checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated task parameters (family-specific arity).
        #[arg(long)]
        params: Option<String>,
        /// Structure seed for seed-driven families.
        #[arg(long)]
        task_seed: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an initializer on the test side of a split.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Evaluate the diffusion initializer from this checkpoint.
        #[arg(long, conflicts_with = "random")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the uniform random baseline.
        #[arg(long)]
        random: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two saved metrics files (baseline vs candidate).
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle-backed invariant suite.
    Selftest,
}

fn exit_code_for(err: &Error) -> u8 {
    use Error::*;
    match err {
        Io(_) => 3,
        InvalidConfig(_) | InvalidSchedule(_) | ArityMismatch { .. } | TooFewRecords { .. }
        | InvalidObservable(_) | InvalidLayout(_) => 4,
        SchemaVersion { .. } | RecordInvalid { .. } | ChecksumMismatch
        | FinalLossMismatch { .. } | FamilyMismatch { .. } | InstanceSetMismatch
        | EmptyTestSet => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_run_config(path: &Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        FileConfig::load(p)?.apply(&mut cfg)?;
    }
    Ok(cfg)
}

fn write_provenance(
    out_dir: &Path,
    command: &str,
    cfg: &RunConfig,
    extras: &[(String, String)],
) -> Result<(), Error> {
    fs::create_dir_all(out_dir)?;
    let mut text = format!(
        "command = {command}\ngenerator_version = {}\nrecord_schema = {}\nsplit_schema = {}\ncheckpoint_schema = {}\nmetrics_schema = {}\n",
        diffq::GENERATOR_VERSION,
        diffq::dataset::RECORD_SCHEMA_VERSION,
        diffq::dataset::SPLIT_SCHEMA_VERSION,
        diffq::ddpm::CHECKPOINT_SCHEMA_VERSION,
        diffq::eval::METRICS_SCHEMA_VERSION,
    );
    for (k, v) in extras {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str("\n# resolved configuration\n");
    text.push_str(&snapshot(cfg));
    fs::write(out_dir.join(format!("provenance-{command}.txt")), text)?;
    Ok(())
}

fn parse_family(flag: &Option<String>, cfg: &RunConfig) -> Result<TaskFamily, Error> {
    match flag {
        Some(s) => TaskFamily::parse(s),
        None => Ok(cfg.family),
    }
}

fn records_for_side(
    records: &[DatasetRecord],
    split: &Option<PathBuf>,
    train_side: bool,
) -> Result<Vec<DatasetRecord>, Error> {
    match split {
        None => Ok(records.to_vec()),
        Some(path) => {
            let manifest = load_split(path)?;
            let ids = if train_side {
                &manifest.train_ids
            } else {
                &manifest.test_ids
            };
            let selected: Vec<DatasetRecord> = subset(records, ids).into_iter().cloned().collect();
            if selected.len() != ids.len() {
                return Err(Error::RecordInvalid {
                    line: 0,
                    reason: "split references ids missing from the record file".into(),
                });
            }
            Ok(selected)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenDataset { family, n, preset, seed, max_steps, out } => {
            let mut cfg = load_run_config(&cli.config)?;
            cfg.family = parse_family(&family, &cfg)?;
            if let Some(ms) = max_steps {
                cfg.optimizer.max_steps = ms;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            let count = match (n, preset.as_deref()) {
                (Some(n), _) => n,
                (None, Some("desk")) => DESK_SCALE_COUNT,
                (None, Some("paper")) => paper_scale_count(cfg.family),
                (None, Some(other)) => {
                    return Err(Error::InvalidConfig(format!("unknown preset '{other}'")))
                }
                (None, None) => DESK_SCALE_COUNT,
            };
            let master_seed = seed.unwrap_or(1);
            let (records, manifest) =
                generate_dataset(cfg.family, count, master_seed, &cfg.optimizer)?;
            fs::create_dir_all(&cfg.out_dir)?;
            persist_records(&records, &cfg.out_dir.join("records.jsonl"))?;
            persist_manifest(&manifest, &cfg.out_dir.join("dataset-manifest.json"))?;
            write_provenance(
                &cfg.out_dir,
                "gen-dataset",
                &cfg,
                &[
                    ("master_seed".into(), master_seed.to_string()),
                    ("count".into(), count.to_string()),
                ],
            )?;
            println!(
                "wrote {} {} records to {}",
                records.len(),
                cfg.family,
                cfg.out_dir.join("records.jsonl").display()
            );
            Ok(())
        }
        Command::Split { records, ratio, seed, out } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(r) = ratio {
                cfg.split_ratio = r;
            }
            if let Some(s) = seed {
                cfg.split_seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let recs = load_records(&records)?;
            let manifest = split_dataset(&recs, cfg.split_ratio, cfg.split_seed)?;
            fs::create_dir_all(&cfg.out_dir)?;
            persist_split(&manifest, &cfg.out_dir.join("split.json"))?;
            write_provenance(
                &cfg.out_dir,
                "split",
                &cfg,
                &[("records".into(), records.display().to_string())],
            )?;
            println!(
                "split {} records into {} train / {} test",
                recs.len(),
                manifest.train_ids.len(),
                manifest.test_ids.len()
            );
            Ok(())
        }
        Command::Train {
            records,
            split,
            family,
            epochs,
            lr,
            t_max,
            guidance,
            batch,
            p_guidance,
            seed,
            out,
        } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(e) = epochs {
                cfg.diffusion.epochs = e;
            }
            if let Some(v) = lr {
                cfg.diffusion.learning_rate = v;
            }
            if let Some(v) = t_max {
                cfg.diffusion.t_max = v;
            }
            if let Some(v) = guidance {
                cfg.diffusion.guidance_scale = v;
            }
            if let Some(v) = batch {
                cfg.diffusion.batch_size = v;
            }
            if let Some(v) = p_guidance {
                cfg.diffusion.p_guidance = v;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let recs = load_records(&records)?;
            if recs.is_empty() {
                return Err(Error::TooFewRecords { got: 0, needed: 1 });
            }
            cfg.family = recs[0].family;
            if let Some(f) = &family {
                let requested = TaskFamily::parse(f)?;
                if requested != cfg.family {
                    return Err(Error::FamilyMismatch {
                        expected: requested.to_string(),
                        got: cfg.family.to_string(),
                    });
                }
            }
            cfg.validate()?;
            let train_side = records_for_side(&recs, &split, true)?;
            let refs: Vec<&DatasetRecord> = train_side.iter().collect();
            let train_seed = seed.unwrap_or(1);
            let arch = cfg.arch_for_family();
            let model = train_model(&refs, &cfg.diffusion, &arch, train_seed)?;
            fs::create_dir_all(&cfg.out_dir)?;
            save_checkpoint(&model, &cfg.out_dir.join("checkpoint.json"))?;
            let mut curve = String::from("epoch,mean_loss\n");
            for (e, l) in model.loss_history.iter().enumerate() {
                curve.push_str(&format!("{e},{l}\n"));
            }
            fs::write(cfg.out_dir.join("loss_history.csv"), curve)?;
            write_provenance(
                &cfg.out_dir,
                "train",
                &cfg,
                &[
                    ("train_seed".into(), train_seed.to_string()),
                    ("train_records".into(), refs.len().to_string()),
                ],
            )?;
            println!(
                "trained {} model on {} records for {} epochs (final loss {:.4})",
                cfg.family,
                refs.len(),
                cfg.diffusion.epochs,
                model.loss_history.last().unwrap_or(&f64::NAN)
            );
            Ok(())
        }
        Command::Sample { checkpoint, params, task_seed, seed, count, out } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let model = load_checkpoint(&checkpoint)?;
            let family = model.family;
            let task_params: Vec<f64> = match params {
                Some(s) => s
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidConfig(format!("bad task parameter '{v}'")))
                    })
                    .collect::<Result<_, _>>()?,
                None => Vec::new(),
            };
            let task = build_task(family, &task_params, task_seed.unwrap_or(0))?;
            let features = diffq::tasks::conditioning_features(&task)?;
            let sched = linear_schedule(&model.diffusion)?;
            let sample_seed = seed.unwrap_or(1);
            fs::create_dir_all(&cfg.out_dir)?;
            let mut lines = String::new();
            for k in 0..count {
                let mut rng = rng_from_seed(derive_seed(sample_seed, k as u64));
                let grid = sample_parameters(
                    &model.params,
                    &task.layout,
                    &features,
                    &sched,
                    model.diffusion.guidance_scale,
                    &mut rng,
                )?;
                let theta = decode_grid(&task.layout, &denormalize_grid(&grid)?)?;
                let loss = task_loss(&task, &theta)?;
                println!("sample {k}: initial loss {loss}");
                lines.push_str(
                    &serde_json::to_string(&serde_json::json!({
                        "sample_index": k,
                        "theta": theta,
                        "initial_loss": loss,
                    }))
                    .map_err(|e| Error::Io(e.to_string()))?,
                );
                lines.push('\n');
            }
            fs::write(cfg.out_dir.join("samples.jsonl"), lines)?;
            write_provenance(
                &cfg.out_dir,
                "sample",
                &cfg,
                &[
                    ("checkpoint".into(), checkpoint.display().to_string()),
                    ("prompt".into(), task.prompt.clone()),
                    ("sample_seed".into(), sample_seed.to_string()),
                ],
            )?;
            Ok(())
        }
        Command::Eval { records, split, checkpoint, random, seed, max_steps, out } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(s) = seed {
                cfg.eval_seed = s;
            }
            if let Some(ms) = max_steps {
                cfg.optimizer.max_steps = ms;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let recs = load_records(&records)?;
            let test_side = records_for_side(&recs, &split, false)?;
            let refs: Vec<&DatasetRecord> = test_side.iter().collect();
            let model;
            let init = if random {
                Initializer::Random { seed: cfg.eval_seed }
            } else if let Some(path) = &checkpoint {
                model = load_checkpoint(path)?;
                Initializer::Model { model: &model, seed: cfg.eval_seed }
            } else {
                return Err(Error::InvalidConfig(
                    "eval needs either --random or --checkpoint".into(),
                ));
            };
            let metrics = evaluate_initializer(&refs, &init, &cfg.optimizer)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let metrics_path = cfg.out_dir.join(format!("metrics_{}.json", metrics.scheme));
            save_metrics(&metrics, &metrics_path)?;
            diffq::eval::emit_init_losses_csv(
                &metrics,
                &cfg.out_dir.join(format!("init_losses_{}.csv", metrics.scheme)),
            )?;
            diffq::eval::emit_loss_curve_csv(
                &metrics,
                &cfg.out_dir.join(format!("loss_curve_{}.csv", metrics.scheme)),
            )?;
            write_provenance(
                &cfg.out_dir,
                "eval",
                &cfg,
                &[
                    ("scheme".into(), metrics.scheme.clone()),
                    ("eval_seed".into(), cfg.eval_seed.to_string()),
                    ("instances".into(), refs.len().to_string()),
                ],
            )?;
            println!(
                "{}: mean initial loss {:.6}, mean convergence steps {:.2} ({} instances) -> {}",
                metrics.scheme,
                metrics.mean_initial_loss,
                metrics.mean_convergence_steps,
                refs.len(),
                metrics_path.display()
            );
            Ok(())
        }
        Command::Compare { baseline, candidate, out } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let a: EvalMetrics = load_metrics(&baseline)?;
            let b: EvalMetrics = load_metrics(&candidate)?;
            let row = compare_schemes(&a, &b)?;
            emit_report(&row, &a, &b, &cfg.out_dir)?;
            write_provenance(
                &cfg.out_dir,
                "compare",
                &cfg,
                &[
                    ("baseline".into(), baseline.display().to_string()),
                    ("candidate".into(), candidate.display().to_string()),
                ],
            )?;
            println!(
                "{}: initial loss {:.6} -> {:.6} (delta {:.6}); steps {:.2} -> {:.2} ({:.1}% reduction)",
                row.family,
                row.a_mean_initial_loss,
                row.b_mean_initial_loss,
                row.delta_initial_loss,
                row.a_mean_convergence_steps,
                row.b_mean_convergence_steps,
                row.delta_steps_pct
            );
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

// ---------------------------------------------------------------------------
// Self-test: a fast oracle-backed invariant suite.
// ---------------------------------------------------------------------------

fn selftest() -> Result<(), Error> {
    use diffq::rng::standard_normal;
    use diffq::sim;
    use num_complex::Complex64;
    use rand::Rng;

    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("selftest: {name} ... {}", if ok { "ok" } else { "FAILED" });
        if !ok {
            failures += 1;
        }
    };

    // 1. expectation vs dense quadratic form on random pairs
    {
        let mut rng = rng_from_seed(101);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let n = rng.random_range(1..=4usize);
            let dim = 1usize << n;
            let mut amps: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(standard_normal(&mut rng), standard_normal(&mut rng)))
                .collect();
            let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for a in &mut amps {
                *a /= norm;
            }
            let state = sim::StateVector::from_amplitudes(amps).unwrap();
            let n_terms = rng.random_range(1..=4usize);
            let terms = (0..n_terms)
                .map(|_| {
                    let coeff = 2.0 * standard_normal(&mut rng);
                    let ops = (0..n)
                        .map(|_| sim::Pauli::from_code(rng.random_range(0..4u8)).unwrap())
                        .collect();
                    (coeff, sim::PauliString(ops))
                })
                .collect();
            let obs = sim::Observable::new(n, terms).unwrap();
            let h = sim::pauli_matrix(&obs).unwrap();
            let hv = h.matvec(state.amplitudes());
            let dense: Complex64 = state
                .amplitudes()
                .iter()
                .zip(&hv)
                .map(|(a, b)| a.conj() * b)
                .sum();
            let fast = sim::expectation(&state, &obs).unwrap();
            worst = worst.max((fast - dense.re).abs());
        }
        check("expectation matches dense quadratic form (200 pairs)", worst < 1e-10);
    }

    // 2. parameter-shift vs central finite differences, one instance per family
    {
        let mut ok = true;
        let mut rng = rng_from_seed(55);
        for family in TaskFamily::ALL {
            let params = diffq::tasks::sample_task_params(family, &mut rng);
            let task = build_task(family, &params, 17)?;
            let theta: Vec<f64> = (0..task.layout.n_params)
                .map(|_| diffq::rng::uniform_angle(&mut rng))
                .collect();
            let grad = diffq::vqe::parameter_shift_grad(&task, &theta)?;
            let h = 1e-5;
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (task_loss(&task, &tp)? - task_loss(&task, &tm)?) / (2.0 * h);
                let denom = fd.abs().max(grad[k].abs()).max(1e-7);
                if (fd - grad[k]).abs() / denom > 1e-6 {
                    ok = false;
                }
            }
        }
        check("parameter-shift gradients match finite differences", ok);
    }

    // 3. noise schedule endpoints and frozen cumulative product
    {
        let sched = linear_schedule(&diffq::ddpm::DiffusionConfig::default())?;
        let ok = (sched.beta(1)? - 1e-4).abs() < 1e-18
            && (sched.beta(100)? - 0.02).abs() < 1e-15
            && (sched.alpha_bar(100)? - 0.36356324805549223).abs() < 1e-14;
        check("linear schedule endpoints and frozen alpha_bar_100", ok);
    }

    // 4. grid encode/decode round trip
    {
        let mut ok = true;
        let mut rng = rng_from_seed(3);
        for family in TaskFamily::ALL {
            let params = diffq::tasks::sample_task_params(family, &mut rng);
            let task = build_task(family, &params, 5)?;
            for _ in 0..50 {
                let theta: Vec<f64> = (0..task.layout.n_params)
                    .map(|_| diffq::rng::uniform_angle(&mut rng))
                    .collect();
                let grid = diffq::encoding::encode_grid(&task.layout, &theta)?;
                if diffq::encoding::decode_grid(&task.layout, &grid)? != theta {
                    ok = false;
                }
            }
        }
        check("grid encode/decode round trip is bit-exact", ok);
    }

    // 5. guidance degeneracies
    {
        let arch = diffq::denoiser::DenoiserArch::for_input_dim(8);
        let mut p = diffq::denoiser::init_denoiser(&arch, 7)?;
        let mut rng = rng_from_seed(9);
        for v in p.flat.iter_mut() {
            *v = 0.2 * standard_normal(&mut rng);
        }
        let task = build_task(TaskFamily::Xyz1d, &[1.0, 0.7, 0.2], 0)?;
        let grid = diffq::encoding::NormalizedGrid::zeros_like_layout(&task.layout);
        let x = diffq::ddpm::draw_noise_grid(&grid, &mut rng);
        let c = diffq::tasks::conditioning_features(&task)?;
        let cond = p.forward(&x.occupied_values(), 10, diffq::denoiser::Conditioning::Features(&c))?;
        let uncond = p.forward(&x.occupied_values(), 10, diffq::denoiser::Conditioning::Null)?;
        let g1 = diffq::ddpm::cfg_epsilon(&p, &x, 10, &c, 1.0)?;
        let g0 = diffq::ddpm::cfg_epsilon(&p, &x, 10, &c, 0.0)?;
        check(
            "guidance scale degeneracies (g=1 conditional, g=0 unconditional)",
            g1.occupied_values() == cond && g0.occupied_values() == uncond,
        );
    }

    // 6. variational bound against the frozen ground energy
    {
        let task = build_task(TaskFamily::Xyz1d, &[2.0, 1.0, 0.5], 0)?;
        let mut rng = rng_from_seed(23);
        let mut ok = true;
        for _ in 0..20 {
            let theta: Vec<f64> = (0..8).map(|_| diffq::rng::uniform_angle(&mut rng)).collect();
            if task_loss(&task, &theta)? < -9.8486879840404935 - 1e-9 {
                ok = false;
            }
        }
        check("variational bound above the frozen ground energy", ok);
    }

    // 7. norm preservation through random circuits
    {
        let mut rng = rng_from_seed(31);
        let mut ok = true;
        for family in TaskFamily::ALL {
            let params = diffq::tasks::sample_task_params(family, &mut rng);
            let task = build_task(family, &params, 2)?;
            let theta: Vec<f64> = (0..task.layout.n_params)
                .map(|_| diffq::rng::uniform_angle(&mut rng))
                .collect();
            let state = sim::run_circuit(&task.layout, &theta)?;
            if (state.norm_sq() - 1.0).abs() > 1e-10 {
                ok = false;
            }
        }
        check("norm preserved through random circuits", ok);
    }

    if failures > 0 {
        return Err(Error::NonFiniteValue(format!(
            "selftest had {failures} failing check(s)"
        )));
    }
    println!("selftest: all checks passed");
    Ok(())
}
