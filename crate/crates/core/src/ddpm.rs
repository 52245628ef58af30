//! Diffusion core: noise schedule, closed-form forward sampling, the
//! training objective with guidance dropout, guided noise prediction,
//! reverse sampling, the training loop, and checkpoint I/O.

use crate::dataset::DatasetRecord;
use crate::denoiser::{init_denoiser, Conditioning, DenoiserArch, DenoiserParams};
use crate::encoding::{encode_grid, normalize_grid, NormalizedGrid};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, standard_normal, SeededRng};
use crate::tasks::{build_task, TaskFamily};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_SCHEMA_VERSION: &str = "diffq-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub guidance_scale: f64,
    pub p_guidance: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            t_max: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            guidance_scale: 10.0,
            p_guidance: 0.1,
            epochs: 500,
            learning_rate: 5e-5,
            // desk-scale datasets hold O(100) training records; at the fixed
            // learning rate the update count, not the batch width, is what
            // drives learning, so the default batch stays small
            batch_size: 8,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 2 timesteps, got {}",
                self.t_max
            )));
        }
        if !(self.beta_start > 0.0 && self.beta_end < 1.0 && self.beta_start <= self.beta_end) {
            return Err(Error::InvalidSchedule(format!(
                "betas must satisfy 0 < {} <= {} < 1",
                self.beta_start, self.beta_end
            )));
        }
        if !(0.0..=1.0).contains(&self.p_guidance) {
            return Err(Error::InvalidConfig(format!(
                "p_guidance must lie in [0, 1], got {}",
                self.p_guidance
            )));
        }
        if self.learning_rate <= 0.0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "learning rate, epochs, and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// {beta_t, alpha_t, alpha_bar_t} for t = 1..=T (index t-1).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.t_max {
            return Err(Error::TimestepOutOfRange { t, t_max: self.t_max });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alphas[t - 1])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }
}

/// beta_t = beta_1 + (t-1)(beta_T - beta_1)/(T-1), with the cumulative
/// products alpha_bar_t.
pub fn linear_schedule(cfg: &DiffusionConfig) -> Result<NoiseSchedule> {
    cfg.validate()?;
    let t_max = cfg.t_max;
    let mut betas = Vec::with_capacity(t_max);
    let mut alphas = Vec::with_capacity(t_max);
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for t in 1..=t_max {
        let beta =
            cfg.beta_start + (t - 1) as f64 * (cfg.beta_end - cfg.beta_start) / (t_max - 1) as f64;
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidSchedule(format!("beta_{t} = {beta}")));
        }
        let alpha = 1.0 - beta;
        prod *= alpha;
        betas.push(beta);
        alphas.push(alpha);
        alpha_bars.push(prod);
    }
    for t in 1..t_max {
        if betas[t] < betas[t - 1] {
            return Err(Error::InvalidSchedule("betas must be non-decreasing".into()));
        }
        if alpha_bars[t] >= alpha_bars[t - 1] {
            return Err(Error::InvalidSchedule(
                "alpha_bar must be strictly decreasing".into(),
            ));
        }
    }
    Ok(NoiseSchedule {
        t_max,
        betas,
        alphas,
        alpha_bars,
    })
}

/// Standard-normal noise on occupied cells (row-major draw order), zero on
/// masked cells.
pub fn draw_noise_grid(template: &NormalizedGrid, rng: &mut SeededRng) -> NormalizedGrid {
    let mut values = vec![0.0; template.values.len()];
    for (v, m) in values.iter_mut().zip(&template.mask) {
        if *m {
            *v = standard_normal(rng);
        }
    }
    NormalizedGrid {
        rows: template.rows,
        cols: template.cols,
        values,
        mask: template.mask.clone(),
    }
}

fn check_same_shape(a: &NormalizedGrid, b: &NormalizedGrid) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::GridShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// Closed-form forward sample x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
pub fn forward_sample(
    x0: &NormalizedGrid,
    t: usize,
    eps: &NormalizedGrid,
    sched: &NoiseSchedule,
) -> Result<NormalizedGrid> {
    check_same_shape(x0, eps)?;
    for (v, m) in eps.values.iter().zip(&eps.mask) {
        if !m && *v != 0.0 {
            return Err(Error::GridShapeMismatch(
                "noise present in a masked cell".into(),
            ));
        }
    }
    let ab = sched.alpha_bar(t)?;
    let (ca, ce) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out = x0.clone();
    for i in 0..out.values.len() {
        if out.mask[i] {
            out.values[i] = ca * x0.values[i] + ce * eps.values[i];
        }
    }
    Ok(out)
}

/// Guided noise prediction eps_u + g (eps_c - eps_u). The g = 1 and g = 0
/// degeneracies return the underlying prediction bit-exactly.
pub fn cfg_epsilon(
    denoiser: &DenoiserParams,
    x_t: &NormalizedGrid,
    t: usize,
    features: &[f64],
    guidance_scale: f64,
) -> Result<NormalizedGrid> {
    let flat = x_t.occupied_values();
    let cond = denoiser.forward(&flat, t, Conditioning::Features(features))?;
    if guidance_scale == 1.0 {
        return NormalizedGrid::from_occupied(x_t, &cond);
    }
    let uncond = denoiser.forward(&flat, t, Conditioning::Null)?;
    if guidance_scale == 0.0 {
        return NormalizedGrid::from_occupied(x_t, &uncond);
    }
    let combined: Vec<f64> = uncond
        .iter()
        .zip(&cond)
        .map(|(u, c)| u + guidance_scale * (c - u))
        .collect();
    NormalizedGrid::from_occupied(x_t, &combined)
}

/// One reverse transition: mean (x_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t),
/// variance beta_t, and no injected noise at the final step t = 1.
pub fn reverse_step(
    x_t: &NormalizedGrid,
    t: usize,
    eps_hat: &NormalizedGrid,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<NormalizedGrid> {
    check_same_shape(x_t, eps_hat)?;
    let beta = sched.beta(t)?;
    let alpha = sched.alpha(t)?;
    let ab = sched.alpha_bar(t)?;
    let coeff = beta / (1.0 - ab).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let sigma = beta.sqrt();
    let mut out = x_t.clone();
    for i in 0..out.values.len() {
        if out.mask[i] {
            let mean = inv_sqrt_alpha * (x_t.values[i] - coeff * eps_hat.values[i]);
            out.values[i] = if t > 1 {
                mean + sigma * standard_normal(rng)
            } else {
                mean
            };
        }
    }
    Ok(out)
}

/// Training batch item: encoded clean grid plus its conditioning features.
pub type TrainItem = (NormalizedGrid, Vec<f64>);

/// One corrupted training example ready for the denoiser.
#[derive(Debug, Clone)]
pub struct NoisyExample {
    pub x_t: Vec<f64>,
    pub eps: Vec<f64>,
    pub t: usize,
    pub use_null: bool,
    pub features: Vec<f64>,
}

/// Draws the stochastic parts of a training step. Per item the rng draws,
/// in order: timestep, occupied-cell noise (row-major), dropout uniform.
pub fn prepare_batch(
    batch: &[TrainItem],
    sched: &NoiseSchedule,
    cfg: &DiffusionConfig,
    rng: &mut SeededRng,
) -> Result<Vec<NoisyExample>> {
    if batch.is_empty() {
        return Err(Error::TooFewRecords { got: 0, needed: 1 });
    }
    let mut out = Vec::with_capacity(batch.len());
    for (x0, features) in batch {
        let t = 1 + (rand::RngCore::next_u64(rng) % sched.t_max as u64) as usize;
        let eps = draw_noise_grid(x0, rng);
        let drop: f64 = rng.random();
        let x_t = forward_sample(x0, t, &eps, sched)?;
        out.push(NoisyExample {
            x_t: x_t.occupied_values(),
            eps: eps.occupied_values(),
            t,
            use_null: drop < cfg.p_guidance,
            features: features.clone(),
        });
    }
    Ok(out)
}

/// Mean over batch items and occupied cells of (eps - prediction)^2, with
/// its exact gradient with respect to the denoiser weights.
pub fn batch_loss_grad(
    denoiser: &DenoiserParams,
    prepared: &[NoisyExample],
) -> Result<(f64, Vec<f64>, usize)> {
    if prepared.is_empty() {
        return Err(Error::TooFewRecords { got: 0, needed: 1 });
    }
    let total_cells: usize = prepared.iter().map(|e| e.eps.len()).sum();
    let mut grad = vec![0.0; denoiser.n_weights()];
    let mut sq_err = 0.0;
    for ex in prepared {
        let cond = if ex.use_null {
            Conditioning::Null
        } else {
            Conditioning::Features(&ex.features)
        };
        let (pred, tape) = denoiser.forward_cached(&ex.x_t, ex.t, cond)?;
        let mut upstream = Vec::with_capacity(pred.len());
        for (p, e) in pred.iter().zip(&ex.eps) {
            let d = p - e;
            sq_err += d * d;
            upstream.push(2.0 * d / total_cells as f64);
        }
        denoiser.backward(&tape, &upstream, &mut grad)?;
    }
    let loss = sq_err / total_cells as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    Ok((loss, grad, total_cells))
}

/// Draws per-item noise and timesteps, then evaluates the batch objective
/// and its gradient.
pub fn training_step(
    denoiser: &DenoiserParams,
    batch: &[TrainItem],
    sched: &NoiseSchedule,
    cfg: &DiffusionConfig,
    rng: &mut SeededRng,
) -> Result<(f64, Vec<f64>, usize)> {
    let prepared = prepare_batch(batch, sched, cfg, rng)?;
    batch_loss_grad(denoiser, &prepared)
}

/// Draws x_T on the layout's occupied cells and denoises from t = T down
/// to 1 under classifier-free guidance.
pub fn sample_parameters(
    denoiser: &DenoiserParams,
    layout: &crate::sim::CircuitLayout,
    features: &[f64],
    sched: &NoiseSchedule,
    guidance_scale: f64,
    rng: &mut SeededRng,
) -> Result<NormalizedGrid> {
    let template = NormalizedGrid::zeros_like_layout(layout);
    let mut x = draw_noise_grid(&template, rng);
    for t in (1..=sched.t_max).rev() {
        let eps_hat = cfg_epsilon(denoiser, &x, t, features, guidance_scale)?;
        x = reverse_step(&x, t, &eps_hat, sched, rng)?;
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!(
                "sample diverged at timestep {t}"
            )));
        }
    }
    Ok(x)
}

/// A trained denoiser with everything needed to reproduce and reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub family: TaskFamily,
    pub arch: DenoiserArch,
    pub diffusion: DiffusionConfig,
    pub params: DenoiserParams,
    pub train_seed: u64,
    pub loss_history: Vec<f64>,
}

/// Adam over `training_step` gradients with cosine decay from the peak
/// learning rate to zero across epochs. Deterministic given the seed.
pub fn train_model(
    records: &[&DatasetRecord],
    dcfg: &DiffusionConfig,
    arch: &DenoiserArch,
    seed: u64,
) -> Result<TrainedModel> {
    dcfg.validate()?;
    arch.validate()?;
    if records.is_empty() {
        return Err(Error::TooFewRecords { got: 0, needed: 1 });
    }
    let family = records[0].family;
    for r in records {
        if r.family != family {
            return Err(Error::FamilyMismatch {
                expected: family.to_string(),
                got: r.family.to_string(),
            });
        }
    }
    if arch.input_dim != family.n_params() {
        return Err(Error::ShapeMismatch(format!(
            "arch input_dim {} != family parameter count {}",
            arch.input_dim,
            family.n_params()
        )));
    }
    let sched = linear_schedule(dcfg)?;

    // encode every record once: wrapped, normalized grids
    let items: Vec<TrainItem> = records
        .iter()
        .map(|r| {
            let task = build_task(r.family, &r.params, r.seed)?;
            let grid = encode_grid(&task.layout, &r.theta_opt)?;
            Ok((normalize_grid(&grid)?, r.conditioning.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut params = init_denoiser(arch, derive_seed(seed, 0))?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let n_weights = params.n_weights();
    let mut adam = crate::vqe::AdamState::new(n_weights);
    let mut loss_history = Vec::with_capacity(dcfg.epochs);

    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..dcfg.epochs {
        let lr = dcfg.learning_rate
            * 0.5
            * (1.0 + (std::f64::consts::PI * epoch as f64 / dcfg.epochs as f64).cos());
        // Fisher-Yates shuffle of the visit order
        for i in (1..order.len()).rev() {
            let j = (rand::RngCore::next_u64(&mut rng) % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut epoch_sq = 0.0;
        let mut epoch_cells = 0usize;
        for chunk in order.chunks(dcfg.batch_size) {
            let batch: Vec<TrainItem> = chunk.iter().map(|&i| items[i].clone()).collect();
            let (loss, grad, cells) = training_step(&params, &batch, &sched, dcfg, &mut rng)?;
            if loss > 1e3 {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_sq += loss * cells as f64;
            epoch_cells += cells;
            adam.apply(&mut params.flat, &grad, lr, 0.9, 0.999, 1e-8)?;
        }
        loss_history.push(epoch_sq / epoch_cells as f64);
    }

    Ok(TrainedModel {
        family,
        arch: *arch,
        diffusion: dcfg.clone(),
        params,
        train_seed: seed,
        loss_history,
    })
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: String,
    family: TaskFamily,
    arch: DenoiserArch,
    diffusion: DiffusionConfig,
    train_seed: u64,
    loss_history: Vec<f64>,
    /// 17-significant-digit decimal strings, bit-exact on reload.
    weights: Vec<String>,
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        schema_version: CHECKPOINT_SCHEMA_VERSION.to_string(),
        family: model.family,
        arch: model.arch,
        diffusion: model.diffusion.clone(),
        train_seed: model.train_seed,
        loss_history: model.loss_history.clone(),
        weights: model.params.flat.iter().map(|w| format!("{w:.16e}")).collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::RecordInvalid {
        line: 1,
        reason: format!("bad checkpoint: {e}"),
    })?;
    if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: file.schema_version,
            supported: CHECKPOINT_SCHEMA_VERSION.to_string(),
        });
    }
    file.arch.validate()?;
    file.diffusion.validate()?;
    if file.weights.len() != file.arch.n_weights() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint has {} weights, arch expects {}",
            file.weights.len(),
            file.arch.n_weights()
        )));
    }
    let mut flat = Vec::with_capacity(file.weights.len());
    for (i, s) in file.weights.iter().enumerate() {
        let v: f64 = s.parse().map_err(|_| Error::RecordInvalid {
            line: 1,
            reason: format!("weight {i} is not a decimal number: '{s}'"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(format!("weight {i}")));
        }
        flat.push(v);
    }
    Ok(TrainedModel {
        family: file.family,
        arch: file.arch,
        diffusion: file.diffusion,
        params: DenoiserParams {
            arch: file.arch,
            flat,
        },
        train_seed: file.train_seed,
        loss_history: file.loss_history,
    })
}
