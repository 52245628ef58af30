//! The noise-prediction network: a conditional residual MLP with sinusoidal
//! time embedding and a learned null embedding for guidance dropout, with
//! exact hand-rolled reverse-mode gradients.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal};
use crate::tasks::CONDITIONING_LEN;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserArch {
    /// Occupied-cell count of the family's grid.
    pub input_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
    pub feature_dim: usize,
}

impl DenoiserArch {
    pub fn for_input_dim(input_dim: usize) -> Self {
        DenoiserArch {
            input_dim,
            hidden: 128,
            blocks: 4,
            time_dim: 32,
            cond_dim: 32,
            feature_dim: CONDITIONING_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden == 0
            || self.blocks == 0
            || self.time_dim == 0
            || self.cond_dim == 0
            || self.feature_dim == 0
        {
            return Err(Error::InvalidConfig("denoiser dims must be positive".into()));
        }
        if self.time_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "sinusoidal time embedding needs an even dim, got {}",
                self.time_dim
            )));
        }
        Ok(())
    }

    /// Total scalar parameter count.
    pub fn n_weights(&self) -> usize {
        let (h, i, td, cd, fd) = (
            self.hidden,
            self.input_dim,
            self.time_dim,
            self.cond_dim,
            self.feature_dim,
        );
        h * i + h            // input projection + bias
            + h * td         // time projection
            + h * cd         // condition projection into hidden
            + cd * fd + cd   // feature embedding + bias
            + cd             // null embedding
            + self.blocks * (2 * h * h + 2 * h)
            + i * h + i      // output projection + bias
    }
}

/// Offsets of each tensor inside the flat weight vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub(crate) w_in: usize,
    pub(crate) b_in: usize,
    pub(crate) w_time: usize,
    pub(crate) w_cond: usize,
    pub(crate) cond_w: usize,
    pub(crate) cond_b: usize,
    pub(crate) null_emb: usize,
    pub(crate) blocks: usize,
    pub(crate) block_stride: usize,
    pub(crate) w_out: usize,
    pub(crate) b_out: usize,
}

pub(crate) fn offsets(a: &DenoiserArch) -> Offsets {
    let (h, i, td, cd, fd) = (a.hidden, a.input_dim, a.time_dim, a.cond_dim, a.feature_dim);
    let w_in = 0;
    let b_in = w_in + h * i;
    let w_time = b_in + h;
    let w_cond = w_time + h * td;
    let cond_w = w_cond + h * cd;
    let cond_b = cond_w + cd * fd;
    let null_emb = cond_b + cd;
    let blocks = null_emb + cd;
    let block_stride = 2 * h * h + 2 * h;
    let w_out = blocks + a.blocks * block_stride;
    let b_out = w_out + i * h;
    Offsets {
        w_in,
        b_in,
        w_time,
        w_cond,
        cond_w,
        cond_b,
        null_emb,
        blocks,
        block_stride,
        w_out,
        b_out,
    }
}

/// Network weights in one flat buffer (simplifies Adam, checkpointing, and
/// finite-difference checks).
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub arch: DenoiserArch,
    pub flat: Vec<f64>,
}

/// What the prediction is conditioned on.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    Features(&'a [f64]),
    Null,
}

/// Intermediates captured by `forward_cached` for the backward pass.
pub struct DenoiserTape {
    x: Vec<f64>,
    temb: Vec<f64>,
    gamma: Vec<f64>,
    features: Option<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    a1s: Vec<Vec<f64>>,
}

/// Interleaved (sin, cos) pairs at frequencies 10000^{-2k/dim}.
pub fn sinusoidal_embed(t: usize, dim: usize, t_max: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "sinusoidal embedding dim must be even, got {dim}"
        )));
    }
    if t > t_max {
        return Err(Error::TimestepOutOfRange { t, t_max });
    }
    Ok(sinusoidal_unchecked(t, dim))
}

fn sinusoidal_unchecked(t: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for k in 0..dim / 2 {
        let omega = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        let arg = t as f64 * omega;
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
    out
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_deriv(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// out = W x  (W is rows x cols, row-major)
fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out[r] = acc;
    }
}

/// out += W^T y
fn matvec_transpose_acc(w: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let yr = y[r];
        for (o, wi) in out.iter_mut().zip(row) {
            *o += yr * wi;
        }
    }
}

/// grad += up (outer) x
fn outer_acc(grad: &mut [f64], up: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, ur) in up.iter().enumerate() {
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, xi) in row.iter_mut().zip(x) {
            *g += ur * xi;
        }
    }
}

fn add_acc(grad: &mut [f64], up: &[f64]) {
    for (g, u) in grad.iter_mut().zip(up) {
        *g += u;
    }
}

/// Variance-scaled hidden weights, zero biases, zero output projection,
/// null embedding ~ N(0, 1/cond_dim). Deterministic by seed.
pub fn init_denoiser(arch: &DenoiserArch, seed: u64) -> Result<DenoiserParams> {
    arch.validate()?;
    let off = offsets(arch);
    let (h, i, td, cd, fd) = (arch.hidden, arch.input_dim, arch.time_dim, arch.cond_dim, arch.feature_dim);
    let mut flat = vec![0.0; arch.n_weights()];
    let mut rng = rng_from_seed(seed);
    let mut fill = |range: std::ops::Range<usize>, std: f64, flat: &mut Vec<f64>| {
        for idx in range {
            flat[idx] = std * standard_normal(&mut rng);
        }
    };
    fill(off.w_in..off.w_in + h * i, (2.0 / i as f64).sqrt(), &mut flat);
    fill(off.w_time..off.w_time + h * td, (2.0 / td as f64).sqrt(), &mut flat);
    fill(off.w_cond..off.w_cond + h * cd, (2.0 / cd as f64).sqrt(), &mut flat);
    fill(off.cond_w..off.cond_w + cd * fd, (2.0 / fd as f64).sqrt(), &mut flat);
    fill(off.null_emb..off.null_emb + cd, (1.0 / cd as f64).sqrt(), &mut flat);
    for b in 0..arch.blocks {
        let base = off.blocks + b * off.block_stride;
        fill(base..base + h * h, (2.0 / h as f64).sqrt(), &mut flat);
        // b1 zero
        let w2 = base + h * h + h;
        fill(w2..w2 + h * h, (2.0 / h as f64).sqrt(), &mut flat);
        // b2 zero
    }
    // output projection stays exactly zero
    Ok(DenoiserParams { arch: *arch, flat })
}

impl DenoiserParams {
    pub fn n_weights(&self) -> usize {
        self.flat.len()
    }

    fn check_inputs(&self, x: &[f64], cond: &Conditioning) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input length {} != input_dim {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        if let Conditioning::Features(c) = cond {
            if c.len() != self.arch.feature_dim {
                return Err(Error::ShapeMismatch(format!(
                    "feature length {} != feature_dim {}",
                    c.len(),
                    self.arch.feature_dim
                )));
            }
        }
        Ok(())
    }

    /// Predicted noise for input `x` at timestep `t`.
    pub fn forward(&self, x: &[f64], t: usize, cond: Conditioning) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x, t, cond)?.0)
    }

    /// Forward pass that keeps every intermediate needed by `backward`.
    pub fn forward_cached(
        &self,
        x: &[f64],
        t: usize,
        cond: Conditioning,
    ) -> Result<(Vec<f64>, DenoiserTape)> {
        self.check_inputs(x, &cond)?;
        let a = &self.arch;
        let off = offsets(a);
        let (h, i, td, cd, fd) = (a.hidden, a.input_dim, a.time_dim, a.cond_dim, a.feature_dim);
        let w = &self.flat;

        let temb = sinusoidal_unchecked(t, td);
        let (gamma, features) = match cond {
            Conditioning::Features(c) => {
                let mut g = vec![0.0; cd];
                matvec(&w[off.cond_w..off.cond_w + cd * fd], cd, fd, c, &mut g);
                for (gi, bi) in g.iter_mut().zip(&w[off.cond_b..off.cond_b + cd]) {
                    *gi += bi;
                }
                (g, Some(c.to_vec()))
            }
            Conditioning::Null => (w[off.null_emb..off.null_emb + cd].to_vec(), None),
        };

        let mut h0 = vec![0.0; h];
        matvec(&w[off.w_in..off.w_in + h * i], h, i, x, &mut h0);
        add_acc(&mut h0, &w[off.b_in..off.b_in + h]);
        let mut tmp = vec![0.0; h];
        matvec(&w[off.w_time..off.w_time + h * td], h, td, &temb, &mut tmp);
        add_acc(&mut h0, &tmp);
        matvec(&w[off.w_cond..off.w_cond + h * cd], h, cd, &gamma, &mut tmp);
        add_acc(&mut h0, &tmp);

        let mut hs = vec![h0];
        let mut a1s = Vec::with_capacity(a.blocks);
        for b in 0..a.blocks {
            let base = off.blocks + b * off.block_stride;
            let w1 = &w[base..base + h * h];
            let b1 = &w[base + h * h..base + h * h + h];
            let w2 = &w[base + h * h + h..base + 2 * h * h + h];
            let b2 = &w[base + 2 * h * h + h..base + 2 * h * h + 2 * h];
            let prev = hs.last().unwrap();
            let mut a1 = vec![0.0; h];
            matvec(w1, h, h, prev, &mut a1);
            add_acc(&mut a1, b1);
            let s: Vec<f64> = a1.iter().map(|&v| silu(v)).collect();
            let mut next = prev.clone();
            let mut ws = vec![0.0; h];
            matvec(w2, h, h, &s, &mut ws);
            add_acc(&mut next, &ws);
            add_acc(&mut next, b2);
            a1s.push(a1);
            hs.push(next);
        }

        let mut out = vec![0.0; i];
        matvec(&w[off.w_out..off.w_out + i * h], i, h, hs.last().unwrap(), &mut out);
        add_acc(&mut out, &w[off.b_out..off.b_out + i]);

        Ok((
            out,
            DenoiserTape {
                x: x.to_vec(),
                temb,
                gamma,
                features,
                hs,
                a1s,
            },
        ))
    }

    /// Accumulates d(loss)/d(weights) into `grad` (same layout as `flat`)
    /// given d(loss)/d(output). The null embedding only receives gradient on
    /// passes where it was selected.
    pub fn backward(&self, tape: &DenoiserTape, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        if upstream.len() != self.arch.input_dim || grad.len() != self.flat.len() {
            return Err(Error::ShapeMismatch(
                "backward buffer sizes disagree with the architecture".into(),
            ));
        }
        let a = &self.arch;
        let off = offsets(a);
        let (h, i, td, cd, fd) = (a.hidden, a.input_dim, a.time_dim, a.cond_dim, a.feature_dim);
        let w = &self.flat;

        let h_last = tape.hs.last().unwrap();
        outer_acc(&mut grad[off.w_out..off.w_out + i * h], upstream, h_last);
        add_acc(&mut grad[off.b_out..off.b_out + i], upstream);
        let mut dh = vec![0.0; h];
        matvec_transpose_acc(&w[off.w_out..off.w_out + i * h], i, h, upstream, &mut dh);

        for b in (0..a.blocks).rev() {
            let base = off.blocks + b * off.block_stride;
            let w1 = &w[base..base + h * h];
            let w2 = &w[base + h * h + h..base + 2 * h * h + h];
            let a1 = &tape.a1s[b];
            let h_prev = &tape.hs[b];
            let s: Vec<f64> = a1.iter().map(|&v| silu(v)).collect();
            outer_acc(&mut grad[base + h * h + h..base + 2 * h * h + h], &dh, &s);
            add_acc(&mut grad[base + 2 * h * h + h..base + 2 * h * h + 2 * h], &dh);
            let mut ds = vec![0.0; h];
            matvec_transpose_acc(w2, h, h, &dh, &mut ds);
            let da1: Vec<f64> = ds
                .iter()
                .zip(a1)
                .map(|(d, &v)| d * silu_deriv(v))
                .collect();
            outer_acc(&mut grad[base..base + h * h], &da1, h_prev);
            add_acc(&mut grad[base + h * h..base + h * h + h], &da1);
            matvec_transpose_acc(w1, h, h, &da1, &mut dh);
        }

        outer_acc(&mut grad[off.w_in..off.w_in + h * i], &dh, &tape.x);
        add_acc(&mut grad[off.b_in..off.b_in + h], &dh);
        outer_acc(&mut grad[off.w_time..off.w_time + h * td], &dh, &tape.temb);
        outer_acc(&mut grad[off.w_cond..off.w_cond + h * cd], &dh, &tape.gamma);

        let mut dgamma = vec![0.0; cd];
        matvec_transpose_acc(&w[off.w_cond..off.w_cond + h * cd], h, cd, &dh, &mut dgamma);
        match &tape.features {
            Some(c) => {
                outer_acc(&mut grad[off.cond_w..off.cond_w + cd * fd], &dgamma, c);
                add_acc(&mut grad[off.cond_b..off.cond_b + cd], &dgamma);
            }
            None => {
                add_acc(&mut grad[off.null_emb..off.null_emb + cd], &dgamma);
            }
        }
        Ok(())
    }

    /// Slice of the output-projection weights (zero right after init).
    pub fn output_projection(&self) -> &[f64] {
        let off = offsets(&self.arch);
        &self.flat[off.w_out..]
    }
}
