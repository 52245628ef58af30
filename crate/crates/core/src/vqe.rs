//! Gradient-based optimization of task losses: parameter-shift gradients,
//! Adam updates, full trajectories, and convergence-step detection.

use crate::error::{Error, Result};
use crate::sim::GateKind;
use crate::tasks::{task_loss, TaskInstance};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    /// Convergence window length w.
    pub window: usize,
    /// Convergence tolerance tau.
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps: 500,
            window: 10,
            tol: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // max_steps = 0 is allowed as a degenerate evaluate-only run
        if self.window < 1 || (self.max_steps != 0 && self.max_steps < self.window) {
            return Err(Error::InvalidConfig(format!(
                "need max_steps >= window >= 1, got max_steps={} window={}",
                self.max_steps, self.window
            )));
        }
        if self.learning_rate <= 0.0 || self.tol <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One optimization run: every loss (including the initial one), the final
/// parameters, and the detected convergence step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub losses: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub converged_step: Option<usize>,
}

/// Exact gradient via the +-pi/2 parameter-shift rule. Both loss kinds are
/// degree-1 trigonometric polynomials in each angle (the pulse loss because
/// it uses squared fidelity), so the rule is exact for every family.
pub fn parameter_shift_grad(task: &TaskInstance, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != task.layout.n_params {
        return Err(Error::ParamCountMismatch {
            expected: task.layout.n_params,
            got: theta.len(),
        });
    }
    for gate in &task.layout.gates {
        if gate.param_index().is_some() && gate.kind == GateKind::Cnot {
            return Err(Error::UnsupportedParameterizedGate {
                gate: gate.kind.name().into(),
            });
        }
    }
    let mut shifted = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        shifted[k] = theta[k] + FRAC_PI_2;
        let plus = task_loss(task, &shifted)?;
        shifted[k] = theta[k] - FRAC_PI_2;
        let minus = task_loss(task, &shifted)?;
        shifted[k] = theta[k];
        grad.push(0.5 * (plus - minus));
    }
    Ok(grad)
}

/// Adam moment buffers; `step` counts completed updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `theta` in place.
    pub fn apply(
        &mut self,
        theta: &mut [f64],
        grad: &[f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<()> {
        if grad.len() != theta.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                left: theta.len(),
                right: grad.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..theta.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Convenience wrapper using the config's hyperparameters.
pub fn adam_step(
    state: &mut AdamState,
    theta: &mut [f64],
    grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<()> {
    state.apply(theta, grad, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
}

/// Runs Adam on parameter-shift gradients for `cfg.max_steps` steps,
/// recording every loss. Deterministic in all inputs.
pub fn optimize(task: &TaskInstance, theta0: &[f64], cfg: &OptimizerConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut theta = theta0.to_vec();
    let mut losses = Vec::with_capacity(cfg.max_steps + 1);
    let initial = task_loss(task, &theta)?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    losses.push(initial);
    let mut adam = AdamState::new(theta.len());
    for step in 1..=cfg.max_steps {
        let grad = parameter_shift_grad(task, &theta)?;
        adam_step(&mut adam, &mut theta, &grad, cfg)?;
        let loss = task_loss(task, &theta)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        losses.push(loss);
    }
    let converged_step = detect_convergence(&losses, cfg.window, cfg.tol);
    Ok(Trajectory {
        losses,
        final_theta: theta,
        converged_step,
    })
}

/// Smallest step s >= w whose trailing window losses[s-w ..= s] has
/// max - min < tau; `None` if the trajectory never settles.
pub fn detect_convergence(losses: &[f64], w: usize, tau: f64) -> Option<usize> {
    if w < 1 {
        return None;
    }
    for s in w..losses.len() {
        let window = &losses[s - w..=s];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in window {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if hi - lo < tau {
            return Some(s);
        }
    }
    None
}
