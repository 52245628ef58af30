//! The five task families: Hamiltonian/target construction, ansatz layout,
//! loss, prompt text, and numeric conditioning features.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform_in, SeededRng};
use crate::sim::{
    self, CircuitLayout, GateOp, Observable, Pauli, PauliString, UnitaryMatrix,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Fixed width of the numeric conditioning vector.
pub const CONDITIONING_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskFamily {
    #[serde(rename = "1d_xyz")]
    Xyz1d,
    #[serde(rename = "1d_fh")]
    Fh1d,
    #[serde(rename = "2d_tfi")]
    Tfi2d,
    #[serde(rename = "q_pulse")]
    QPulse,
    #[serde(rename = "random_vqe")]
    RandomVqe,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::Xyz1d,
        TaskFamily::Fh1d,
        TaskFamily::Tfi2d,
        TaskFamily::QPulse,
        TaskFamily::RandomVqe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::Xyz1d => "1d_xyz",
            TaskFamily::Fh1d => "1d_fh",
            TaskFamily::Tfi2d => "2d_tfi",
            TaskFamily::QPulse => "q_pulse",
            TaskFamily::RandomVqe => "random_vqe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" | "1d_xyz" => Ok(TaskFamily::Xyz1d),
            "fh" | "1d_fh" => Ok(TaskFamily::Fh1d),
            "tfi" | "2d_tfi" => Ok(TaskFamily::Tfi2d),
            "qpulse" | "q_pulse" => Ok(TaskFamily::QPulse),
            "random" | "random_vqe" => Ok(TaskFamily::RandomVqe),
            other => Err(Error::InvalidConfig(format!("unknown family '{other}'"))),
        }
    }

    /// Task-parameter arity (RandomVqe is seed-driven and takes none).
    pub fn arity(&self) -> usize {
        match self {
            TaskFamily::Xyz1d => 3,
            TaskFamily::Fh1d => 2,
            TaskFamily::Tfi2d => 2,
            TaskFamily::QPulse => 4,
            TaskFamily::RandomVqe => 0,
        }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            TaskFamily::Xyz1d | TaskFamily::Fh1d | TaskFamily::RandomVqe => 4,
            TaskFamily::Tfi2d => 8,
            TaskFamily::QPulse => 2,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            TaskFamily::Xyz1d | TaskFamily::Fh1d => 8,
            TaskFamily::Tfi2d => 16,
            TaskFamily::QPulse => 24,
            TaskFamily::RandomVqe => 48,
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete problem instance: loss target plus its fixed ansatz.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub family: TaskFamily,
    pub params: Vec<f64>,
    pub observable: Option<Observable>,
    pub target_unitary: Option<UnitaryMatrix>,
    pub layout: CircuitLayout,
    pub prompt: String,
}

// ---------------------------------------------------------------------------
// Ansatz layouts
// ---------------------------------------------------------------------------

fn cnot_ring(gates: &mut Vec<GateOp>, n: usize, start: usize) {
    for i in 0..n {
        gates.push(GateOp::cnot((start + i) % n, (start + i + 1) % n));
    }
}

/// Two RY layers with staggered CNOT rings: n params per layer, 2n total.
/// The stagger (rings starting at qubits 0, 1, then 2) keeps the ground
/// states of the built-in Hamiltonians expressible at this parameter budget.
fn hamiltonian_layout(n: usize) -> CircuitLayout {
    let mut gates = Vec::new();
    for q in 0..n {
        gates.push(GateOp::ry(q, q));
    }
    cnot_ring(&mut gates, n, 0);
    cnot_ring(&mut gates, n, 1);
    for q in 0..n {
        gates.push(GateOp::ry(q, n + q));
    }
    cnot_ring(&mut gates, n, 2);
    CircuitLayout::new(n, gates, 2).expect("built-in layout is valid")
}

/// Four layers of per-qubit RX/RY/RZ triples with CNOT ladders: 48 params.
fn random_vqe_layout() -> CircuitLayout {
    let n = 4;
    let mut gates = Vec::new();
    let mut k = 0;
    for _ in 0..4 {
        for q in 0..n {
            gates.push(GateOp::rx(q, k));
            gates.push(GateOp::ry(q, k + 1));
            gates.push(GateOp::rz(q, k + 2));
            k += 3;
        }
        for q in 0..n - 1 {
            gates.push(GateOp::cnot(q, q + 1));
        }
    }
    CircuitLayout::new(n, gates, 4).expect("built-in layout is valid")
}

/// Four control blocks of per-qubit RX/RY/RZ triples (24 params), each
/// followed by the fixed drift segment exp(-i h0 t/4) realized as fixed-angle
/// RZ gates (h0 is diagonal).
fn q_pulse_layout(h0_zi: f64, h0_iz: f64, t: f64) -> CircuitLayout {
    let dt = t / 4.0;
    let mut gates = Vec::new();
    let mut k = 0;
    for _ in 0..4 {
        for q in 0..2 {
            gates.push(GateOp::rx(q, k));
            gates.push(GateOp::ry(q, k + 1));
            gates.push(GateOp::rz(q, k + 2));
            k += 3;
        }
        gates.push(GateOp::rz_fixed(0, 2.0 * h0_zi * dt));
        gates.push(GateOp::rz_fixed(1, 2.0 * h0_iz * dt));
    }
    CircuitLayout::new(2, gates, 4).expect("built-in layout is valid")
}

// ---------------------------------------------------------------------------
// Hamiltonians
// ---------------------------------------------------------------------------

/// Heisenberg XYZ chain on 4 qubits with the wraparound bond 3 -> 0.
fn xyz_observable(j1: f64, j2: f64, j3: f64) -> Result<Observable> {
    let n = 4;
    let mut terms = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        terms.push((j1, PauliString::pair(n, i, j, Pauli::X)));
        terms.push((j2, PauliString::pair(n, i, j, Pauli::Y)));
        terms.push((j3, PauliString::pair(n, i, j, Pauli::Z)));
    }
    Observable::new(n, terms)
}

/// Spinless Fermi-Hubbard chain on 4 sites (open boundary) under the
/// Jordan-Wigner mapping: hopping -> -(t/2)(XX + YY) per bond, and
/// U n_i n_j -> (U/4)(I - Z_i - Z_j + Z_i Z_j).
fn fh_observable(t: f64, u: f64) -> Result<Observable> {
    let n = 4;
    let mut terms: Vec<(f64, PauliString)> = Vec::new();
    for i in 0..n - 1 {
        let j = i + 1;
        Observable::accumulate(&mut terms, -t / 2.0, PauliString::pair(n, i, j, Pauli::X));
        Observable::accumulate(&mut terms, -t / 2.0, PauliString::pair(n, i, j, Pauli::Y));
        Observable::accumulate(&mut terms, u / 4.0, PauliString::identity(n));
        Observable::accumulate(&mut terms, -u / 4.0, PauliString::single(n, i, Pauli::Z));
        Observable::accumulate(&mut terms, -u / 4.0, PauliString::single(n, j, Pauli::Z));
        Observable::accumulate(&mut terms, u / 4.0, PauliString::pair(n, i, j, Pauli::Z));
    }
    Observable::new(n, terms)
}

/// Ising model on a 2x4 grid with open boundaries (10 nearest-neighbor
/// edges) plus a longitudinal field: -j ZZ on edges, -mu Z on sites.
fn tfi_observable(j: f64, mu: f64) -> Result<Observable> {
    let (rows, cols) = (2, 4);
    let n = rows * cols;
    let mut terms = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let q = r * cols + c;
            if c + 1 < cols {
                terms.push((-j, PauliString::pair(n, q, q + 1, Pauli::Z)));
            }
            if r + 1 < rows {
                terms.push((-j, PauliString::pair(n, q, q + cols, Pauli::Z)));
            }
        }
    }
    for q in 0..n {
        terms.push((-mu, PauliString::single(n, q, Pauli::Z)));
    }
    Observable::new(n, terms)
}

/// Drift-plus-control Hamiltonian h0 + h1 on 2 qubits.
fn q_pulse_hamiltonian(h0_zi: f64, h0_iz: f64, h1_xi: f64) -> Result<Observable> {
    Observable::new(
        2,
        vec![
            (h0_zi, PauliString::parse("ZI")?),
            (h0_iz, PauliString::parse("IZ")?),
            (h1_xi, PauliString::parse("XI")?),
        ],
    )
}

fn random_vqe_observable(seed: u64) -> Result<Observable> {
    let n = 4;
    let mut rng = rng_from_seed(seed);
    let n_terms = if rng.random::<f64>() < 0.5 { 1 } else { 2 };
    let mut terms = Vec::new();
    for _ in 0..n_terms {
        let coeff = uniform_in(&mut rng, -1.0, 1.0);
        let ops: Vec<Pauli> = (0..n)
            .map(|_| Pauli::from_code(rng.random_range(0..4u8)).unwrap())
            .collect();
        terms.push((coeff, PauliString(ops)));
    }
    Observable::new(n, terms)
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

/// Shortest decimal rendering (2.0 -> "2", 0.5 -> "0.5").
fn dec(x: f64) -> String {
    format!("{x}")
}

fn render_prompt(family: TaskFamily, params: &[f64], observable: Option<&Observable>) -> String {
    match family {
        TaskFamily::Xyz1d => format!(
            "(J_1, J_2, J_3) = ({}, {}, {})",
            dec(params[0]),
            dec(params[1]),
            dec(params[2])
        ),
        TaskFamily::Fh1d => format!("(t, U) = ({}, {})", dec(params[0]), dec(params[1])),
        TaskFamily::Tfi2d => format!("(j, \u{03bc}) = ({}, {})", dec(params[0]), dec(params[1])),
        TaskFamily::QPulse => format!(
            "h_0 = {} ZI + {} IZ; h_1 = {} XI; U_t = e^{{-iHt}}",
            dec(params[0]),
            dec(params[1]),
            dec(params[2])
        ),
        TaskFamily::RandomVqe => {
            let obs = observable.expect("random VQE task has an observable");
            let mut out = String::from("Hamiltonian = ");
            for (i, (coeff, string)) in obs.terms().iter().enumerate() {
                let mag = coeff.abs();
                if i == 0 {
                    if *coeff < 0.0 {
                        out.push('-');
                    }
                } else if *coeff < 0.0 {
                    out.push_str(" - ");
                } else {
                    out.push_str(" + ");
                }
                if mag == 1.0 {
                    out.push_str(&string.to_string());
                } else {
                    out.push_str(&format!("{} \u{00b7} {}", dec(mag), string));
                }
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Builds a task instance. `seed` only shapes seed-driven families
/// (RandomVqe); identical arguments produce identical instances.
pub fn build_task(family: TaskFamily, params: &[f64], seed: u64) -> Result<TaskInstance> {
    if params.len() != family.arity() {
        return Err(Error::ArityMismatch {
            family: family.name(),
            expected: family.arity(),
            got: params.len(),
        });
    }
    let (observable, target_unitary, layout) = match family {
        TaskFamily::Xyz1d => (
            Some(xyz_observable(params[0], params[1], params[2])?),
            None,
            hamiltonian_layout(4),
        ),
        TaskFamily::Fh1d => (
            Some(fh_observable(params[0], params[1])?),
            None,
            hamiltonian_layout(4),
        ),
        TaskFamily::Tfi2d => (
            Some(tfi_observable(params[0], params[1])?),
            None,
            hamiltonian_layout(8),
        ),
        TaskFamily::QPulse => {
            let (a, b, c, t) = (params[0], params[1], params[2], params[3]);
            let h = sim::pauli_matrix(&q_pulse_hamiltonian(a, b, c)?)?;
            let target = sim::hermitian_exp(&h, t)?;
            (None, Some(target), q_pulse_layout(a, b, t))
        }
        TaskFamily::RandomVqe => (
            Some(random_vqe_observable(seed)?),
            None,
            random_vqe_layout(),
        ),
    };
    let prompt = render_prompt(family, params, observable.as_ref());
    Ok(TaskInstance {
        family,
        params: params.to_vec(),
        observable,
        target_unitary,
        layout,
        prompt,
    })
}

/// Energy expectation for Hamiltonian families; 1 - fidelity^2 against the
/// target unitary for pulse synthesis.
pub fn task_loss(task: &TaskInstance, theta: &[f64]) -> Result<f64> {
    if theta.len() != task.layout.n_params {
        return Err(Error::ParamCountMismatch {
            expected: task.layout.n_params,
            got: theta.len(),
        });
    }
    match (&task.observable, &task.target_unitary) {
        (Some(obs), None) => {
            let state = sim::run_circuit(&task.layout, theta)?;
            sim::expectation(&state, obs)
        }
        (None, Some(target)) => {
            let u = sim::circuit_unitary(&task.layout, theta)?;
            let f = sim::gate_fidelity(target, &u)?;
            Ok(1.0 - f * f)
        }
        _ => Err(Error::InvalidConfig(
            "task must carry exactly one of observable / target unitary".into(),
        )),
    }
}

/// Numeric stand-in for the prompt embedding: the raw task parameters
/// (models are per-family), zero-padded to `CONDITIONING_LEN`.
pub fn conditioning_features(task: &TaskInstance) -> Result<[f64; CONDITIONING_LEN]> {
    let mut values = Vec::new();
    match task.family {
        TaskFamily::Xyz1d | TaskFamily::Fh1d | TaskFamily::Tfi2d | TaskFamily::QPulse => {
            values.extend_from_slice(&task.params);
        }
        TaskFamily::RandomVqe => {
            let obs = task.observable.as_ref().expect("observable present");
            for (coeff, string) in obs.terms() {
                values.push(*coeff);
                for p in &string.0 {
                    values.push(p.code() as f64);
                }
            }
        }
    }
    if values.len() > CONDITIONING_LEN {
        return Err(Error::FeatureOverflow {
            needed: values.len(),
            slots: CONDITIONING_LEN,
        });
    }
    let mut out = [0.0; CONDITIONING_LEN];
    out[..values.len()].copy_from_slice(&values);
    Ok(out)
}

/// The stored prompt (regenerable from the task fields).
pub fn prompt_text(task: &TaskInstance) -> String {
    task.prompt.clone()
}

// ---------------------------------------------------------------------------
// Parameter sampling ranges (anchored so the representative prompts of each
// family are interior points)
// ---------------------------------------------------------------------------

pub fn sample_task_params(family: TaskFamily, rng: &mut SeededRng) -> Vec<f64> {
    match family {
        TaskFamily::Xyz1d => (0..3).map(|_| uniform_in(rng, 0.0, 2.0)).collect(),
        TaskFamily::Fh1d => vec![uniform_in(rng, 0.1, 1.0), uniform_in(rng, 0.0, 2.0)],
        TaskFamily::Tfi2d => vec![uniform_in(rng, 0.0, 1.0), uniform_in(rng, 0.0, 4.0)],
        TaskFamily::QPulse => vec![
            uniform_in(rng, 0.0, 0.5),
            uniform_in(rng, 0.0, 0.5),
            uniform_in(rng, 0.1, 0.5),
            uniform_in(rng, 0.5, 2.0),
        ],
        TaskFamily::RandomVqe => Vec::new(),
    }
}
