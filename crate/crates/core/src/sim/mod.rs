//! Exact statevector simulation, Pauli-sum expectations, dense oracles,
//! matrix exponentials, and gate fidelity.
//!
//! Convention used everywhere: qubit 0 is the leftmost symbol of a Pauli
//! string and the most significant bit of a basis index. For an n-qubit
//! register, qubit q therefore corresponds to bit position n-1-q.

mod lanczos;

#[cfg(test)]
mod tests;

pub use lanczos::smallest_eigenvalue;

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt;

pub const DENSE_QUBIT_CAP: usize = 10;
pub const UNITARY_QUBIT_CAP: usize = 4;
pub const EXP_DIM_CAP: usize = 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

// ---------------------------------------------------------------------------
// State vector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0...0> on n qubits.
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        StateVector { n_qubits, amps }
    }

    /// Builds a state from raw amplitudes; the length must be a power of two
    /// and the norm must already be 1 (within 1e-6).
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(Error::InvalidObservable(format!(
                "state length {} is not a power of two",
                amps.len()
            )));
        }
        let n_qubits = amps.len().trailing_zeros() as usize;
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-6 {
            return Err(Error::NonFiniteValue(format!(
                "state norm^2 = {norm_sq}, expected 1"
            )));
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

// ---------------------------------------------------------------------------
// Pauli strings and observables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// Numeric code used in conditioning features: I=0, X=1, Y=2, Z=3.
    pub fn code(self) -> u8 {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Pauli::I),
            1 => Some(Pauli::X),
            2 => Some(Pauli::Y),
            3 => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        PauliString(vec![Pauli::I; n_qubits])
    }

    /// Parses a string like "IXYZ".
    pub fn parse(s: &str) -> Result<Self> {
        let ops = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidObservable(format!(
                    "unknown Pauli symbol '{other}'"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliString(ops))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Places `op` on qubit `q` of an identity string.
    pub fn single(n_qubits: usize, q: usize, op: Pauli) -> Self {
        let mut s = vec![Pauli::I; n_qubits];
        s[q] = op;
        PauliString(s)
    }

    /// Places `op` on qubits `a` and `b` of an identity string.
    pub fn pair(n_qubits: usize, a: usize, b: usize, op: Pauli) -> Self {
        let mut s = vec![Pauli::I; n_qubits];
        s[a] = op;
        s[b] = op;
        PauliString(s)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

/// Weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidObservable("term list is empty".into()));
        }
        for (c, s) in &terms {
            if !c.is_finite() {
                return Err(Error::InvalidObservable(format!(
                    "non-finite coefficient {c}"
                )));
            }
            if s.len() != n_qubits {
                return Err(Error::InvalidObservable(format!(
                    "term {s} has {} qubits, observable has {n_qubits}",
                    s.len()
                )));
            }
        }
        Ok(Observable { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// Adds `coeff * string`, merging with an existing identical string.
    pub fn accumulate(terms: &mut Vec<(f64, PauliString)>, coeff: f64, string: PauliString) {
        if let Some((c, _)) = terms.iter_mut().find(|(_, s)| *s == string) {
            *c += coeff;
        } else {
            terms.push((coeff, string));
        }
    }
}

// ---------------------------------------------------------------------------
// Gates and circuit layouts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Cnot => "CNOT",
        }
    }
}

/// Where a rotation gate takes its angle from. Fixed angles cover drift
/// segments that are part of the layout but not trainable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Param(usize),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<AngleSource>,
}

impl GateOp {
    pub fn rx(target: usize, param: usize) -> Self {
        GateOp { kind: GateKind::Rx, target, control: None, angle: Some(AngleSource::Param(param)) }
    }

    pub fn ry(target: usize, param: usize) -> Self {
        GateOp { kind: GateKind::Ry, target, control: None, angle: Some(AngleSource::Param(param)) }
    }

    pub fn rz(target: usize, param: usize) -> Self {
        GateOp { kind: GateKind::Rz, target, control: None, angle: Some(AngleSource::Param(param)) }
    }

    pub fn rz_fixed(target: usize, angle: f64) -> Self {
        GateOp { kind: GateKind::Rz, target, control: None, angle: Some(AngleSource::Fixed(angle)) }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        GateOp { kind: GateKind::Cnot, target, control: Some(control), angle: None }
    }

    pub fn param_index(&self) -> Option<usize> {
        match self.angle {
            Some(AngleSource::Param(k)) => Some(k),
            _ => None,
        }
    }

    fn resolve_angle(&self, theta: &[f64]) -> Result<f64> {
        match self.angle {
            Some(AngleSource::Param(k)) => theta.get(k).copied().ok_or_else(|| {
                Error::ParamIndexOutOfRange {
                    gate: self.kind.name().into(),
                    index: k,
                    n_params: theta.len(),
                }
            }),
            Some(AngleSource::Fixed(a)) => Ok(a),
            None => Ok(0.0),
        }
    }
}

/// Trainable angles of an ansatz.
pub type ParamVector = Vec<f64>;

/// Fixed ansatz topology: ordered gates over an n-qubit register with
/// `n_params` trainable angles and a nominal layer count.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitLayout {
    pub n_qubits: usize,
    pub gates: Vec<GateOp>,
    pub n_params: usize,
    pub depth: usize,
}

impl CircuitLayout {
    /// Validates qubit bounds, control/target distinctness, the
    /// parameterized/unparameterized split, and gap-free parameter coverage.
    pub fn new(n_qubits: usize, gates: Vec<GateOp>, depth: usize) -> Result<Self> {
        let mut seen: Vec<bool> = Vec::new();
        for g in &gates {
            if g.target >= n_qubits {
                return Err(Error::QubitOutOfRange {
                    gate: g.kind.name().into(),
                    qubit: g.target,
                    n_qubits,
                });
            }
            match g.kind {
                GateKind::Cnot => {
                    let c = g.control.ok_or_else(|| {
                        Error::InvalidLayout("CNOT without a control qubit".into())
                    })?;
                    if c >= n_qubits {
                        return Err(Error::QubitOutOfRange {
                            gate: "CNOT".into(),
                            qubit: c,
                            n_qubits,
                        });
                    }
                    if c == g.target {
                        return Err(Error::InvalidLayout(
                            "CNOT control equals target".into(),
                        ));
                    }
                    if g.angle.is_some() {
                        return Err(Error::InvalidLayout("CNOT carries an angle".into()));
                    }
                }
                _ => {
                    if g.control.is_some() {
                        return Err(Error::InvalidLayout(format!(
                            "{} carries a control qubit",
                            g.kind.name()
                        )));
                    }
                    if g.angle.is_none() {
                        return Err(Error::InvalidLayout(format!(
                            "{} without an angle source",
                            g.kind.name()
                        )));
                    }
                }
            }
            if let Some(k) = g.param_index() {
                if k >= seen.len() {
                    seen.resize(k + 1, false);
                }
                if seen[k] {
                    return Err(Error::InvalidLayout(format!(
                        "parameter index {k} used twice"
                    )));
                }
                seen[k] = true;
            }
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidLayout(format!(
                "parameter index {gap} unused (indices must cover 0..n_params)"
            )));
        }
        Ok(CircuitLayout {
            n_qubits,
            n_params: seen.len(),
            gates,
            depth,
        })
    }
}

// ---------------------------------------------------------------------------
// Gate application
// ---------------------------------------------------------------------------

fn rotation_matrix(kind: GateKind, angle: f64) -> [Complex64; 4] {
    let half = angle / 2.0;
    let (c, s) = (half.cos(), half.sin());
    match kind {
        GateKind::Rx => [
            Complex64::new(c, 0.0),
            Complex64::new(0.0, -s),
            Complex64::new(0.0, -s),
            Complex64::new(c, 0.0),
        ],
        GateKind::Ry => [
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ],
        GateKind::Rz => [
            Complex64::new(c, -s),
            ZERO,
            ZERO,
            Complex64::new(c, s),
        ],
        GateKind::Cnot => unreachable!("CNOT has no rotation matrix"),
    }
}

fn apply_gate_in_place(
    amps: &mut [Complex64],
    n_qubits: usize,
    gate: &GateOp,
    theta: &[f64],
) -> Result<()> {
    if gate.target >= n_qubits {
        return Err(Error::QubitOutOfRange {
            gate: gate.kind.name().into(),
            qubit: gate.target,
            n_qubits,
        });
    }
    match gate.kind {
        GateKind::Cnot => {
            let control = gate.control.ok_or_else(|| {
                Error::InvalidLayout("CNOT without a control qubit".into())
            })?;
            if control >= n_qubits {
                return Err(Error::QubitOutOfRange {
                    gate: "CNOT".into(),
                    qubit: control,
                    n_qubits,
                });
            }
            let cb = 1usize << (n_qubits - 1 - control);
            let tb = 1usize << (n_qubits - 1 - gate.target);
            for i in 0..amps.len() {
                if i & cb != 0 && i & tb == 0 {
                    amps.swap(i, i | tb);
                }
            }
        }
        kind => {
            let angle = gate.resolve_angle(theta)?;
            let [u00, u01, u10, u11] = rotation_matrix(kind, angle);
            let tb = 1usize << (n_qubits - 1 - gate.target);
            for i in 0..amps.len() {
                if i & tb == 0 {
                    let j = i | tb;
                    let a = amps[i];
                    let b = amps[j];
                    amps[i] = u00 * a + u01 * b;
                    amps[j] = u10 * a + u11 * b;
                }
            }
        }
    }
    Ok(())
}

/// Applies one gate to a state, returning the updated state.
pub fn apply_gate(state: &StateVector, gate: &GateOp, theta: &[f64]) -> Result<StateVector> {
    let mut out = state.clone();
    apply_gate_in_place(&mut out.amps, out.n_qubits, gate, theta)?;
    Ok(out)
}

/// Runs the full layout on |0...0>.
pub fn run_circuit(layout: &CircuitLayout, theta: &[f64]) -> Result<StateVector> {
    if theta.len() != layout.n_params {
        return Err(Error::ParamCountMismatch {
            expected: layout.n_params,
            got: theta.len(),
        });
    }
    let mut state = StateVector::zero_state(layout.n_qubits);
    for gate in &layout.gates {
        apply_gate_in_place(&mut state.amps, state.n_qubits, gate, theta)?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Expectation values
// ---------------------------------------------------------------------------

/// Per-term action on a basis state: P|b> = phase(b) |b ^ flip_mask>.
/// X flips; Y flips with phase i*(-1)^bit; Z applies (-1)^bit.
struct TermAction {
    flip_mask: usize,
    sign_mask: usize,
    base_phase: Complex64,
}

fn term_action(s: &PauliString, n_qubits: usize) -> TermAction {
    let mut flip_mask = 0usize;
    let mut sign_mask = 0usize;
    let mut n_y = 0usize;
    for (q, p) in s.0.iter().enumerate() {
        let bit = 1usize << (n_qubits - 1 - q);
        match p {
            Pauli::I => {}
            Pauli::X => flip_mask |= bit,
            Pauli::Y => {
                flip_mask |= bit;
                sign_mask |= bit;
                n_y += 1;
            }
            Pauli::Z => sign_mask |= bit,
        }
    }
    let base_phase = match n_y % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    TermAction { flip_mask, sign_mask, base_phase }
}

/// <psi| obs |psi>. The imaginary residue is checked against 1e-8 and
/// discarded.
pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    if state.n_qubits != obs.n_qubits {
        return Err(Error::QubitCountMismatch {
            state: state.n_qubits,
            observable: obs.n_qubits,
        });
    }
    let mut total = ZERO;
    for (coeff, s) in &obs.terms {
        let act = term_action(s, obs.n_qubits);
        let mut acc = ZERO;
        for (b, amp) in state.amps.iter().enumerate() {
            let sign = if (b & act.sign_mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += state.amps[b ^ act.flip_mask].conj() * amp * sign;
        }
        total += act.base_phase * acc * *coeff;
    }
    if total.im.abs() > 1e-8 {
        return Err(Error::ImaginaryResidue { residue: total.im.abs() });
    }
    Ok(total.re)
}

// ---------------------------------------------------------------------------
// Dense complex matrices
// ---------------------------------------------------------------------------

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

/// Outputs of `circuit_unitary` / `hermitian_exp`; unitarity is enforced by
/// those constructors rather than by the type itself.
pub type UnitaryMatrix = CMatrix;

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.dim, v.len());
        let n = self.dim;
        let mut out = vec![ZERO; n];
        for i in 0..n {
            let mut acc = ZERO;
            for j in 0..n {
                acc += self.data[i * n + j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max |(U^dag U - I)_ij|.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&CMatrix::identity(self.dim))
    }

    /// max |(H - H^dag)_ij|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }
}

/// Dense matrix of an observable (Kronecker-product construction),
/// capped at `DENSE_QUBIT_CAP` qubits.
pub fn pauli_matrix(obs: &Observable) -> Result<CMatrix> {
    if obs.n_qubits > DENSE_QUBIT_CAP {
        return Err(Error::SizeCapExceeded {
            n_qubits: obs.n_qubits,
            cap: DENSE_QUBIT_CAP,
        });
    }
    let dim = 1usize << obs.n_qubits;
    let mut m = CMatrix::zeros(dim);
    for (coeff, s) in &obs.terms {
        let act = term_action(s, obs.n_qubits);
        for col in 0..dim {
            let sign = if (col & act.sign_mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let row = col ^ act.flip_mask;
            let v = act.base_phase * *coeff * sign;
            m.data[row * dim + col] += v;
        }
    }
    Ok(m)
}

/// Smallest eigenvalue of the observable's dense matrix, via Lanczos with
/// full reorthogonalization. The Rayleigh residual ||Hv - lambda v|| is
/// verified below 1e-8.
pub fn ground_energy(obs: &Observable) -> Result<f64> {
    let h = pauli_matrix(obs)?;
    smallest_eigenvalue(&h, 1e-8)
}

/// Dense unitary of a circuit: ordered product of per-gate dense matrices.
pub fn circuit_unitary(layout: &CircuitLayout, theta: &[f64]) -> Result<UnitaryMatrix> {
    if layout.n_qubits > UNITARY_QUBIT_CAP {
        return Err(Error::SizeCapExceeded {
            n_qubits: layout.n_qubits,
            cap: UNITARY_QUBIT_CAP,
        });
    }
    if theta.len() != layout.n_params {
        return Err(Error::ParamCountMismatch {
            expected: layout.n_params,
            got: theta.len(),
        });
    }
    let dim = 1usize << layout.n_qubits;
    let mut u = CMatrix::identity(dim);
    for gate in &layout.gates {
        let g = gate_matrix_dense(gate, theta, layout.n_qubits)?;
        u = g.matmul(&u);
    }
    let defect = u.unitarity_defect();
    if defect > 1e-8 {
        return Err(Error::InvalidLayout(format!(
            "circuit unitary defect {defect:e}"
        )));
    }
    Ok(u)
}

/// Embeds one gate into the full 2^n x 2^n matrix.
fn gate_matrix_dense(gate: &GateOp, theta: &[f64], n_qubits: usize) -> Result<CMatrix> {
    let dim = 1usize << n_qubits;
    let mut m = CMatrix::zeros(dim);
    match gate.kind {
        GateKind::Cnot => {
            let control = gate
                .control
                .ok_or_else(|| Error::InvalidLayout("CNOT without a control qubit".into()))?;
            let cb = 1usize << (n_qubits - 1 - control);
            let tb = 1usize << (n_qubits - 1 - gate.target);
            for col in 0..dim {
                let row = if col & cb != 0 { col ^ tb } else { col };
                m.data[row * dim + col] = ONE;
            }
        }
        kind => {
            let angle = gate.resolve_angle(theta)?;
            let [u00, u01, u10, u11] = rotation_matrix(kind, angle);
            let tb = 1usize << (n_qubits - 1 - gate.target);
            for col in 0..dim {
                if col & tb == 0 {
                    m.data[col * dim + col] = u00;
                    m.data[(col | tb) * dim + col] = u10;
                } else {
                    m.data[col * dim + col] = u11;
                    m.data[(col ^ tb) * dim + col] = u01;
                }
            }
        }
    }
    Ok(m)
}

/// exp(-i H t) for Hermitian H via scaling-and-squaring with a truncated
/// Taylor series. Dimension capped at `EXP_DIM_CAP`.
pub fn hermitian_exp(h: &CMatrix, t: f64) -> Result<UnitaryMatrix> {
    if h.dim > EXP_DIM_CAP {
        return Err(Error::SizeCapExceeded {
            n_qubits: h.dim,
            cap: EXP_DIM_CAP,
        });
    }
    let dev = h.hermiticity_defect();
    if dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: dev });
    }
    // A = -i t H
    let a = h.scale(Complex64::new(0.0, -t));
    // Scale so the max row sum drops below 1/2, series-expand, square back.
    let norm: f64 = (0..a.dim)
        .map(|i| (0..a.dim).map(|j| a.get(i, j).norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale(Complex64::new(1.0 / 2f64.powi(squarings as i32), 0.0));
    let mut result = CMatrix::identity(a.dim);
    let mut term = CMatrix::identity(a.dim);
    for k in 1..=24 {
        term = term.matmul(&scaled).scale(Complex64::new(1.0 / k as f64, 0.0));
        result = result.add(&term);
        let term_norm = term.data.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if term_norm < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    let defect = result.unitarity_defect();
    if defect > 1e-8 {
        return Err(Error::NotHermitian { deviation: defect });
    }
    Ok(result)
}

/// |Tr(U^dag V)| / d.
pub fn gate_fidelity(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    if u.dim != v.dim {
        return Err(Error::DimensionMismatch { left: u.dim, right: v.dim });
    }
    let mut tr = ZERO;
    let n = u.dim;
    for i in 0..n {
        for k in 0..n {
            tr += u.data[k * n + i].conj() * v.data[k * n + i];
        }
    }
    Ok(tr.norm() / n as f64)
}
