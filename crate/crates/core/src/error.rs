//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A gate references a qubit outside the register.
    QubitOutOfRange {
        gate: String,
        qubit: usize,
        n_qubits: usize,
    },
    /// A parameterized gate references an index outside the parameter vector.
    ParamIndexOutOfRange {
        gate: String,
        index: usize,
        n_params: usize,
    },
    /// Parameter vector length does not match the layout.
    ParamCountMismatch { expected: usize, got: usize },
    /// State and observable act on different register sizes.
    QubitCountMismatch { state: usize, observable: usize },
    /// Dense-matrix operation requested above the supported register size.
    SizeCapExceeded { n_qubits: usize, cap: usize },
    /// Expectation value had a non-negligible imaginary part.
    ImaginaryResidue { residue: f64 },
    /// Matrix expected to be Hermitian was not.
    NotHermitian { deviation: f64 },
    /// Matrix dimensions do not agree.
    DimensionMismatch { left: usize, right: usize },
    /// Lanczos failed to reach the residual target within the iteration cap.
    LanczosNoConvergence { residual: f64, iterations: usize },
    /// Invalid observable definition.
    InvalidObservable(String),
    /// Invalid circuit layout definition.
    InvalidLayout(String),
    /// Task parameter vector has the wrong arity for the family.
    ArityMismatch {
        family: &'static str,
        expected: usize,
        got: usize,
    },
    /// Conditioning features exceed the fixed slot count.
    FeatureOverflow { needed: usize, slots: usize },
    /// A gate kind without a parameter-shift rule was parameterized.
    UnsupportedParameterizedGate { gate: String },
    /// Loss became non-finite during optimization.
    NonFiniteLoss { step: usize },
    /// Invalid optimizer or diffusion configuration.
    InvalidConfig(String),
    /// Noise-schedule construction or lookup failure.
    InvalidSchedule(String),
    /// Timestep outside 1..=T.
    TimestepOutOfRange { t: usize, t_max: usize },
    /// Grid shape does not match the layout.
    GridShapeMismatch(String),
    /// Non-finite value where a finite one is required.
    NonFiniteValue(String),
    /// Denoiser tensor shapes disagree with the architecture.
    ShapeMismatch(String),
    /// Diffusion training diverged.
    Divergence { epoch: usize, loss: f64 },
    /// Dataset has too few records for the requested operation.
    TooFewRecords { got: usize, needed: usize },
    /// Records from different families were mixed.
    FamilyMismatch { expected: String, got: String },
    /// Evaluation requested on an empty test set.
    EmptyTestSet,
    /// Mismatched instance sets in a comparison.
    InstanceSetMismatch,
    /// Persisted file carries an unsupported schema version.
    SchemaVersion { found: String, supported: String },
    /// A persisted line failed to parse or validate.
    RecordInvalid { line: usize, reason: String },
    /// Stored checksum does not match file contents.
    ChecksumMismatch,
    /// Stored final loss does not match the recomputed value.
    FinalLossMismatch { id: u64, stored: f64, recomputed: f64 },
    /// Underlying I/O failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Error::*;
        match self {
            QubitOutOfRange { gate, qubit, n_qubits } => {
                write!(f, "{gate}: qubit {qubit} out of range for {n_qubits}-qubit register")
            }
            ParamIndexOutOfRange { gate, index, n_params } => {
                write!(f, "{gate}: parameter index {index} out of range ({n_params} parameters)")
            }
            ParamCountMismatch { expected, got } => {
                write!(f, "parameter count mismatch: layout expects {expected}, got {got}")
            }
            QubitCountMismatch { state, observable } => {
                write!(f, "qubit count mismatch: state has {state}, observable has {observable}")
            }
            SizeCapExceeded { n_qubits, cap } => {
                write!(f, "dense operation capped at {cap} qubits, got {n_qubits}")
            }
            ImaginaryResidue { residue } => {
                write!(f, "expectation imaginary residue {residue:e} above 1e-8")
            }
            NotHermitian { deviation } => {
                write!(f, "matrix is not Hermitian (max |H - H^dag| = {deviation:e})")
            }
            DimensionMismatch { left, right } => {
                write!(f, "matrix dimension mismatch: {left} vs {right}")
            }
            LanczosNoConvergence { residual, iterations } => {
                write!(f, "Lanczos did not converge after {iterations} iterations (residual {residual:e})")
            }
            InvalidObservable(msg) => write!(f, "invalid observable: {msg}"),
            InvalidLayout(msg) => write!(f, "invalid circuit layout: {msg}"),
            ArityMismatch { family, expected, got } => {
                write!(f, "{family}: expected {expected} task parameters, got {got}")
            }
            FeatureOverflow { needed, slots } => {
                write!(f, "conditioning features need {needed} slots, only {slots} available")
            }
            UnsupportedParameterizedGate { gate } => {
                write!(f, "no parameter-shift rule for parameterized gate {gate}")
            }
            NonFiniteLoss { step } => write!(f, "non-finite loss at optimization step {step}"),
            InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            InvalidSchedule(msg) => write!(f, "invalid noise schedule: {msg}"),
            TimestepOutOfRange { t, t_max } => {
                write!(f, "timestep {t} outside 1..={t_max}")
            }
            GridShapeMismatch(msg) => write!(f, "grid shape mismatch: {msg}"),
            NonFiniteValue(msg) => write!(f, "non-finite value: {msg}"),
            ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Divergence { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch} (loss {loss:e})")
            }
            TooFewRecords { got, needed } => {
                write!(f, "need at least {needed} records, got {got}")
            }
            FamilyMismatch { expected, got } => {
                write!(f, "family mismatch: expected {expected}, got {got}")
            }
            EmptyTestSet => write!(f, "evaluation requires a non-empty test set"),
            InstanceSetMismatch => write!(f, "compared metrics cover different instance sets"),
            SchemaVersion { found, supported } => {
                write!(f, "unsupported schema version {found} (supported: {supported})")
            }
            RecordInvalid { line, reason } => write!(f, "record at line {line}: {reason}"),
            ChecksumMismatch => write!(f, "file checksum does not match contents"),
            FinalLossMismatch { id, stored, recomputed } => {
                write!(f, "record {id}: stored final loss {stored} differs from recomputed {recomputed}")
            }
            Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
