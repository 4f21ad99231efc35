//! Benchmark models, Pauli tensor builders, and the Ising gate compiler.
//!
//! Qubit `0` is the leftmost tensor factor (most significant bit of the
//! computational-basis index).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::format_decimal;
use crate::formulas::{ExponentSchedule, FormulaConfig, FormulaError, FormulaId, Slot};
use crate::linalg::{CMatrix, C64};
use crate::magnus::TwoTermGenerator;
use crate::quadrature::ScalarFn;
use crate::reference::step_windows;

pub const MIN_SITES: usize = 2;
pub const MAX_SITES: usize = 10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("chain length must be in {MIN_SITES}..={MAX_SITES}, got {0}")]
    InvalidSize(usize),
    #[error("ising parameters must be finite")]
    NonFinite,
    #[error("unknown assignment '{0}' (expected A_to_X or A_to_Y)")]
    UnknownAssignment(String),
    #[error("gate {index}: {reason}")]
    BadGate { index: usize, reason: String },
    #[error("schedule coefficient {0} is not finite")]
    BadSchedule(f64),
    #[error("step {step}: {source}")]
    StepFailed { step: usize, source: FormulaError },
    #[error("gate program: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    /// Machine-readable failure code.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::InvalidSize(_) => "invalid_size",
            ModelError::NonFinite => "non_finite",
            ModelError::UnknownAssignment(_) => "unknown_assignment",
            ModelError::BadGate { .. } => "bad_gate",
            ModelError::BadSchedule(_) => "bad_schedule",
            ModelError::StepFailed { source, .. } => source.code(),
            ModelError::Parse(_) => "parse_error",
            ModelError::Io(_) => "io_error",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        let (o, l, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0));
        match self {
            Pauli::I => CMatrix::identity(2),
            Pauli::X => CMatrix::from_rows(&[&[o, l], &[l, o]]),
            Pauli::Y => CMatrix::from_rows(&[&[o, -i], &[i, o]]),
            Pauli::Z => CMatrix::from_rows(&[&[l, o], &[o, -l]]),
        }
    }
}

pub fn sigma_x() -> CMatrix {
    Pauli::X.matrix()
}

pub fn sigma_y() -> CMatrix {
    Pauli::Y.matrix()
}

pub fn sigma_z() -> CMatrix {
    Pauli::Z.matrix()
}

/// Tensor product of single-site Paulis over `l` sites; unlisted sites get `I`.
pub fn pauli_string(ops: &[(usize, Pauli)], l: usize) -> CMatrix {
    let mut out = CMatrix::identity(1);
    for site in 0..l {
        let p = ops.iter().rev().find(|(s, _)| *s == site).map_or(Pauli::I, |(_, p)| *p);
        out = out.kron(&p.matrix());
    }
    out
}

/// `op` acting on `site` of an `l`-site chain.
pub fn site_op(p: Pauli, site: usize, l: usize) -> CMatrix {
    pauli_string(&[(site, p)], l)
}

/// Which Landau–Zener term (term A is `σx`, term B is `tσz`) occupies slot X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Assignment {
    TermAToX,
    TermAToY,
}

impl Assignment {
    pub const ALL: [Assignment; 2] = [Assignment::TermAToX, Assignment::TermAToY];

    pub fn as_str(self) -> &'static str {
        match self {
            Assignment::TermAToX => "A_to_X",
            Assignment::TermAToY => "A_to_Y",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Assignment::TermAToX => Assignment::TermAToY,
            Assignment::TermAToY => Assignment::TermAToX,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Assignment {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "a_to_x" | "termatox" | "x" => Ok(Assignment::TermAToX),
            "a_to_y" | "termatoy" | "y" => Ok(Assignment::TermAToY),
            _ => Err(ModelError::UnknownAssignment(s.to_string())),
        }
    }
}

/// `H(t) = σx + t σz`, generator `−iH` split per `assign`.
pub fn landau_zener(assign: Assignment) -> TwoTermGenerator {
    let (a, b) = ((sigma_x(), ScalarFn::constant(1.0)), (sigma_z(), ScalarFn::identity()));
    let ((f, x), (g, y)) = match assign {
        Assignment::TermAToX => (a, b),
        Assignment::TermAToY => (b, a),
    };
    TwoTermGenerator::from_hamiltonian(&f, &g, x, y).expect("2x2 operators")
}

/// Transverse-field Ising chain with periodic closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingParams {
    pub l: usize,
    pub j: f64,
    pub hz: f64,
    pub hx: f64,
}

impl IsingParams {
    pub fn new(l: usize, j: f64, hz: f64, hx: f64) -> Result<Self, ModelError> {
        let p = IsingParams { l, j, hz, hx };
        p.validate()?;
        Ok(p)
    }

    /// `L = 6, J = −1, h_z = 0.2, h_x = −2`.
    pub fn benchmark() -> Self {
        IsingParams { l: 6, j: -1.0, hz: 0.2, hx: -2.0 }
    }

    pub fn with_sites(self, l: usize) -> Result<Self, ModelError> {
        Self::new(l, self.j, self.hz, self.hx)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(MIN_SITES..=MAX_SITES).contains(&self.l) {
            return Err(ModelError::InvalidSize(self.l));
        }
        if !(self.j.is_finite() && self.hz.is_finite() && self.hx.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.l
    }

    /// Periodic bonds `(i, i+1 mod L)`; at `L = 2` the pair appears twice.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        (0..self.l).map(|i| (i, (i + 1) % self.l)).collect()
    }
}

/// `(F, G)` with `F = Σ h_x σxⁱ` and `G = Σ (J σzⁱσzⁱ⁺¹ + h_z σzⁱ)`.
pub fn ising_operators(p: &IsingParams) -> Result<(CMatrix, CMatrix), ModelError> {
    p.validate()?;
    let n = p.dim();
    let mut f = CMatrix::zeros(n);
    for i in 0..p.l {
        f = f.add_scaled(C64::new(p.hx, 0.0), &site_op(Pauli::X, i, p.l));
    }
    let bit = |idx: usize, site: usize| -> f64 {
        if (idx >> (p.l - 1 - site)) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let diag: Vec<C64> = (0..n)
        .map(|idx| {
            let bonds: f64 = p.bonds().iter().map(|&(a, b)| p.j * bit(idx, a) * bit(idx, b)).sum();
            let fields: f64 = (0..p.l).map(|s| p.hz * bit(idx, s)).sum();
            C64::new(bonds + fields, 0.0)
        })
        .collect();
    Ok((f, CMatrix::from_diag(&diag)))
}

/// `−i(sin t · F + G)` with slots `(−iF, −iG)`.
pub fn ising_chain(p: &IsingParams) -> Result<TwoTermGenerator, ModelError> {
    let (f, g) = ising_operators(p)?;
    Ok(TwoTermGenerator::from_hamiltonian(&f, &g, ScalarFn::new(f64::sin), ScalarFn::constant(1.0)).expect("equal dims"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Rz,
    Rzz,
}

impl GateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::Rx => "rx",
            GateKind::Rz => "rz",
            GateKind::Rzz => "rzz",
        }
    }
}

impl FromStr for GateKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rx" => Ok(GateKind::Rx),
            "rz" => Ok(GateKind::Rz),
            "rzz" => Ok(GateKind::Rzz),
            other => Err(ModelError::Parse(format!("unknown gate kind '{other}'"))),
        }
    }
}

/// `RX(θ) = e^{−iθσx/2}`, `RZ(θ) = e^{−iθσz/2}`, `RZZ(θ) = e^{−iθσz⊗σz/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub angle: f64,
}

impl GateOp {
    pub fn rx(q: usize, angle: f64) -> Self {
        GateOp { kind: GateKind::Rx, qubits: vec![q], angle }
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        GateOp { kind: GateKind::Rz, qubits: vec![q], angle }
    }

    pub fn rzz(a: usize, b: usize, angle: f64) -> Self {
        GateOp { kind: GateKind::Rzz, qubits: vec![a, b], angle }
    }

    pub fn validate(&self, l: usize) -> Result<(), String> {
        let arity = if self.kind == GateKind::Rzz { 2 } else { 1 };
        if self.qubits.len() != arity {
            return Err(format!("{} takes {arity} qubit(s), got {}", self.kind.as_str(), self.qubits.len()));
        }
        if let Some(q) = self.qubits.iter().find(|&&q| q >= l) {
            return Err(format!("qubit {q} out of range for L = {l}"));
        }
        if arity == 2 && self.qubits[0] == self.qubits[1] {
            return Err("rzz qubits must differ".into());
        }
        if !self.angle.is_finite() {
            return Err("angle must be finite".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let qs: Vec<String> = self.qubits.iter().map(|q| q.to_string()).collect();
        format!("{{\"kind\":\"{}\",\"qubits\":[{}],\"angle\":{}}}", self.kind.as_str(), qs.join(","), format_decimal(self.angle))
    }
}

/// Gates for one schedule, in application (time) order.
pub fn compile_gates(schedule: &ExponentSchedule, p: &IsingParams) -> Result<Vec<GateOp>, ModelError> {
    p.validate()?;
    let mut gates = Vec::new();
    for step in schedule.steps.iter().rev() {
        let c = step.coeff;
        if !c.is_finite() {
            return Err(ModelError::BadSchedule(c));
        }
        match step.slot {
            Slot::X => gates.extend((0..p.l).map(|i| GateOp::rx(i, 2.0 * c * p.hx))),
            Slot::Y => {
                gates.extend(p.bonds().into_iter().map(|(a, b)| GateOp::rzz(a, b, 2.0 * c * p.j)));
                gates.extend((0..p.l).map(|i| GateOp::rz(i, 2.0 * c * p.hz)));
            }
        }
    }
    Ok(gates)
}

/// Gates per site per step emitted by `compile_gates`.
pub fn structural_gates_per_site(id: FormulaId) -> usize {
    // X steps cost L rotations, Y steps 2L (bonds plus fields)
    let n = id.n_exponentials();
    let xs = n.div_ceil(2);
    xs + 2 * (n - xs)
}

/// Gate count of `N` steps on `L` sites: `5LN`, `10LN`, `13LN`, `15LN` for
/// midpoint, MFT, 9-exp and Suzuki4; structural for HdR and MST.
pub fn gate_count(id: FormulaId, l: usize, n: usize) -> usize {
    let per = match id {
        FormulaId::Midpoint => 5,
        FormulaId::Mft => 10,
        FormulaId::NineExp => 13,
        FormulaId::Suzuki4 => 15,
        FormulaId::HdR | FormulaId::Mst => structural_gates_per_site(id),
    };
    per * l * n
}

/// `len(compile_gates)` over `N` steps.
pub fn structural_gate_count(id: FormulaId, l: usize, n: usize) -> usize {
    structural_gates_per_site(id) * l * n
}

fn apply_gate(op: &GateOp, l: usize, m: &CMatrix) -> CMatrix {
    let n = 1usize << l;
    let half = op.angle / 2.0;
    let sign = |idx: usize, q: usize| if (idx >> (l - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
    match op.kind {
        GateKind::Rz | GateKind::Rzz => {
            let d: Vec<C64> = (0..n)
                .map(|idx| {
                    let s: f64 = op.qubits.iter().map(|&q| sign(idx, q)).product();
                    C64::new(0.0, -half * s).exp()
                })
                .collect();
            m.scale_rows(&d)
        }
        GateKind::Rx => {
            let mask = 1usize << (l - 1 - op.qubits[0]);
            let (c, s) = (C64::new(half.cos(), 0.0), C64::new(0.0, -half.sin()));
            CMatrix::from_fn(n, |r, col| c * m[(r, col)] + s * m[(r ^ mask, col)])
        }
    }
}

/// Product of the gate unitaries, first gate applied first.
pub fn gate_program_matrix(gates: &[GateOp], l: usize) -> Result<CMatrix, ModelError> {
    if !(1..=MAX_SITES).contains(&l) {
        return Err(ModelError::InvalidSize(l));
    }
    let mut m = CMatrix::identity(1 << l);
    for (index, op) in gates.iter().enumerate() {
        op.validate(l).map_err(|reason| ModelError::BadGate { index, reason })?;
        m = apply_gate(op, l, &m);
    }
    Ok(m)
}

/// Full gate program for `N` composed steps over `[t_i, t_f]`.
pub fn compile_evolution(
    id: FormulaId,
    p: &IsingParams,
    t_i: f64,
    t_f: f64,
    n: usize,
    fcfg: &FormulaConfig,
) -> Result<Vec<GateOp>, ModelError> {
    let gen = ising_chain(p)?;
    let mut gates = Vec::new();
    if n == 0 {
        return Ok(gates);
    }
    let windows = step_windows(t_i, t_f, n).expect("n >= 1");
    for (idx, w) in windows.iter().enumerate() {
        let sched = crate::formulas::build_with(id, &gen, w, fcfg).map_err(|source| ModelError::StepFailed { step: idx + 1, source })?;
        gates.extend(compile_gates(&sched, p)?);
    }
    Ok(gates)
}

/// Header line of an exported gate program.
#[derive(Clone, Debug, PartialEq)]
pub struct GateProgramHeader {
    pub l: usize,
    pub formula: FormulaId,
    pub n: usize,
    pub dt: f64,
}

impl GateProgramHeader {
    pub fn to_json(&self) -> String {
        format!("{{\"L\":{},\"formula\":\"{}\",\"N\":{},\"dt\":{}}}", self.l, self.formula, self.n, format_decimal(self.dt))
    }
}

/// JSON-lines: the header object, then one object per gate.
pub fn write_gate_program(out: &mut impl Write, header: &GateProgramHeader, gates: &[GateOp]) -> Result<(), ModelError> {
    writeln!(out, "{}", header.to_json())?;
    for g in gates {
        writeln!(out, "{}", g.to_json())?;
    }
    Ok(())
}

pub fn read_gate_program(text: &str) -> Result<(GateProgramHeader, Vec<GateOp>), ModelError> {
    let bad = |m: String| ModelError::Parse(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: serde_json::Value = serde_json::from_str(lines.next().ok_or_else(|| bad("empty program".into()))?)
        .map_err(|e| bad(format!("header: {e}")))?;
    let header = GateProgramHeader {
        l: head["L"].as_u64().ok_or_else(|| bad("header missing L".into()))? as usize,
        formula: head["formula"]
            .as_str()
            .ok_or_else(|| bad("header missing formula".into()))?
            .parse()
            .map_err(|e: FormulaError| bad(e.to_string()))?,
        n: head["N"].as_u64().ok_or_else(|| bad("header missing N".into()))? as usize,
        dt: head["dt"].as_f64().ok_or_else(|| bad("header missing dt".into()))?,
    };
    let gates = lines
        .enumerate()
        .map(|(i, line)| {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            let kind: GateKind = v["kind"].as_str().ok_or_else(|| bad(format!("line {}: missing kind", i + 2)))?.parse()?;
            let qubits = v["qubits"]
                .as_array()
                .ok_or_else(|| bad(format!("line {}: missing qubits", i + 2)))?
                .iter()
                .map(|q| q.as_u64().map(|q| q as usize).ok_or_else(|| bad(format!("line {}: bad qubit", i + 2))))
                .collect::<Result<Vec<_>, _>>()?;
            let angle = v["angle"].as_f64().ok_or_else(|| bad(format!("line {}: missing angle", i + 2)))?;
            Ok(GateOp { kind, qubits, angle })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok((header, gates))
}
