//! Gate export and single composed evolutions.

use std::io::Write;

use tdtrotter::formulas::FormulaConfig;
use tdtrotter::models::{compile_evolution, ising_chain, landau_zener, write_gate_program, Assignment, GateProgramHeader};
use tdtrotter::reference::{composed_evolution_with, error_norms, exact_propagator_with, ErrorNorms};
use tdtrotter::{format_decimal, CMatrix, FormulaId, IsingParams, OracleConfig, TwoTermGenerator};

use crate::BenchError;

/// Writes the JSON-lines gate program of an `N`-step Ising evolution over
/// `[t_i, t_f]` and returns the number of gates.
pub fn export_gates(
    out: &mut impl Write,
    id: FormulaId,
    p: &IsingParams,
    n: usize,
    t_i: f64,
    t_f: f64,
) -> Result<usize, BenchError> {
    let gates = compile_evolution(id, p, t_i, t_f, n, &FormulaConfig::default())?;
    let dt = if n == 0 { 0.0 } else { (t_f - t_i) / n as f64 };
    let header = GateProgramHeader { l: p.l, formula: id, n, dt };
    write_gate_program(out, &header, &gates)?;
    Ok(gates.len())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    LandauZener(Assignment),
    Ising(IsingParams),
}

impl Model {
    pub fn generator(&self) -> Result<TwoTermGenerator, BenchError> {
        Ok(match self {
            Model::LandauZener(a) => landau_zener(*a),
            Model::Ising(p) => ising_chain(p)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOutput {
    pub propagator: CMatrix,
    /// Present when an oracle comparison was requested.
    pub error: Option<ErrorNorms>,
}

/// Composed `N`-step evolution, optionally compared against the oracle.
pub fn evolve(
    model: &Model,
    id: FormulaId,
    t_i: f64,
    t_f: f64,
    n: usize,
    oracle: Option<&OracleConfig>,
) -> Result<EvolveOutput, BenchError> {
    let gen = model.generator()?;
    let propagator = composed_evolution_with(&gen, id, t_i, t_f, n, &FormulaConfig::default())?;
    let error = match oracle {
        Some(cfg) => Some(error_norms(&exact_propagator_with(&gen, t_i, t_f, cfg)?, &propagator)),
        None => None,
    };
    Ok(EvolveOutput { propagator, error })
}

/// `row,col,re,im` CSV of a matrix.
pub fn matrix_csv(m: &CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for r in 0..m.dim() {
        for c in 0..m.dim() {
            let z = m[(r, c)];
            out.push_str(&format!("{r},{c},{},{}\n", format_decimal(z.re), format_decimal(z.im)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_writes_header_only() {
        let mut buf = Vec::new();
        let count = export_gates(&mut buf, FormulaId::Midpoint, &IsingParams::benchmark(), 0, 0.0, 1.0).unwrap();
        assert_eq!(count, 0);
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn matrix_csv_shape() {
        let text = matrix_csv(&CMatrix::identity(2));
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("1,1,1.0000000000000000e0,0.0000000000000000e0"));
    }
}
