//! CSV rows, assertion results and the stderr summary.

use tdtrotter::models::Assignment;
use tdtrotter::reference::{OrderFit, ReferenceError, ERROR_RECORD_HEADER};
use tdtrotter::{format_decimal, ErrorRecord, FormulaId};

use crate::config::Experiment;

pub fn csv_header() -> String {
    format!("row,assignment,{ERROR_RECORD_HEADER},n_gates_per_L,ratio,slope,r2,status")
}

/// Independent variable of a fit row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitAxis {
    Dt,
    Mu,
    Gates,
}

impl FitAxis {
    pub fn row_label(self) -> &'static str {
        match self {
            FitAxis::Dt => "fit_dt",
            FitAxis::Mu => "fit_mu",
            FitAxis::Gates => "fit_n_gates",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataRow {
    pub assignment: Option<Assignment>,
    pub record: ErrorRecord,
    pub n_gates_per_l: Option<usize>,
    pub ratio: Option<f64>,
    /// `"ok"` or a failure code.
    pub status: String,
}

impl DataRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub assignment: Option<Assignment>,
    pub formula: FormulaId,
    pub axis: FitAxis,
    pub fit: Result<OrderFit, String>,
}

impl FitRow {
    pub fn new(assignment: Option<Assignment>, formula: FormulaId, axis: FitAxis, fit: Result<OrderFit, ReferenceError>) -> Self {
        FitRow { assignment, formula, axis, fit: fit.map_err(|e| e.code().to_string()) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Row {
    Data(DataRow),
    Fit(FitRow),
}

fn assignment_cell(a: Option<Assignment>) -> &'static str {
    a.map_or("", Assignment::as_str)
}

impl Row {
    pub fn to_csv(&self) -> String {
        match self {
            Row::Data(d) => format!(
                "data,{},{},{},{},,,{}",
                assignment_cell(d.assignment),
                d.record.csv_row(),
                d.n_gates_per_l.map_or(String::new(), |g| g.to_string()),
                d.ratio.map_or(String::new(), format_decimal),
                d.status
            ),
            Row::Fit(f) => {
                let (slope, r2, status) = match &f.fit {
                    Ok(fit) => (format_decimal(fit.slope), format_decimal(fit.r2), "ok"),
                    Err(code) => (String::new(), String::new(), code.as_str()),
                };
                format!("{},{},{},,,,,,,,,,{slope},{r2},{status}", f.axis.row_label(), assignment_cell(f.assignment), f.formula)
            }
        }
    }
}

/// Outcome of one assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = csv_header();
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn data(&self) -> impl Iterator<Item = &DataRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Data(d) => Some(d),
            Row::Fit(_) => None,
        })
    }

    pub fn fits(&self) -> impl Iterator<Item = &FitRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Fit(f) => Some(f),
            Row::Data(_) => None,
        })
    }

    pub fn fit(&self, formula: FormulaId, assignment: Option<Assignment>) -> Option<&FitRow> {
        self.fits().find(|f| f.formula == formula && f.assignment == assignment)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{} checks\n", self.experiment);
        for c in &self.checks {
            out.push_str(&format!("  {:<4} {:<width$}  {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        out.push_str(&format!("  {} of {} checks passed\n", self.checks.len() - failed, self.checks.len()));
        out
    }
}
