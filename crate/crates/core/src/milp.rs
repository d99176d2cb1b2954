//! MILP data model: `min cᵀx + k  s.t.  Ax ≤ b,  l ≤ x ≤ u,  x_j ∈ ℤ for j ∈ I`.
//!
//! The constant `k` (`objective_constant`) is what lets a shifted instance
//! report the same objective values as the instance it was derived from.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that an integer variable's shift is integral.
const INTEGRALITY_EPS: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub n_vars: usize,
    pub n_cons: usize,
    pub objective: Vec<f64>,
    /// Coordinate list `(row, col, value)`.
    pub matrix: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer_mask: Vec<bool>,
    pub objective_constant: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Length {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    BoundCrossing {
        index: usize,
        lower: f64,
        upper: f64,
    },
    NanBound {
        index: usize,
    },
    DuplicateEntry {
        row: usize,
        col: usize,
    },
    EntryOutOfRange {
        row: usize,
        col: usize,
    },
    NonFinite {
        field: &'static str,
        index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length {
                field,
                expected,
                got,
            } => write!(f, "{field} has length {got}, expected {expected}"),
            Violation::BoundCrossing {
                index,
                lower,
                upper,
            } => write!(f, "bound crossing at index {index}: lower {lower} > upper {upper}"),
            Violation::NanBound { index } => write!(f, "NaN bound at index {index}"),
            Violation::DuplicateEntry { row, col } => {
                write!(f, "duplicate matrix entry ({row}, {col})")
            }
            Violation::EntryOutOfRange { row, col } => {
                write!(f, "matrix entry ({row}, {col}) out of range")
            }
            Violation::NonFinite { field, index } => {
                write!(f, "non-finite value in {field} at index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            let msg: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidInstance(msg.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        write!(f, "fail:")?;
        for v in &self.violations {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

/// A variable shift `x̂ = x + s`. Integer variables must receive integral shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShiftVector(pub Vec<f64>);

impl ShiftVector {
    pub fn zeros(n: usize) -> Self {
        ShiftVector(vec![0.0; n])
    }

    /// Checks the vector against an instance.
    pub fn check(&self, instance: &MilpInstance) -> Result<()> {
        if self.0.len() != instance.n_vars {
            return Err(Error::Dimension {
                what: "shift vector",
                expected: instance.n_vars,
                got: self.0.len(),
            });
        }
        for (j, &v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInstance(format!("shift entry {j} is not finite")));
            }
            if instance.integer_mask[j] && (v - v.round()).abs() > INTEGRALITY_EPS {
                return Err(Error::NonIntegralShift { index: j, value: v });
            }
        }
        Ok(())
    }

    pub fn negated(&self) -> Self {
        ShiftVector(self.0.iter().map(|v| -v).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl MilpInstance {
    /// Builds an instance with default bounds `[0, +∞)`, no constraints and a
    /// zero objective. Mostly a convenience for tests and generators.
    pub fn new(n_vars: usize, n_cons: usize) -> Self {
        MilpInstance {
            n_vars,
            n_cons,
            objective: vec![0.0; n_vars],
            matrix: Vec::new(),
            rhs: vec![0.0; n_cons],
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            integer_mask: vec![false; n_vars],
            objective_constant: 0.0,
            label: String::new(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut check_len = |field: &'static str, got: usize, expected: usize| {
            if got != expected {
                violations.push(Violation::Length {
                    field,
                    expected,
                    got,
                });
            }
        };
        check_len("objective", self.objective.len(), self.n_vars);
        check_len("lower", self.lower.len(), self.n_vars);
        check_len("upper", self.upper.len(), self.n_vars);
        check_len("integer_mask", self.integer_mask.len(), self.n_vars);
        check_len("rhs", self.rhs.len(), self.n_cons);
        if !violations.is_empty() {
            return ValidationReport { violations };
        }

        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                violations.push(Violation::NanBound { index: j });
            } else if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                violations.push(Violation::BoundCrossing {
                    index: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                violations.push(Violation::NonFinite {
                    field: "objective",
                    index: j,
                });
            }
        }
        for (i, b) in self.rhs.iter().enumerate() {
            if !b.is_finite() {
                violations.push(Violation::NonFinite {
                    field: "rhs",
                    index: i,
                });
            }
        }
        let mut seen = HashSet::with_capacity(self.matrix.len());
        for (k, &(row, col, value)) in self.matrix.iter().enumerate() {
            if row >= self.n_cons || col >= self.n_vars {
                violations.push(Violation::EntryOutOfRange { row, col });
            }
            if !seen.insert((row, col)) {
                violations.push(Violation::DuplicateEntry { row, col });
            }
            if !value.is_finite() {
                violations.push(Violation::NonFinite {
                    field: "matrix",
                    index: k,
                });
            }
        }
        if !self.objective_constant.is_finite() {
            violations.push(Violation::NonFinite {
                field: "objective_constant",
                index: 0,
            });
        }
        ValidationReport { violations }
    }

    /// `A·v`, accumulated in coordinate-list order.
    pub fn matrix_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cons];
        for &(i, j, a) in &self.matrix {
            out[i] += a * v[j];
        }
        out
    }

    /// Right-hand side after shifting by `s`: `b + A·s`.
    pub fn shifted_rhs(&self, s: &[f64]) -> Vec<f64> {
        let as_ = self.matrix_times(s);
        self.rhs.iter().zip(as_).map(|(b, a)| b + a).collect()
    }

    /// `cᵀx + objective_constant`, summed in index order.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, v) in self.objective.iter().zip(x) {
            acc += c * v;
        }
        acc + self.objective_constant
    }

    /// Max constraint violation `max_i (a_i x − b_i)⁺` and bound violation.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let ax = self.matrix_times(x);
        let mut worst: f64 = 0.0;
        for (a, b) in ax.iter().zip(&self.rhs) {
            worst = worst.max(a - b);
        }
        for j in 0..self.n_vars {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    /// Row-major sparse view `rows[i] = [(col, value)]`, columns ascending.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.n_cons];
        for &(i, j, a) in &self.matrix {
            rows[i].push((j, a));
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        rows
    }

    /// Euclidean norm of every constraint row.
    pub fn row_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.n_cons];
        for &(i, _, a) in &self.matrix {
            sq[i] += a * a;
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.integer_mask[j] && self.lower[j] == 0.0 && self.upper[j] == 1.0
    }

    /// The AMILP: `b̂ = b + A s`, `l̂ = l + s`, `û = u + s`, constant `k − cᵀs`.
    pub fn shift(&self, s: &ShiftVector) -> Result<MilpInstance> {
        self.validate().into_result()?;
        s.check(self)?;
        let s = s.as_slice();
        let mut out = self.clone();
        out.rhs = self.shifted_rhs(s);
        // ±∞ + finite stays ±∞
        for j in 0..self.n_vars {
            out.lower[j] = self.lower[j] + s[j];
            out.upper[j] = self.upper[j] + s[j];
        }
        let mut cts = 0.0;
        for (c, v) in self.objective.iter().zip(s) {
            cts += c * v;
        }
        out.objective_constant = self.objective_constant - cts;
        Ok(out)
    }

    /// The continuous relaxation: same data, integrality ignored.
    pub fn lp_relaxation(&self) -> LpRelaxation<'_> {
        LpRelaxation {
            instance: self,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&InstanceFile::from(self))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<MilpInstance> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<MilpInstance> {
        let file: InstanceFile = serde_json::from_str(text)?;
        let inst = MilpInstance::from(file);
        inst.validate().into_result()?;
        Ok(inst)
    }
}

/// Continuous view of an instance, optionally with tightened bounds.
#[derive(Debug, Clone)]
pub struct LpRelaxation<'a> {
    pub instance: &'a MilpInstance,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl<'a> LpRelaxation<'a> {
    pub fn with_bounds(instance: &'a MilpInstance, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LpRelaxation {
            instance,
            lower,
            upper,
        }
    }
}

/// Shift draw: integers in `[−⌈m⌉, ⌈m⌉]` for integer variables, reals in
/// `[−m, m]` otherwise.
pub fn sample_shift<R: Rng + ?Sized>(
    instance: &MilpInstance,
    magnitude: f64,
    rng: &mut R,
) -> Result<ShiftVector> {
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(Error::Config(format!(
            "shift magnitude must be positive and finite, got {magnitude}"
        )));
    }
    let int_range = magnitude.ceil() as i64;
    let values = instance
        .integer_mask
        .iter()
        .map(|&is_int| {
            if is_int {
                rng.random_range(-int_range..=int_range) as f64
            } else {
                rng.random_range(-magnitude..=magnitude)
            }
        })
        .collect();
    Ok(ShiftVector(values))
}

/// Version tag of the instance JSON layout below.
pub const INSTANCE_SCHEMA: &str = "camlab-instance-v1";

/// On-disk layout: infinite bounds are written as `null`.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n_vars: usize,
    n_cons: usize,
    objective: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    integer_mask: Vec<bool>,
    matrix: Vec<(usize, usize, f64)>,
    objective_constant: f64,
    label: String,
}

impl From<&MilpInstance> for InstanceFile {
    fn from(m: &MilpInstance) -> Self {
        let fin = |v: &f64| if v.is_finite() { Some(*v) } else { None };
        InstanceFile {
            n_vars: m.n_vars,
            n_cons: m.n_cons,
            objective: m.objective.clone(),
            rhs: m.rhs.clone(),
            lower: m.lower.iter().map(fin).collect(),
            upper: m.upper.iter().map(fin).collect(),
            integer_mask: m.integer_mask.clone(),
            matrix: m.matrix.clone(),
            objective_constant: m.objective_constant,
            label: m.label.clone(),
        }
    }
}

impl From<InstanceFile> for MilpInstance {
    fn from(f: InstanceFile) -> Self {
        MilpInstance {
            n_vars: f.n_vars,
            n_cons: f.n_cons,
            objective: f.objective,
            matrix: f.matrix,
            rhs: f.rhs,
            lower: f.lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            upper: f.upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            integer_mask: f.integer_mask,
            objective_constant: f.objective_constant,
            label: f.label,
        }
    }
}
