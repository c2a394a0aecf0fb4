//! Solver-independent feasibility check computed from program data alone.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::program::{ConicProgram, ConstraintKind};

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintResidual {
    pub index: usize,
    pub label: String,
    pub kind: &'static str,
    /// Slack for linear rows, `t - ||v||` for cones, minimum eigenvalue for
    /// PSD blocks. Negative means violated.
    pub margin: f64,
}

impl ConstraintResidual {
    pub fn violation(&self) -> f64 {
        (-self.margin).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub residuals: Vec<ConstraintResidual>,
    pub max_violation: f64,
    pub passed: bool,
}

impl VerifyReport {
    pub fn violated(&self, tol: f64) -> impl Iterator<Item = &ConstraintResidual> {
        self.residuals.iter().filter(move |r| r.margin < -tol)
    }
}

pub fn min_eigenvalue(dim: usize, dense: &[f64]) -> f64 {
    if dim == 0 {
        return f64::INFINITY;
    }
    let m = DMatrix::from_row_slice(dim, dim, dense);
    SymmetricEigen::new(m).eigenvalues.min()
}

pub fn constraint_margin(kind: &ConstraintKind, x: &[f64]) -> f64 {
    match kind {
        ConstraintKind::Nonneg(e) => e.eval(x),
        ConstraintKind::Soc { t, v } => {
            let norm = v.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            t.eval(x) - norm
        }
        ConstraintKind::Psd(m) => min_eigenvalue(m.dim(), &m.eval(x)),
    }
}

/// Evaluates every constraint at `x`; passes iff every margin is `>= -tol`.
pub fn verify_solution(p: &ConicProgram, x: &[f64], tol: f64) -> VerifyReport {
    assert_eq!(x.len(), p.n_vars, "solution length");
    let residuals: Vec<ConstraintResidual> = p
        .constraints
        .iter()
        .enumerate()
        .map(|(index, c)| ConstraintResidual {
            index,
            label: c.label.clone(),
            kind: c.kind.name(),
            margin: constraint_margin(&c.kind, x),
        })
        .collect();
    let max_violation = residuals
        .iter()
        .map(ConstraintResidual::violation)
        .fold(0.0, f64::max);
    VerifyReport {
        passed: residuals.iter().all(|r| r.margin >= -tol),
        residuals,
        max_violation,
    }
}
