//! Conic program container: linear objective plus nonnegativity, second-order
//! cone and PSD constraints over one real decision vector.

use crate::error::ModelError;
use crate::expr::{LinExpr, SymAffine};

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    /// `expr >= 0`
    Nonneg(LinExpr),
    /// `||v||_2 <= t`
    Soc { t: LinExpr, v: Vec<LinExpr> },
    /// `F(x) ⪰ 0`
    Psd(SymAffine),
}

impl ConstraintKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Nonneg(_) => "nonneg",
            ConstraintKind::Soc { .. } => "soc",
            ConstraintKind::Psd(_) => "psd",
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            ConstraintKind::Nonneg(e) => e.max_index(),
            ConstraintKind::Soc { t, v } => v
                .iter()
                .filter_map(LinExpr::max_index)
                .chain(t.max_index())
                .max(),
            ConstraintKind::Psd(m) => m.max_index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
}

/// A contiguous run of scalar variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn index(&self, k: usize) -> usize {
        assert!(k < self.len, "{}[{k}] out of range", self.name);
        self.start + k
    }

    pub fn indices(&self) -> Vec<usize> {
        (self.start..self.start + self.len).collect()
    }

    pub fn expr(&self, k: usize) -> LinExpr {
        LinExpr::var(self.index(k))
    }

    pub fn values<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.start..self.start + self.len]
    }
}

/// Symmetric matrix variable stored as its upper triangle, row by row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatVar {
    pub name: String,
    pub start: usize,
    pub dim: usize,
}

impl MatVar {
    pub fn n_entries(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        assert!(c < self.dim);
        // rows 0..r hold dim + (dim-1) + ... + (dim-r+1) entries
        let row_start = r * self.dim - r * r.saturating_sub(1) / 2;
        self.start + row_start + (c - r)
    }

    pub fn entry(&self, r: usize, c: usize) -> LinExpr {
        LinExpr::var(self.index(r, c))
    }

    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::zero();
        for i in 0..self.dim {
            e.add_term(self.index(i, i), 1.0);
        }
        e
    }

    /// `tr(W Q)` for a constant symmetric `Q` given row-major.
    pub fn inner(&self, q: &[f64]) -> LinExpr {
        let n = self.dim;
        assert_eq!(q.len(), n * n);
        let mut e = LinExpr::zero();
        for r in 0..n {
            for c in r..n {
                let coef = if r == c {
                    q[r * n + c]
                } else {
                    q[r * n + c] + q[c * n + r]
                };
                e.add_term(self.index(r, c), coef);
            }
        }
        e
    }

    /// Dense row-major value of the matrix at `x`.
    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in r..n {
                let v = x[self.index(r, c)];
                out[r * n + c] = v;
                out[c * n + r] = v;
            }
        }
        out
    }
}

/// Coupling between a vector block and its lifted matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lift {
    pub vector: String,
    pub matrix: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub vectors: Vec<VarBlock>,
    pub matrices: Vec<MatVar>,
    pub scalars: Vec<VarBlock>,
    /// Names of blocks that hold a transmit precoder or its lift.
    pub precoders: Vec<String>,
    pub lifts: Vec<Lift>,
}

impl Metadata {
    pub fn vector(&self, name: &str) -> Option<&VarBlock> {
        self.vectors.iter().find(|v| v.name == name)
    }

    pub fn matrix(&self, name: &str) -> Option<&MatVar> {
        self.matrices.iter().find(|m| m.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<usize> {
        self.scalars.iter().find(|s| s.name == name).map(|s| s.start)
    }

    pub fn precoder_count(&self) -> usize {
        self.precoders.len()
    }

    fn has_name(&self, name: &str) -> bool {
        self.vector(name).is_some() || self.matrix(name).is_some() || self.scalar(name).is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: LinExpr,
    pub constraints: Vec<Constraint>,
    pub meta: Metadata,
}

/// Constraint counts by cone family.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProgramStats {
    pub n_vars: usize,
    pub n_nonneg: usize,
    pub n_soc: usize,
    pub n_psd: usize,
    pub max_psd_dim: usize,
    pub psd_dims: Vec<usize>,
    pub soc_dims: Vec<usize>,
}

fn check_label(label: &str) -> Result<(), ModelError> {
    if label.is_empty() || label.chars().any(char::is_whitespace) {
        return Err(ModelError::InvalidLabel(label.to_string()));
    }
    Ok(())
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn reserve(&mut self, len: usize) -> usize {
        let start = self.n_vars;
        self.n_vars += len;
        start
    }

    pub fn add_vector(&mut self, name: &str, len: usize) -> Result<VarBlock, ModelError> {
        if self.meta.has_name(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let block = VarBlock {
            name: name.to_string(),
            start: self.reserve(len),
            len,
        };
        self.meta.vectors.push(block.clone());
        Ok(block)
    }

    pub fn add_scalar(&mut self, name: &str) -> Result<usize, ModelError> {
        if self.meta.has_name(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let start = self.reserve(1);
        self.meta.scalars.push(VarBlock {
            name: name.to_string(),
            start,
            len: 1,
        });
        Ok(start)
    }

    /// Scalar variable with an attached `x >= 0` constraint.
    pub fn add_nonneg_scalar(&mut self, name: &str) -> Result<usize, ModelError> {
        let idx = self.add_scalar(name)?;
        self.add_nonneg(&format!("{name}>=0"), LinExpr::var(idx))?;
        Ok(idx)
    }

    pub fn add_sym_matrix(&mut self, name: &str, dim: usize) -> Result<MatVar, ModelError> {
        if self.meta.has_name(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let m = MatVar {
            name: name.to_string(),
            start: self.reserve(MatVar::n_entries(dim)),
            dim,
        };
        self.meta.matrices.push(m.clone());
        Ok(m)
    }

    pub fn mark_precoder(&mut self, name: &str) -> Result<(), ModelError> {
        if !self.meta.has_name(name) {
            return Err(ModelError::DimensionMismatch(format!("no block named `{name}`")));
        }
        if !self.meta.precoders.iter().any(|p| p == name) {
            self.meta.precoders.push(name.to_string());
        }
        Ok(())
    }

    pub fn minimize(&mut self, objective: LinExpr) -> Result<(), ModelError> {
        self.check_index(objective.max_index())?;
        self.objective = objective;
        Ok(())
    }

    fn check_index(&self, idx: Option<usize>) -> Result<(), ModelError> {
        match idx {
            Some(i) if i >= self.n_vars => Err(ModelError::IndexOutOfRange {
                index: i,
                n_vars: self.n_vars,
            }),
            _ => Ok(()),
        }
    }

    pub fn add_constraint(&mut self, label: &str, kind: ConstraintKind) -> Result<usize, ModelError> {
        check_label(label)?;
        self.check_index(kind.max_index())?;
        if let ConstraintKind::Psd(m) = &kind {
            if m.dim() == 0 {
                return Err(ModelError::DimensionMismatch("empty PSD block".into()));
            }
        }
        self.constraints.push(Constraint {
            label: label.to_string(),
            kind,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_nonneg(&mut self, label: &str, e: LinExpr) -> Result<usize, ModelError> {
        self.add_constraint(label, ConstraintKind::Nonneg(e))
    }

    /// `lhs <= rhs`
    pub fn add_le(&mut self, label: &str, lhs: LinExpr, rhs: LinExpr) -> Result<usize, ModelError> {
        self.add_nonneg(label, rhs - lhs)
    }

    pub fn add_soc(&mut self, label: &str, t: LinExpr, v: Vec<LinExpr>) -> Result<usize, ModelError> {
        self.add_constraint(label, ConstraintKind::Soc { t, v })
    }

    pub fn add_psd(&mut self, label: &str, m: SymAffine) -> Result<usize, ModelError> {
        self.add_constraint(label, ConstraintKind::Psd(m))
    }

    pub fn constraint_index(&self, label: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.label == label)
    }

    pub fn stats(&self) -> ProgramStats {
        let mut s = ProgramStats {
            n_vars: self.n_vars,
            ..Default::default()
        };
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Nonneg(_) => s.n_nonneg += 1,
                ConstraintKind::Soc { v, .. } => {
                    s.n_soc += 1;
                    s.soc_dims.push(v.len() + 1);
                }
                ConstraintKind::Psd(m) => {
                    s.n_psd += 1;
                    s.psd_dims.push(m.dim());
                    s.max_psd_dim = s.max_psd_dim.max(m.dim());
                }
            }
        }
        s
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }
}
