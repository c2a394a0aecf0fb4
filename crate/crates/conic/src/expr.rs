//! Sparse affine expressions over the real decision vector.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

/// `constant + Σ coef·x[idx]`, kept sparse and sorted by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    terms: BTreeMap<usize, f64>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(idx: usize) -> Self {
        Self::term(idx, 1.0)
    }

    pub fn term(idx: usize, coef: f64) -> Self {
        let mut e = Self::zero();
        e.add_term(idx, coef);
        e
    }

    /// Inner product `Σ coefs[k]·x[indices[k]]`.
    pub fn dot(indices: &[usize], coefs: &[f64]) -> Self {
        debug_assert_eq!(indices.len(), coefs.len());
        let mut e = Self::zero();
        for (&i, &c) in indices.iter().zip(coefs) {
            e.add_term(i, c);
        }
        e
    }

    pub fn add_term(&mut self, idx: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let slot = self.terms.entry(idx).or_insert(0.0);
        *slot += coef;
        if *slot == 0.0 {
            self.terms.remove(&idx);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, alpha: f64) {
        if alpha == 0.0 {
            return;
        }
        for (&i, &c) in &other.terms {
            self.add_term(i, alpha * c);
        }
        self.constant += alpha * other.constant;
    }

    pub fn scaled(&self, alpha: f64) -> LinExpr {
        let mut e = LinExpr::zero();
        e.add_scaled(self, alpha);
        e
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.terms.iter().map(|(&i, &c)| (i, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&i, &c)| c * x[i]).sum::<f64>()
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

/// Symmetric matrix whose entries are affine in `x`. Only the upper triangle
/// (`row <= col`) is stored, so the represented matrix is symmetric by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymAffine {
    dim: usize,
    entries: BTreeMap<(usize, usize), LinExpr>,
}

impl SymAffine {
    pub fn zeros(dim: usize) -> Self {
        SymAffine {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.add(i, i, &LinExpr::constant(1.0));
        }
        m
    }

    /// Constant symmetric matrix from a dense row-major slice.
    pub fn from_dense(dim: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), dim * dim);
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in r..dim {
                let v = 0.5 * (data[r * dim + c] + data[c * dim + r]);
                if v != 0.0 {
                    m.add(r, c, &LinExpr::constant(v));
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn key(r: usize, c: usize) -> (usize, usize) {
        if r <= c {
            (r, c)
        } else {
            (c, r)
        }
    }

    /// Adds `e` to entry (r,c) (and implicitly to (c,r)).
    pub fn add(&mut self, r: usize, c: usize, e: &LinExpr) {
        assert!(r < self.dim && c < self.dim, "entry out of range");
        let slot = self.entries.entry(Self::key(r, c)).or_default();
        slot.add_scaled(e, 1.0);
        if slot.is_constant() && slot.constant == 0.0 {
            self.entries.remove(&Self::key(r, c));
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Option<&LinExpr> {
        self.entries.get(&Self::key(r, c))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &LinExpr)> {
        self.entries.iter().map(|(&(r, c), e)| (r, c, e))
    }

    pub fn add_scaled(&mut self, other: &SymAffine, alpha: f64) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        for (r, c, e) in other.entries() {
            self.add(r, c, &e.scaled(alpha));
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymAffine {
        let mut m = SymAffine::zeros(self.dim);
        m.add_scaled(self, alpha);
        m
    }

    /// Places `block` with its top-left corner at (offset, offset).
    pub fn embed(&mut self, offset: usize, block: &SymAffine) {
        assert!(offset + block.dim <= self.dim);
        for (r, c, e) in block.entries() {
            self.add(offset + r, offset + c, e);
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries.keys().all(|&(r, c)| r == c)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.values().filter_map(|e| e.max_index()).max()
    }

    /// Dense row-major evaluation.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for (&(r, c), e) in &self.entries {
            let v = e.eval(x);
            out[r * n + c] = v;
            out[c * n + r] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_cancel_and_stay_sparse() {
        let mut e = LinExpr::var(3) + LinExpr::term(1, 2.0);
        e.add_term(3, -1.0);
        assert_eq!(e.n_terms(), 1);
        assert_eq!(e.eval(&[0.0, 5.0, 0.0, 7.0]), 10.0);
    }

    #[test]
    fn sym_affine_is_symmetric() {
        let mut m = SymAffine::zeros(3);
        m.add(2, 0, &LinExpr::var(0));
        let v = m.eval(&[4.0]);
        assert_eq!(v[2], 4.0);
        assert_eq!(v[6], 4.0);
        assert!(!m.is_diagonal());
    }
}
