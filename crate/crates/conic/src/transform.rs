//! Constraint transformers: quantile chance constraints to second-order cones,
//! cones to Schur-complement LMIs, S-procedure certificates and rank-one lifts.

use crate::error::ModelError;
use crate::expr::{LinExpr, SymAffine};
use crate::program::{ConicProgram, ConstraintKind, Lift, MatVar, VarBlock};

/// How a second-order cone is emitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConeForm {
    #[default]
    Soc,
    /// Arrow-shaped Schur-complement LMI.
    Lmi,
}

/// `meanᵀx + q·||diag(cov_sqrt)·x||_2 <= rhs` over the variables `x_idx`,
/// where `q > 0` is the quantile multiplier of the chance level.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileSoc {
    pub mean: Vec<f64>,
    pub cov_sqrt: Vec<f64>,
    pub quantile: f64,
    pub rhs: LinExpr,
}

/// Appends the constraint described by `d` and returns its index. A zero
/// covariance collapses to a single linear inequality.
pub fn add_quantile_soc(
    p: &mut ConicProgram,
    label: &str,
    d: &QuantileSoc,
    x_idx: &[usize],
    form: ConeForm,
) -> Result<usize, ModelError> {
    if d.mean.len() != x_idx.len() || d.cov_sqrt.len() != x_idx.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "chance data of length {}/{} for {} variables",
            d.mean.len(),
            d.cov_sqrt.len(),
            x_idx.len()
        )));
    }
    if !(d.quantile > 0.0) || !d.quantile.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "quantile multiplier must be positive and finite, got {}",
            d.quantile
        )));
    }
    let mut t = d.rhs.clone();
    t.add_scaled(&LinExpr::dot(x_idx, &d.mean), -1.0);
    if d.cov_sqrt.iter().all(|&c| c == 0.0) {
        return p.add_nonneg(label, t);
    }
    let v: Vec<LinExpr> = x_idx
        .iter()
        .zip(&d.cov_sqrt)
        .filter(|(_, &c)| c != 0.0)
        .map(|(&i, &c)| LinExpr::term(i, d.quantile * c))
        .collect();
    match form {
        ConeForm::Soc => p.add_soc(label, t, v),
        ConeForm::Lmi => p.add_psd(label, soc_to_lmi(&t, &v)),
    }
}

/// `||v|| <= t`  ⇔  `[[t·I, v], [vᵀ, t]] ⪰ 0`.
pub fn soc_to_lmi(t: &LinExpr, v: &[LinExpr]) -> SymAffine {
    let n = v.len();
    let mut m = SymAffine::zeros(n + 1);
    for (i, vi) in v.iter().enumerate() {
        m.add(i, i, t);
        m.add(i, n, vi);
    }
    m.add(n, n, t);
    m
}

/// Replaces the cone constraint at `idx` by its Schur-complement LMI.
pub fn convert_soc_to_lmi(p: &mut ConicProgram, idx: usize) -> Result<(), ModelError> {
    let c = p
        .constraints
        .get_mut(idx)
        .ok_or_else(|| ModelError::InvalidParameter(format!("no constraint {idx}")))?;
    if let ConstraintKind::Soc { t, v } = &c.kind {
        c.kind = ConstraintKind::Psd(soc_to_lmi(t, v));
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!(
            "constraint `{}` is not a cone",
            c.label
        )))
    }
}

/// Assembles `[[A, b], [bᵀ, c]]`.
pub fn bordered(a: &SymAffine, b: &[LinExpr], c: &LinExpr) -> SymAffine {
    let n = a.dim();
    assert_eq!(b.len(), n, "border length");
    let mut m = SymAffine::zeros(n + 1);
    m.embed(0, a);
    for (i, bi) in b.iter().enumerate() {
        m.add(i, n, bi);
    }
    m.add(n, n, c);
    m
}

/// Certificate for "premise ⪯ 0 ⇒ body ⪯ 0" on quadratic forms in `[e; 1]`:
/// appends `λ·premise − body ⪰ 0` with a fresh multiplier `λ >= 0`.
/// `premise` must be constant. Returns the PSD constraint index and `λ`.
pub fn s_procedure_lmi(
    p: &mut ConicProgram,
    label: &str,
    premise: &SymAffine,
    body: &SymAffine,
    multiplier: &str,
) -> Result<(usize, usize), ModelError> {
    if premise.dim() != body.dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "premise {} vs body {}",
            premise.dim(),
            body.dim()
        )));
    }
    if premise.max_index().is_some() {
        return Err(ModelError::InvalidParameter(
            "S-procedure premise must be constant".into(),
        ));
    }
    let lambda = p.add_nonneg_scalar(multiplier)?;
    let mut m = body.scaled(-1.0);
    for (r, c, e) in premise.entries() {
        m.add(r, c, &LinExpr::term(lambda, e.constant));
    }
    let idx = p.add_psd(label, m)?;
    Ok((idx, lambda))
}

/// Adds a symmetric matrix `W` with `[[W, w], [wᵀ, 1]] ⪰ 0`.
pub fn lift_rank_one(p: &mut ConicProgram, w: &VarBlock, name: &str) -> Result<MatVar, ModelError> {
    let big_w = p.add_sym_matrix(name, w.len)?;
    let mut a = SymAffine::zeros(w.len);
    for r in 0..w.len {
        for c in r..w.len {
            a.add(r, c, &big_w.entry(r, c));
        }
    }
    let b: Vec<LinExpr> = (0..w.len).map(|k| w.expr(k)).collect();
    p.add_psd(&format!("lift[{name}]"), bordered(&a, &b, &LinExpr::constant(1.0)))?;
    p.meta.lifts.push(Lift {
        vector: w.name.clone(),
        matrix: name.to_string(),
    });
    Ok(big_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_covariance_is_linear() {
        let mut p = ConicProgram::new();
        let x = p.add_vector("x", 2).unwrap();
        let d = QuantileSoc {
            mean: vec![1.0, -1.0],
            cov_sqrt: vec![0.0, 0.0],
            quantile: 1.0,
            rhs: LinExpr::constant(3.0),
        };
        add_quantile_soc(&mut p, "c", &d, &x.indices(), ConeForm::Soc).unwrap();
        assert!(matches!(p.constraints[0].kind, ConstraintKind::Nonneg(_)));
    }

    #[test]
    fn s_procedure_rejects_mismatch() {
        let mut p = ConicProgram::new();
        let r = SymAffine::identity(2);
        let b = SymAffine::identity(3);
        assert!(s_procedure_lmi(&mut p, "s", &r, &b, "lam").is_err());
    }

    #[test]
    fn lift_duplicate_name_rejected() {
        let mut p = ConicProgram::new();
        let w = p.add_vector("w", 2).unwrap();
        lift_rank_one(&mut p, &w, "W").unwrap();
        assert_eq!(
            lift_rank_one(&mut p, &w, "W"),
            Err(ModelError::DuplicateName("W".into()))
        );
    }
}
