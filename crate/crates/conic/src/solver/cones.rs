//! Per-cone Jordan algebra and Nesterov-Todd scaling.
//!
//! PSD blocks are stored as `svec`: the upper triangle row by row with
//! off-diagonal entries multiplied by √2, so inner products match the trace
//! inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cone {
    Lp(usize),
    Soc(usize),
    Psd(usize),
}

impl Cone {
    pub fn rows(self) -> usize {
        match self {
            Cone::Lp(m) | Cone::Soc(m) => m,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Cone::Lp(m) => m,
            Cone::Soc(_) => 1,
            Cone::Psd(n) => n,
        }
    }

    pub fn identity(self) -> Vec<f64> {
        match self {
            Cone::Lp(m) => vec![1.0; m],
            Cone::Soc(m) => {
                let mut e = vec![0.0; m];
                e[0] = 1.0;
                e
            }
            Cone::Psd(n) => svec(&DMatrix::identity(n, n)),
        }
    }
}

pub(crate) fn svec_index(n: usize, r: usize, c: usize) -> usize {
    let (r, c) = if r <= c { (r, c) } else { (c, r) };
    r * n - r * r.saturating_sub(1) / 2 + (c - r)
}

pub(crate) fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        out.push(m[(r, r)]);
        for c in r + 1..n {
            out.push(SQRT_2 * 0.5 * (m[(r, c)] + m[(c, r)]));
        }
    }
    out
}

pub(crate) fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for r in 0..n {
        m[(r, r)] = v[k];
        k += 1;
        for c in r + 1..n {
            let x = v[k] / SQRT_2;
            m[(r, c)] = x;
            m[(c, r)] = x;
            k += 1;
        }
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x0 - ||x1||` for cones, minimum entry / eigenvalue otherwise.
pub(crate) fn min_eig(cone: Cone, x: &[f64]) -> f64 {
    match cone {
        Cone::Lp(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => x[0] - dot(&x[1..], &x[1..]).sqrt(),
        Cone::Psd(n) => SymmetricEigen::new(smat(x, n)).eigenvalues.min(),
    }
}

/// Jordan product `x ∘ y`.
pub(crate) fn circ(cone: Cone, x: &[f64], y: &[f64]) -> Vec<f64> {
    match cone {
        Cone::Lp(_) => x.iter().zip(y).map(|(a, b)| a * b).collect(),
        Cone::Soc(_) => {
            let mut out = Vec::with_capacity(x.len());
            out.push(dot(x, y));
            for k in 1..x.len() {
                out.push(x[0] * y[k] + y[0] * x[k]);
            }
            out
        }
        Cone::Psd(n) => {
            let a = smat(x, n);
            let b = smat(y, n);
            let p = &a * &b;
            svec(&((&p + p.transpose()) * 0.5))
        }
    }
}

/// Largest `α >= 0` (possibly infinite) with `x + α·dx` in the cone; `x`
/// must be interior.
pub(crate) fn max_step(cone: Cone, x: &[f64], dx: &[f64]) -> f64 {
    match cone {
        Cone::Lp(_) => x
            .iter()
            .zip(dx)
            .filter(|(_, &d)| d < 0.0)
            .map(|(&xi, &d)| -xi / d)
            .fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => {
            let a = dx[0] * dx[0] - dot(&dx[1..], &dx[1..]);
            let b = x[0] * dx[0] - dot(&x[1..], &dx[1..]);
            let c = (x[0] * x[0] - dot(&x[1..], &x[1..])).max(0.0);
            smallest_positive_root(a, b, c)
        }
        Cone::Psd(n) => {
            let xm = smat(x, n);
            let Some(ch) = xm.cholesky() else {
                return 0.0;
            };
            let l = ch.l();
            let d = smat(dx, n);
            let Some(linv) = l.clone().try_inverse() else {
                return 0.0;
            };
            let m = &linv * d * linv.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let mu = SymmetricEigen::new(m).eigenvalues.min();
            if mu >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / mu
            }
        }
    }
}

/// Smallest positive root of `a α² + 2 b α + c` with `c >= 0`.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -(b + b.signum() * sq);
    let mut best = f64::INFINITY;
    for r in [q / a, if q != 0.0 { c / q } else { f64::NAN }] {
        if r.is_finite() && r > 0.0 {
            best = best.min(r);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub(crate) enum Scaling {
    Lp { d: Vec<f64> },
    Soc { beta: f64, v: DVector<f64> },
    Psd { r: DMatrix<f64>, rinv: DMatrix<f64> },
}

/// NT scaling of one block: returns `W` and `λ = W z = W⁻ᵀ s`.
pub(crate) fn nt_scaling(cone: Cone, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
    match cone {
        Cone::Lp(_) => {
            if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                return None;
            }
            let d = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
            let lam = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
            Some((Scaling::Lp { d }, lam))
        }
        Cone::Soc(m) => {
            let sn2 = s[0] * s[0] - dot(&s[1..], &s[1..]);
            let zn2 = z[0] * z[0] - dot(&z[1..], &z[1..]);
            if !(sn2 > 0.0 && zn2 > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                return None;
            }
            let sn = sn2.sqrt();
            let zn = zn2.sqrt();
            let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
            let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
            let mut wb = vec![0.0; m];
            wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            for k in 1..m {
                wb[k] = (sb[k] - zb[k]) / (2.0 * gamma);
            }
            let denom = (2.0 * (wb[0] + 1.0)).sqrt();
            let mut v = DVector::from_vec(wb);
            v[0] += 1.0;
            v /= denom;
            let sc = Scaling::Soc {
                beta: (sn / zn).sqrt(),
                v,
            };
            let lam = apply_w(cone, &sc, z);
            Some((sc, lam))
        }
        Cone::Psd(n) => {
            let ls = smat(s, n).cholesky()?.l();
            let lz = smat(z, n).cholesky()?.l();
            let prod = lz.transpose() * &ls;
            let svd = prod.svd(true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let sig = svd.singular_values;
            if sig.iter().any(|&x| !(x > 0.0)) {
                return None;
            }
            let isq = DMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
            let r = &ls * vt.transpose() * &isq;
            let rinv = &isq * u.transpose() * lz.transpose();
            let lam = svec(&DMatrix::from_diagonal(&sig));
            Some((Scaling::Psd { r, rinv }, lam))
        }
    }
}

pub(crate) fn identity_scaling(cone: Cone) -> Scaling {
    match cone {
        Cone::Lp(m) => Scaling::Lp { d: vec![1.0; m] },
        Cone::Soc(m) => {
            let mut v = DVector::zeros(m);
            v[0] = 1.0;
            Scaling::Soc { beta: 1.0, v }
        }
        Cone::Psd(n) => Scaling::Psd {
            r: DMatrix::identity(n, n),
            rinv: DMatrix::identity(n, n),
        },
    }
}

fn soc_reflect(beta: f64, v: &DVector<f64>, x: &[f64], inverse: bool) -> Vec<f64> {
    // W = β(2vvᵀ − J),  W⁻¹ = (1/β)(2Jv vᵀJ − J)
    let m = x.len();
    let mut jx = x.to_vec();
    for item in jx.iter_mut().skip(1) {
        *item = -*item;
    }
    let mut out = vec![0.0; m];
    if inverse {
        let mut jv = v.as_slice().to_vec();
        for item in jv.iter_mut().skip(1) {
            *item = -*item;
        }
        let a = dot(&jv, x);
        for k in 0..m {
            out[k] = (2.0 * jv[k] * a - jx[k]) / beta;
        }
    } else {
        let a = dot(v.as_slice(), x);
        for k in 0..m {
            out[k] = beta * (2.0 * v[k] * a - jx[k]);
        }
    }
    out
}

fn congruence(a: &DMatrix<f64>, x: &[f64], n: usize, transpose_left: bool) -> Vec<f64> {
    let xm = smat(x, n);
    let out = if transpose_left {
        a.transpose() * xm * a
    } else {
        a * xm * a.transpose()
    };
    svec(&out)
}

/// `W x`
pub(crate) fn apply_w(cone: Cone, sc: &Scaling, x: &[f64]) -> Vec<f64> {
    match (cone, sc) {
        (Cone::Lp(_), Scaling::Lp { d }) => x.iter().zip(d).map(|(a, b)| a * b).collect(),
        (Cone::Soc(_), Scaling::Soc { beta, v }) => soc_reflect(*beta, v, x, false),
        (Cone::Psd(n), Scaling::Psd { r, .. }) => congruence(r, x, n, true),
        _ => unreachable!("scaling/cone mismatch"),
    }
}

/// `Wᵀ x`
pub(crate) fn apply_wt(cone: Cone, sc: &Scaling, x: &[f64]) -> Vec<f64> {
    match (cone, sc) {
        (Cone::Psd(n), Scaling::Psd { r, .. }) => congruence(r, x, n, false),
        _ => apply_w(cone, sc, x),
    }
}

/// `W⁻¹ x`
pub(crate) fn apply_winv(cone: Cone, sc: &Scaling, x: &[f64]) -> Vec<f64> {
    match (cone, sc) {
        (Cone::Lp(_), Scaling::Lp { d }) => x.iter().zip(d).map(|(a, b)| a / b).collect(),
        (Cone::Soc(_), Scaling::Soc { beta, v }) => soc_reflect(*beta, v, x, true),
        (Cone::Psd(n), Scaling::Psd { rinv, .. }) => congruence(rinv, x, n, true),
        _ => unreachable!("scaling/cone mismatch"),
    }
}

/// `W⁻ᵀ x`
pub(crate) fn apply_winvt(cone: Cone, sc: &Scaling, x: &[f64]) -> Vec<f64> {
    match (cone, sc) {
        (Cone::Psd(n), Scaling::Psd { rinv, .. }) => congruence(rinv, x, n, false),
        _ => apply_winv(cone, sc, x),
    }
}

/// Solves `λ ∘ u = d` for `u`, with `λ` the scaled point of the block.
pub(crate) fn lambda_div(cone: Cone, lam: &[f64], d: &[f64]) -> Vec<f64> {
    match cone {
        Cone::Lp(_) => d.iter().zip(lam).map(|(a, b)| a / b).collect(),
        Cone::Soc(_) => {
            let l0 = lam[0];
            let det = l0 * l0 - dot(&lam[1..], &lam[1..]);
            let u0 = (l0 * d[0] - dot(&lam[1..], &d[1..])) / det;
            let mut out = Vec::with_capacity(d.len());
            out.push(u0);
            for k in 1..d.len() {
                out.push((d[k] - u0 * lam[k]) / l0);
            }
            out
        }
        Cone::Psd(n) => {
            let diag: Vec<f64> = (0..n).map(|i| lam[svec_index(n, i, i)]).collect();
            let mut out = vec![0.0; d.len()];
            for r in 0..n {
                for c in r..n {
                    let k = svec_index(n, r, c);
                    out[k] = 2.0 * d[k] / (diag[r] + diag[c]);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    #[test]
    fn svec_round_trip_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.3, 0.0, 0.3, 1.0]);
        assert!(close(&svec(&smat(&svec(&a), 3)), &svec(&a), 1e-15));
        let tr = (&a * &b).trace();
        assert!((dot(&svec(&a), &svec(&b)) - tr).abs() < 1e-12);
    }

    #[test]
    fn soc_scaling_is_consistent() {
        let cone = Cone::Soc(3);
        let s = [3.0, 1.0, -0.5];
        let z = [2.0, -0.3, 1.1];
        let (sc, lam) = nt_scaling(cone, &s, &z).unwrap();
        let other = apply_winvt(cone, &sc, &s);
        assert!(close(&lam, &other, 1e-12), "{lam:?} vs {other:?}");
        let back = apply_winv(cone, &sc, &apply_w(cone, &sc, &s));
        assert!(close(&back, &s, 1e-12));
    }

    #[test]
    fn psd_scaling_is_consistent() {
        let cone = Cone::Psd(3);
        let s = svec(&DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]));
        let z = svec(&DMatrix::from_row_slice(3, 3, &[1.0, -0.4, 0.0, -0.4, 2.0, 0.5, 0.0, 0.5, 3.0]));
        let (sc, lam) = nt_scaling(cone, &s, &z).unwrap();
        assert!(close(&lam, &apply_w(cone, &sc, &z), 1e-10));
        assert!(close(&lam, &apply_winvt(cone, &sc, &s), 1e-10));
        let x = svec(&DMatrix::from_row_slice(3, 3, &[0.1, 0.7, 0.2, 0.7, -1.0, 0.4, 0.2, 0.4, 0.3]));
        assert!(close(&apply_winv(cone, &sc, &apply_w(cone, &sc, &x)), &x, 1e-10));
        assert!(close(&apply_winvt(cone, &sc, &apply_wt(cone, &sc, &x)), &x, 1e-10));
        let u = lambda_div(cone, &lam, &x);
        assert!(close(&circ(cone, &lam, &u), &x, 1e-10));
    }

    #[test]
    fn soc_division_inverts_product() {
        let cone = Cone::Soc(3);
        let lam = [2.0, 0.5, -0.7];
        let d = [0.3, 1.0, -2.0];
        let u = lambda_div(cone, &lam, &d);
        assert!(close(&circ(cone, &lam, &u), &d, 1e-12));
    }

    #[test]
    fn step_to_boundary() {
        assert!((max_step(Cone::Lp(2), &[1.0, 2.0], &[-1.0, -4.0]) - 0.5).abs() < 1e-15);
        let a = max_step(Cone::Soc(2), &[1.0, 0.0], &[0.0, 1.0]);
        assert!((a - 1.0).abs() < 1e-12);
        let p = max_step(Cone::Psd(2), &svec(&DMatrix::identity(2, 2)), &svec(&DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0])));
        assert!((p - 0.5).abs() < 1e-12);
    }
}
