//! Embedded primal-dual interior-point solver.
//!
//! Programs are compiled to `min cᵀx  s.t.  Gx + s = h,  s ∈ K` with `K` a
//! product of nonnegative orthants, second-order cones and PSD cones, and
//! solved through the homogeneous self-dual embedding with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector. The reduced KKT system is
//! formed as `Ĝᵀ Ĝ` with `Ĝ = W⁻ᵀ G`, accumulated block by block over each
//! block's own columns.

mod cones;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::expr::LinExpr;
use crate::program::{ConicProgram, ConstraintKind};
use cones::{Cone, Scaling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub primal_feas: f64,
    pub dual_feas: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    /// Solution vector; empty when the program is infeasible or unbounded.
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residuals: Residuals,
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual residual tolerance.
    pub feastol: f64,
    /// Relative duality-gap tolerance.
    pub reltol: f64,
    /// Absolute duality-gap tolerance, used when the objective is near zero.
    pub abstol: f64,
    pub max_iter: usize,
    pub equilibrate: bool,
    /// Looser residual tolerance accepted when the iteration breaks down.
    pub feastol_inacc: f64,
    /// Looser gap tolerance accepted when the iteration breaks down.
    pub reltol_inacc: f64,
    /// Print one progress line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feastol: 1e-7,
            reltol: 1e-7,
            abstol: 1e-10,
            max_iter: 200,
            equilibrate: true,
            feastol_inacc: 1e-4,
            reltol_inacc: 5e-5,
            verbose: false,
        }
    }
}

/// Anything that can solve a [`ConicProgram`].
pub trait ConicSolver: Send + Sync {
    fn solve(&self, p: &ConicProgram) -> SolveReport;
}

/// The built-in interior-point method.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint {
    pub options: SolverOptions,
}

impl InteriorPoint {
    pub fn new(options: SolverOptions) -> Self {
        InteriorPoint { options }
    }
}

impl ConicSolver for InteriorPoint {
    fn solve(&self, p: &ConicProgram) -> SolveReport {
        solve(p, &self.options)
    }
}

struct Block {
    cone: Cone,
    /// Compiled column indices touched by this block.
    cols: Vec<usize>,
    /// Dense rows × cols.len() slice of G.
    g: DMatrix<f64>,
    h: Vec<f64>,
    offset: usize,
}

impl Block {
    fn rows(&self) -> usize {
        self.cone.rows()
    }
}

struct Compiled {
    blocks: Vec<Block>,
    c: Vec<f64>,
    /// Compiled column → program variable.
    var_of: Vec<usize>,
    n_rows: usize,
    degree: usize,
}

enum Presolved {
    Ready(Compiled),
    Infeasible(String),
    Unbounded(String),
}

fn collect_cols(exprs: &[&LinExpr], col_of: &[Option<usize>]) -> Vec<usize> {
    let mut cols: Vec<usize> = exprs
        .iter()
        .flat_map(|e| e.terms().map(|(i, _)| col_of[i].unwrap()))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

fn make_block(cone: Cone, rows: &[(f64, &LinExpr)], col_of: &[Option<usize>]) -> Block {
    let exprs: Vec<&LinExpr> = rows.iter().map(|(_, e)| *e).collect();
    let cols = collect_cols(&exprs, col_of);
    let mut g = DMatrix::zeros(rows.len(), cols.len());
    let mut h = Vec::with_capacity(rows.len());
    for (r, (scale, e)) in rows.iter().enumerate() {
        for (i, coef) in e.terms() {
            let local = cols.binary_search(&col_of[i].unwrap()).unwrap();
            g[(r, local)] = -scale * coef;
        }
        h.push(scale * e.constant);
    }
    Block {
        cone,
        cols,
        g,
        h,
        offset: 0,
    }
}

fn compile(p: &ConicProgram, feastol: f64) -> Presolved {
    let mut used = vec![false; p.n_vars];
    let mut mark = |e: &LinExpr| {
        for (i, _) in e.terms() {
            used[i] = true;
        }
    };
    for c in &p.constraints {
        match &c.kind {
            ConstraintKind::Nonneg(e) => mark(e),
            ConstraintKind::Soc { t, v } => {
                mark(t);
                v.iter().for_each(&mut mark);
            }
            ConstraintKind::Psd(m) => m.entries().for_each(|(_, _, e)| mark(e)),
        }
    }
    let mut col_of = vec![None; p.n_vars];
    let mut var_of = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            col_of[i] = Some(var_of.len());
            var_of.push(i);
        }
    }
    let mut c = vec![0.0; var_of.len()];
    for (i, coef) in p.objective.terms() {
        match col_of[i] {
            Some(k) => c[k] = coef,
            None => {
                return Presolved::Unbounded(format!(
                    "variable {i} has objective weight {coef} but appears in no constraint"
                ))
            }
        }
    }

    let mut blocks = Vec::new();
    let scalar_row = |label: &str, e: &LinExpr, blocks: &mut Vec<Block>| -> Option<String> {
        if e.is_constant() {
            if e.constant < -feastol {
                return Some(format!("constraint `{label}` is constant and violated"));
            }
            return None;
        }
        blocks.push(make_block(Cone::Lp(1), &[(1.0, e)], &col_of));
        None
    };
    for con in &p.constraints {
        match &con.kind {
            ConstraintKind::Nonneg(e) => {
                if let Some(m) = scalar_row(&con.label, e, &mut blocks) {
                    return Presolved::Infeasible(m);
                }
            }
            ConstraintKind::Soc { t, v } => {
                let v: Vec<&LinExpr> = v
                    .iter()
                    .filter(|e| !(e.is_constant() && e.constant == 0.0))
                    .collect();
                if v.is_empty() {
                    if let Some(m) = scalar_row(&con.label, t, &mut blocks) {
                        return Presolved::Infeasible(m);
                    }
                    continue;
                }
                let mut rows = vec![(1.0, t)];
                rows.extend(v.iter().map(|e| (1.0, *e)));
                blocks.push(make_block(Cone::Soc(rows.len()), &rows, &col_of));
            }
            ConstraintKind::Psd(m) => {
                let n = m.dim();
                // drop rows/columns that are identically zero
                let keep: Vec<usize> = (0..n)
                    .filter(|&r| (0..n).any(|c| m.get(r, c).is_some()))
                    .collect();
                if m.is_diagonal() || keep.len() <= 1 {
                    for &r in &keep {
                        if let Some(e) = m.get(r, r) {
                            if let Some(msg) = scalar_row(&con.label, e, &mut blocks) {
                                return Presolved::Infeasible(msg);
                            }
                        }
                    }
                    continue;
                }
                let nk = keep.len();
                let zero = LinExpr::zero();
                let mut rows = Vec::with_capacity(nk * (nk + 1) / 2);
                for a in 0..nk {
                    for b in a..nk {
                        let e = m.get(keep[a], keep[b]).unwrap_or(&zero);
                        let scale = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
                        rows.push((scale, e));
                    }
                }
                blocks.push(make_block(Cone::Psd(nk), &rows, &col_of));
            }
        }
    }
    let mut offset = 0;
    let mut degree = 0;
    for b in &mut blocks {
        b.offset = offset;
        offset += b.rows();
        degree += b.cone.degree();
    }
    Presolved::Ready(Compiled {
        blocks,
        c,
        var_of,
        n_rows: offset,
        degree,
    })
}

/// Scalar row scale per block and column scales, so that `e_b · G_b · D`
/// has entries of comparable magnitude.
fn equilibrate(cp: &mut Compiled) -> Vec<f64> {
    let n = cp.c.len();
    let mut dcol = vec![1.0; n];
    for _ in 0..12 {
        for b in &mut cp.blocks {
            let m = b.g.amax();
            if m > 0.0 {
                let s = 1.0 / m.sqrt();
                b.g *= s;
                b.h.iter_mut().for_each(|v| *v *= s);
            }
        }
        let mut cmax = vec![0.0f64; n];
        for b in &cp.blocks {
            for (k, &col) in b.cols.iter().enumerate() {
                cmax[col] = cmax[col].max(b.g.column(k).amax());
            }
        }
        for b in &mut cp.blocks {
            for (k, &col) in b.cols.iter().enumerate() {
                if cmax[col] > 0.0 {
                    let s = 1.0 / cmax[col].sqrt();
                    b.g.column_mut(k).scale_mut(s);
                }
            }
        }
        for j in 0..n {
            if cmax[j] > 0.0 {
                dcol[j] /= cmax[j].sqrt();
            }
        }
    }
    for (cj, dj) in cp.c.iter_mut().zip(&dcol) {
        *cj *= dj;
    }
    dcol
}

struct Kkt<'a> {
    cp: &'a Compiled,
    scalings: Vec<Scaling>,
    /// Ĝ_b = W_b⁻ᵀ G_b
    ghat: Vec<DMatrix<f64>>,
    h: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(cp: &'a Compiled, scalings: Vec<Scaling>) -> Option<Self> {
        let n = cp.c.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut ghat = Vec::with_capacity(cp.blocks.len());
        for (b, sc) in cp.blocks.iter().zip(&scalings) {
            let mut gh = DMatrix::zeros(b.rows(), b.cols.len());
            for k in 0..b.cols.len() {
                let col: Vec<f64> = b.g.column(k).iter().copied().collect();
                let scaled = cones::apply_winvt(b.cone, sc, &col);
                gh.column_mut(k).copy_from_slice(&scaled);
            }
            let local = gh.tr_mul(&gh);
            for (a, &ca) in b.cols.iter().enumerate() {
                for (bb, &cb) in b.cols.iter().enumerate() {
                    h[(ca, cb)] += local[(a, bb)];
                }
            }
            ghat.push(gh);
        }
        let maxd = (0..n).map(|i| h[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let mut reg = 1e-13 * maxd;
        for _ in 0..6 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            if let Some(chol) = hr.cholesky() {
                return Some(Kkt {
                    cp,
                    scalings,
                    ghat,
                    h,
                    chol,
                });
            }
            reg *= 100.0;
        }
        None
    }

    /// Solves `[0 Gᵀ; G −WᵀW] [x; z] = [bx; bz]`; returns `x` and `W z`.
    /// The normal equations lose accuracy as the scalings degenerate, so the
    /// full system residual is refined a few times.
    fn solve(&self, bx: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut x, mut wz) = self.solve_normal(bx, bz);
        let residual = |x: &[f64], wz: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let z = self.map_blocks(wz, cones::apply_winv);
            let gtz = gt_mul(self.cp, &z);
            let rx: Vec<f64> = bx.iter().zip(&gtz).map(|(a, b)| a - b).collect();
            let gx = g_mul(self.cp, x);
            let wtwz = self.map_blocks(wz, cones::apply_wt);
            let rz: Vec<f64> = (0..bz.len()).map(|i| bz[i] - gx[i] + wtwz[i]).collect();
            (rx, rz)
        };
        let (mut rx, mut rz) = residual(&x, &wz);
        let mut err = norm(&rx) + norm(&rz);
        for _ in 0..4 {
            if err <= 1e-14 * (1.0 + norm(bx) + norm(bz)) {
                break;
            }
            let (dx, dwz) = self.solve_normal(&rx, &rz);
            let mut x1 = x.clone();
            axpy(1.0, &dx, &mut x1);
            let mut wz1 = wz.clone();
            axpy(1.0, &dwz, &mut wz1);
            let (rx1, rz1) = residual(&x1, &wz1);
            let err1 = norm(&rx1) + norm(&rz1);
            if !(err1 < err) {
                break;
            }
            (x, wz, rx, rz, err) = (x1, wz1, rx1, rz1, err1);
        }
        (x, wz)
    }

    fn solve_normal(&self, bx: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cp = self.cp;
        let mut wbz = vec![0.0; cp.n_rows];
        let mut rhs = DVector::from_column_slice(bx);
        for ((b, sc), gh) in cp.blocks.iter().zip(&self.scalings).zip(&self.ghat) {
            let seg = &bz[b.offset..b.offset + b.rows()];
            let v = cones::apply_winvt(b.cone, sc, seg);
            let contrib = gh.tr_mul(&DVector::from_column_slice(&v));
            for (k, &col) in b.cols.iter().enumerate() {
                rhs[col] += contrib[k];
            }
            wbz[b.offset..b.offset + b.rows()].copy_from_slice(&v);
        }
        let mut x = self.chol.solve(&rhs);
        for _ in 0..2 {
            let r = &rhs - &self.h * &x;
            x += self.chol.solve(&r);
        }
        let mut wz = vec![0.0; cp.n_rows];
        for (b, gh) in cp.blocks.iter().zip(&self.ghat) {
            let xl = DVector::from_iterator(b.cols.len(), b.cols.iter().map(|&c| x[c]));
            let gx = gh * xl;
            for r in 0..b.rows() {
                wz[b.offset + r] = gx[r] - wbz[b.offset + r];
            }
        }
        (x.as_slice().to_vec(), wz)
    }

    fn map_blocks(&self, v: &[f64], f: impl Fn(Cone, &Scaling, &[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (b, sc) in self.cp.blocks.iter().zip(&self.scalings) {
            let r = b.offset..b.offset + b.rows();
            out[r.clone()].copy_from_slice(&f(b.cone, sc, &v[r]));
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn g_mul(cp: &Compiled, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cp.n_rows];
    for b in &cp.blocks {
        for r in 0..b.rows() {
            let mut acc = 0.0;
            for (k, &col) in b.cols.iter().enumerate() {
                acc += b.g[(r, k)] * x[col];
            }
            out[b.offset + r] = acc;
        }
    }
    out
}

fn gt_mul(cp: &Compiled, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cp.c.len()];
    for b in &cp.blocks {
        for (k, &col) in b.cols.iter().enumerate() {
            let mut acc = 0.0;
            for r in 0..b.rows() {
                acc += b.g[(r, k)] * z[b.offset + r];
            }
            out[col] += acc;
        }
    }
    out
}

fn h_vec(cp: &Compiled) -> Vec<f64> {
    let mut h = vec![0.0; cp.n_rows];
    for b in &cp.blocks {
        h[b.offset..b.offset + b.rows()].copy_from_slice(&b.h);
    }
    h
}

fn blockwise_min_eig(cp: &Compiled, v: &[f64]) -> f64 {
    cp.blocks
        .iter()
        .map(|b| cones::min_eig(b.cone, &v[b.offset..b.offset + b.rows()]))
        .fold(f64::INFINITY, f64::min)
}

fn shift_into_cone(cp: &Compiled, v: &mut [f64]) {
    let t = -blockwise_min_eig(cp, v);
    if t >= -1e-8 * norm(v).max(1.0) {
        for b in &cp.blocks {
            let e = b.cone.identity();
            axpy(1.0 + t, &e, &mut v[b.offset..b.offset + b.rows()]);
        }
    }
}

fn max_step_all(cp: &Compiled, v: &[f64], dv: &[f64]) -> f64 {
    cp.blocks
        .iter()
        .map(|b| {
            let r = b.offset..b.offset + b.rows();
            cones::max_step(b.cone, &v[r.clone()], &dv[r])
        })
        .fold(f64::INFINITY, f64::min)
}

fn circ_all(cp: &Compiled, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for blk in &cp.blocks {
        let r = blk.offset..blk.offset + blk.rows();
        out[r.clone()].copy_from_slice(&cones::circ(blk.cone, &a[r.clone()], &b[r]));
    }
    out
}

fn finish(
    p: &ConicProgram,
    cp: Option<(&Compiled, &[f64])>,
    x_scaled: &[f64],
    status: SolveStatus,
    iterations: usize,
    residuals: Residuals,
    message: Option<String>,
) -> SolveReport {
    let mut x = vec![0.0; p.n_vars];
    if let Some((cp, dcol)) = cp.filter(|_| !x_scaled.is_empty()) {
        for (k, &v) in cp.var_of.iter().enumerate() {
            x[v] = x_scaled[k] * dcol[k];
        }
    }
    let keep_x = !matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded);
    let objective = if keep_x {
        p.objective.eval(&x)
    } else if status == SolveStatus::Infeasible {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    SolveReport {
        status,
        objective,
        x: if keep_x { x } else { Vec::new() },
        iterations,
        residuals,
        message,
    }
}

/// Solves `p` with the embedded interior-point method.
pub fn solve(p: &ConicProgram, opts: &SolverOptions) -> SolveReport {
    let mut cp = match compile(p, opts.feastol) {
        Presolved::Ready(cp) => cp,
        Presolved::Infeasible(msg) => {
            return finish(p, None, &[], SolveStatus::Infeasible, 0, Residuals::default(), Some(msg))
        }
        Presolved::Unbounded(msg) => {
            return finish(p, None, &[], SolveStatus::Unbounded, 0, Residuals::default(), Some(msg))
        }
    };
    let n = cp.c.len();
    if cp.blocks.is_empty() || n == 0 {
        // no active constraints: every remaining column has zero cost
        return finish(p, Some((&cp, &vec![1.0; n])), &vec![0.0; n], SolveStatus::Optimal, 0, Residuals::default(), None);
    }
    let dcol = if opts.equilibrate {
        equilibrate(&mut cp)
    } else {
        vec![1.0; n]
    };
    let cscale = cp.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cscale = if cscale > 0.0 { cscale } else { 1.0 };
    cp.c.iter_mut().for_each(|v| *v /= cscale);
    ipm(p, &cp, &dcol, opts)
}

/// `τ/κ` below this means the iterates only certify (near) infeasibility.
const TAU_COLLAPSE: f64 = 1e-10;

fn ipm(p: &ConicProgram, cp: &Compiled, dcol: &[f64], opts: &SolverOptions) -> SolveReport {
    let n = cp.c.len();
    let m_rows = cp.n_rows;
    let c = &cp.c;
    let h = h_vec(cp);
    let resx0 = norm(c).max(1.0);
    let resz0 = norm(&h).max(1.0);
    let deg = cp.degree as f64;

    // starting point from least-squares solves with identity scaling
    let ident: Vec<Scaling> = cp.blocks.iter().map(|b| cones::identity_scaling(b.cone)).collect();
    let Some(k0) = Kkt::new(cp, ident) else {
        return finish(p, Some((cp, dcol)), &vec![0.0; n], SolveStatus::NumericalFailure, 0, Residuals::default(), Some("constraint matrix is rank deficient".into()));
    };
    let (mut x, wz) = k0.solve(&vec![0.0; n], &h);
    let mut s: Vec<f64> = wz.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, mut z) = k0.solve(&neg_c, &vec![0.0; m_rows]);
    drop(k0);
    shift_into_cone(cp, &mut s);
    shift_into_cone(cp, &mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut res = Residuals::default();
    // on breakdown, a point that meets the loose tolerances is still returned as optimal
    // and so is an infeasibility certificate that meets them
    let breakdown = |x: &[f64], z: &[f64], tau: f64, iter: usize, res: Residuals, why: &str| -> SolveReport {
        let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
        let close = res.primal_feas <= opts.feastol_inacc
            && res.dual_feas <= opts.feastol_inacc
            && res.gap <= opts.reltol_inacc;
        if close && tau > 0.0 {
            return finish(p, Some((cp, dcol)), &xs, SolveStatus::Optimal, iter, res, Some(format!("reduced accuracy after {why}")));
        }
        let hz = dot(&h, z);
        if hz < 0.0 {
            let pinf = norm(&gt_mul(cp, z)) / resx0 / -hz;
            if pinf <= opts.feastol_inacc {
                let msg = format!("reduced accuracy infeasibility certificate residual {pinf:.2e} after {why}");
                return finish(p, Some((cp, dcol)), &[], SolveStatus::Infeasible, iter, res, Some(msg));
            }
        }
        finish(p, Some((cp, dcol)), &xs, SolveStatus::NumericalFailure, iter, res, Some(why.to_string()))
    };
    for iter in 0..=opts.max_iter {
        let gx = g_mul(cp, &x);
        let gtz = gt_mul(cp, &z);
        let cx = dot(c, &x);
        let hz = dot(&h, &z);
        let rx: Vec<f64> = gtz.iter().zip(c).map(|(a, b)| a + b * tau).collect();
        let rz: Vec<f64> = (0..m_rows).map(|i| s[i] + gx[i] - h[i] * tau).collect();
        let rt = kappa + cx + hz;
        let sz = dot(&s, &z);
        let mu = (sz + tau * kappa) / (deg + 1.0);
        let pcost = cx / tau;
        let dcost = -hz / tau;
        let gap = sz / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let pres = norm(&rz) / tau / resz0;
        let dres = norm(&rx) / tau / resx0;
        res = Residuals {
            primal_feas: pres,
            dual_feas: dres,
            gap: relgap.min(gap),
        };
        if opts.verbose {
            eprintln!("{iter:3} {pcost:+.6e} {dcost:+.6e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e} mu {mu:.2e}");
        }
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return finish(p, Some((cp, dcol)), &x.iter().map(|v| v / tau).collect::<Vec<_>>(), SolveStatus::NumericalFailure, iter, res, Some("non-finite iterate".into()));
        }
        if pres <= opts.feastol && dres <= opts.feastol && (gap <= opts.abstol || relgap <= opts.reltol) {
            let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
            return finish(p, Some((cp, dcol)), &xs, SolveStatus::Optimal, iter, res, None);
        }
        if hz < 0.0 {
            let pinf = norm(&gtz) / resx0 / -hz;
            if pinf <= opts.feastol {
                return finish(p, Some((cp, dcol)), &[], SolveStatus::Infeasible, iter, res, Some(format!("infeasibility certificate residual {pinf:.2e}")));
            }
        }
        if cx < 0.0 {
            let gxs: Vec<f64> = gx.iter().zip(&s).map(|(a, b)| a + b).collect();
            let dinf = norm(&gxs) / resz0 / -cx;
            if dinf <= opts.feastol {
                return finish(p, Some((cp, dcol)), &[], SolveStatus::Unbounded, iter, res, Some(format!("unboundedness certificate residual {dinf:.2e}")));
            }
        }
        if iter == opts.max_iter {
            break;
        }
        if tau < TAU_COLLAPSE * kappa.max(1.0) {
            return breakdown(&x, &z, tau, iter, res, "homogeneous scale collapsed");
        }

        let mut scalings = Vec::with_capacity(cp.blocks.len());
        let mut lam = vec![0.0; m_rows];
        for b in &cp.blocks {
            let r = b.offset..b.offset + b.rows();
            match cones::nt_scaling(b.cone, &s[r.clone()], &z[r.clone()]) {
                Some((sc, l)) => {
                    lam[r].copy_from_slice(&l);
                    scalings.push(sc);
                }
                None => return breakdown(&x, &z, tau, iter, res, "iterate left the cone interior"),
            }
        }
        let Some(kkt) = Kkt::new(cp, scalings) else {
            return breakdown(&x, &z, tau, iter, res, "reduced KKT matrix not positive definite");
        };
        let (x1, wz1) = kkt.solve(&neg_c, &h);
        let z1 = kkt.map_blocks(&wz1, cones::apply_winv);
        let denom = dot(c, &x1) + dot(&h, &z1) - kappa / tau;
        let lam_sq = circ_all(cp, &lam, &lam);

        struct Dir {
            dx: Vec<f64>,
            dz: Vec<f64>,
            ds: Vec<f64>,
            dt: f64,
            dk: f64,
            ds_scaled: Vec<f64>,
            dz_scaled: Vec<f64>,
        }
        let direction = |gamma: f64, dsv: &[f64], dkap: f64| -> Dir {
            let bx: Vec<f64> = rx.iter().map(|v| -(1.0 - gamma) * v).collect();
            let ldiv = {
                let mut out = vec![0.0; m_rows];
                for b in &cp.blocks {
                    let r = b.offset..b.offset + b.rows();
                    out[r.clone()].copy_from_slice(&cones::lambda_div(b.cone, &lam[r.clone()], &dsv[r]));
                }
                out
            };
            let wt_ldiv = kkt.map_blocks(&ldiv, cones::apply_wt);
            let bz: Vec<f64> = (0..m_rows).map(|i| -(1.0 - gamma) * rz[i] - wt_ldiv[i]).collect();
            let (x2, wz2) = kkt.solve(&bx, &bz);
            let z2 = kkt.map_blocks(&wz2, cones::apply_winv);
            let dt = (-(1.0 - gamma) * rt - dkap / tau - dot(c, &x2) - dot(&h, &z2)) / denom;
            let mut dx = x2;
            axpy(dt, &x1, &mut dx);
            let mut wdz = wz2;
            axpy(dt, &wz1, &mut wdz);
            let dz = kkt.map_blocks(&wdz, cones::apply_winv);
            let ds_scaled: Vec<f64> = ldiv.iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let ds = kkt.map_blocks(&ds_scaled, cones::apply_wt);
            let dk = (dkap - kappa * dt) / tau;
            Dir {
                dx,
                dz,
                ds,
                dt,
                dk,
                ds_scaled,
                dz_scaled: wdz,
            }
        };
        let step_len = |d: &Dir| -> f64 {
            let mut a = max_step_all(cp, &s, &d.ds).min(max_step_all(cp, &z, &d.dz));
            if d.dt < 0.0 {
                a = a.min(-tau / d.dt);
            }
            if d.dk < 0.0 {
                a = a.min(-kappa / d.dk);
            }
            a
        };

        // predictor
        let ds_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let aff = direction(0.0, &ds_aff, -tau * kappa);
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // corrector
        let cross = circ_all(cp, &aff.ds_scaled, &aff.dz_scaled);
        let mut ds_cor: Vec<f64> = (0..m_rows).map(|i| -lam_sq[i] - cross[i]).collect();
        for b in &cp.blocks {
            let e = b.cone.identity();
            axpy(sigma * mu, &e, &mut ds_cor[b.offset..b.offset + b.rows()]);
        }
        let dk_cor = -tau * kappa + sigma * mu - aff.dt * aff.dk;
        let d = direction(sigma, &ds_cor, dk_cor);
        let alpha = (0.99 * step_len(&d)).min(1.0);
        if !(alpha > 1e-14) {
            return breakdown(&x, &z, tau, iter, res, "step length collapsed");
        }
        axpy(alpha, &d.dx, &mut x);
        axpy(alpha, &d.ds, &mut s);
        axpy(alpha, &d.dz, &mut z);
        tau += alpha * d.dt;
        kappa += alpha * d.dk;
    }
    let rep = breakdown(&x, &z, tau, opts.max_iter, res, "iteration limit");
    if rep.status == SolveStatus::Optimal {
        rep
    } else {
        SolveReport { status: SolveStatus::MaxIterations, ..rep }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::SymAffine;

    #[test]
    fn lp_with_two_rows() {
        // min x + y  s.t. x >= 1, y >= 2
        let mut p = ConicProgram::new();
        let v = p.add_vector("v", 2).unwrap();
        p.add_nonneg("a", v.expr(0) - LinExpr::constant(1.0)).unwrap();
        p.add_nonneg("b", v.expr(1) - LinExpr::constant(2.0)).unwrap();
        p.minimize(v.expr(0) + v.expr(1)).unwrap();
        let r = solve(&p, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn psd_two_by_two() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x").unwrap();
        let mut m = SymAffine::zeros(2);
        m.add(0, 0, &LinExpr::var(x));
        m.add(1, 1, &LinExpr::var(x));
        m.add(0, 1, &LinExpr::constant(1.0));
        p.add_psd("m", m).unwrap();
        p.minimize(LinExpr::var(x)).unwrap();
        let r = solve(&p, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!((r.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasible_lp() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x").unwrap();
        p.add_nonneg("lo", LinExpr::var(x) - LinExpr::constant(2.0)).unwrap();
        p.add_nonneg("hi", LinExpr::constant(1.0) - LinExpr::var(x)).unwrap();
        p.minimize(LinExpr::var(x)).unwrap();
        let r = solve(&p, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Infeasible, "{r:?}");
    }

    #[test]
    fn detects_unbounded() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x").unwrap();
        p.add_nonneg("hi", LinExpr::constant(1.0) - LinExpr::var(x)).unwrap();
        p.minimize(LinExpr::var(x)).unwrap();
        let r = solve(&p, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Unbounded, "{r:?}");
    }
}
