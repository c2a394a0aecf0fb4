//! Conic models of the five CI precoding schemes and precoder extraction.
//!
//! Every model is built in noise-normalized units: channels are scaled by
//! `√P0/σ_n` so the noise amplitude is 1, and precoders by `1/√P0`, where
//! `P0` is the mean single-user minimum power of the draw. Reported powers
//! are converted back to watts.
//!
//! Complex vectors enter as stacked `[Re; Im]` reals. For a channel `g` and
//! precoder `w`, `Re(gᵀw) = [g_R; −g_I]ᵀw_s` and `Im(gᵀw) = [g_I; g_R]ᵀw_s`.

use std::fmt;
use std::str::FromStr;

use cicoord_conic::{
    add_quantile_soc, lift_rank_one, s_procedure_lmi, solve, verify_solution, ConeForm,
    ConicProgram, LinExpr, MatVar, SolveReport, SolveStatus, SolverOptions, SymAffine, VarBlock,
};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::{ball_radius_squared, normal_quantile, rho_squared, xi_squared, BallLaw, BoundParams};
use crate::error::{CoordError, Result};
use crate::geometry::{rotate_full, rotate_partial, EffectiveChannels, Precoders, SymbolDraw};
use crate::scenario::{ChannelSet, CsiEstimate, ErrorSharing, Scenario, StatisticalCsi};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    FullCiProb,
    FullCiDet,
    PartialCiProb,
    PartialCiDet,
    StatCi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    CompPerfectCsi,
    CbfProb,
    CbfDet,
}

/// Any precoding method the simulator can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    Ci(SchemeKind),
    Baseline(BaselineKind),
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::FullCiProb,
        SchemeKind::FullCiDet,
        SchemeKind::PartialCiProb,
        SchemeKind::PartialCiDet,
        SchemeKind::StatCi,
    ];

    pub fn is_full(self) -> bool {
        matches!(self, SchemeKind::FullCiProb | SchemeKind::FullCiDet)
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, SchemeKind::FullCiProb | SchemeKind::PartialCiProb)
    }
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Ci(SchemeKind::FullCiProb),
        Scheme::Ci(SchemeKind::FullCiDet),
        Scheme::Ci(SchemeKind::PartialCiProb),
        Scheme::Ci(SchemeKind::PartialCiDet),
        Scheme::Ci(SchemeKind::StatCi),
        Scheme::Baseline(BaselineKind::CompPerfectCsi),
        Scheme::Baseline(BaselineKind::CbfProb),
        Scheme::Baseline(BaselineKind::CbfDet),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ci(SchemeKind::FullCiProb) => "full-ci-prob",
            Scheme::Ci(SchemeKind::FullCiDet) => "full-ci-det",
            Scheme::Ci(SchemeKind::PartialCiProb) => "partial-ci-prob",
            Scheme::Ci(SchemeKind::PartialCiDet) => "partial-ci-det",
            Scheme::Ci(SchemeKind::StatCi) => "stat-ci",
            Scheme::Baseline(BaselineKind::CompPerfectCsi) => "comp-perfect",
            Scheme::Baseline(BaselineKind::CbfProb) => "cbf-prob",
            Scheme::Baseline(BaselineKind::CbfDet) => "cbf-det",
        }
    }

    /// True when the scheme guarantees its targets over a bounded error set.
    pub fn is_worst_case(self) -> bool {
        matches!(
            self,
            Scheme::Ci(SchemeKind::FullCiDet | SchemeKind::PartialCiDet | SchemeKind::StatCi)
                | Scheme::Baseline(BaselineKind::CbfDet)
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = CoordError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CoordError::config("scheme", format!("unknown scheme `{s}`")))
    }
}

/// How `φ ≥ max √(inter-cell interference)` is enforced in the partial and
/// statistical schemes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Exact convex form: a robust cone over the error ball (a plain cone for
    /// statistical CSI).
    #[default]
    Exact,
    /// The auxiliary-variable lifting with a rank-relaxed `[φ, u]` outer
    /// product, kept literally. Its tightness is audited after the solve.
    Lifting,
    /// The lifting plus tangent cuts `u <= 2φ̂φ − φ̂²`, iterated from the
    /// exact solution until the objective settles.
    Ccp,
}

/// Per-entry variance of the CI half-constraint noise, as a multiple of `σ²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    /// `1 + tan²θ`.
    #[default]
    SumOfSquares,
    /// `(1 + tanθ)²`.
    SquaredSum,
}

/// Sign of the multiplier block in the interference certificate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierSign {
    #[default]
    Plus,
    /// `−λI − ΣL(W)`: infeasible for any nonzero interfering precoder.
    Minus,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Σ Tr(W_j)` over rank-one lifts.
    #[default]
    LiftedTrace,
    /// `τ >= ||w||²` as a rotated cone.
    Epigraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeOptions {
    pub cone_form: ConeForm,
    pub coupling: Coupling,
    pub ball_law: BallLaw,
    pub multiplier_sign: MultiplierSign,
    pub covariance: CovarianceForm,
    pub objective: Objective,
    pub ccp_max_iter: usize,
    pub ccp_tol: f64,
    pub solver: SolverOptions,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            cone_form: ConeForm::Soc,
            coupling: Coupling::Exact,
            ball_law: BallLaw::ChiSquareM,
            multiplier_sign: MultiplierSign::Plus,
            covariance: CovarianceForm::SumOfSquares,
            objective: Objective::LiftedTrace,
            ccp_max_iter: 20,
            ccp_tol: 1e-7,
            solver: SolverOptions::default(),
        }
    }
}

/// Unit conversion between watts and the normalized model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub p0: f64,
    pub sigma_n: f64,
}

impl Normalizer {
    /// `P0 = mean_u max(Γ_u, 1)·σ_n²/||ĥ_serving,u||²`.
    pub fn new(s: &Scenario, h: &ChannelSet) -> Self {
        let sigma_n = s.sigma_n();
        let mut acc = 0.0;
        let mut n = 0usize;
        for (u, user) in s.users.iter().enumerate() {
            let g: f64 = h.link(user.cell, u).iter().map(|x| x.norm_sqr()).sum();
            if g > 0.0 {
                acc += user.gamma().max(1.0) * s.sigma_n2 / g;
                n += 1;
            }
        }
        let p0 = if n > 0 && acc.is_finite() && acc > 0.0 {
            acc / n as f64
        } else {
            1.0
        };
        Self { p0, sigma_n }
    }

    fn chan_scale(&self) -> f64 {
        self.p0.sqrt() / self.sigma_n
    }

    pub fn channel(&self, h: &[Complex64]) -> Vec<Complex64> {
        let a = self.chan_scale();
        h.iter().map(|x| x * a).collect()
    }

    pub fn error_std(&self, sigma_abs: f64) -> f64 {
        sigma_abs * self.chan_scale()
    }

    /// Power cap in model units.
    pub fn power(&self, watts: f64) -> f64 {
        watts / self.p0
    }

    pub fn watts(&self, model: f64) -> f64 {
        model * self.p0
    }

    pub fn amplitude(&self) -> f64 {
        self.p0.sqrt()
    }
}

/// `[g_R; −g_I]`: `Re(gᵀw)` as a row over `[w_R; w_I]`.
pub fn re_row(g: &[Complex64]) -> Vec<f64> {
    g.iter().map(|x| x.re).chain(g.iter().map(|x| -x.im)).collect()
}

/// `[g_I; g_R]`: `Im(gᵀw)` as a row over `[w_R; w_I]`.
pub fn im_row(g: &[Complex64]) -> Vec<f64> {
    g.iter().map(|x| x.im).chain(g.iter().map(|x| x.re)).collect()
}

/// The two CI half-constraint rows `(ā, b̄)` with `t = tanθ`:
/// `āᵀw = Im − t·Re`, `b̄ᵀw = −Im − t·Re`.
pub fn ci_rows(g: &[Complex64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let re = re_row(g);
    let im = im_row(g);
    let a = im.iter().zip(&re).map(|(i, r)| i - t * r).collect();
    let b = im.iter().zip(&re).map(|(i, r)| -i - t * r).collect();
    (a, b)
}

/// `re reᵀ + im imᵀ`, so that `|gᵀw|² = w_sᵀ Q w_s`.
pub fn power_form(g: &[Complex64]) -> Vec<f64> {
    let re = re_row(g);
    let im = im_row(g);
    let n = re.len();
    let mut q = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            q[r * n + c] = re[r] * re[c] + im[r] * im[c];
        }
    }
    q
}

/// Real form of the Hermitian `wᴴ conj(R) w`, so `E|hᵀw|² = w_sᵀ Q w_s`
/// when `R = E[h hᴴ]`.
pub fn correlation_form(r: &DMatrix<Complex64>) -> Vec<f64> {
    let m = r.nrows();
    let n = 2 * m;
    let mut q = vec![0.0; n * n];
    for a in 0..m {
        for b in 0..m {
            let z = r[(a, b)];
            q[a * n + b] = z.re;
            q[(m + a) * n + m + b] = z.re;
            q[a * n + m + b] = z.im;
            q[(m + a) * n + b] = -z.im;
        }
    }
    q
}

/// Symmetric square root of a PSD matrix (row-major), eigenvalues clipped at 0.
fn psd_sqrt(q: &[f64], n: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, q);
    let m = (&m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let s = &e.eigenvectors * d * e.eigenvectors.transpose();
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = s[(r, c)];
        }
    }
    out
}

/// Entry `(r, c)` of `L(W) = T₁WT₁ + T₂WT₂` with `T₁ = diag(I, −I)` and
/// `T₂ = [[0, I], [I, 0]]`, so that `|xᵀw|² = x_sᵀ L(w_s w_sᵀ) x_s`.
fn l_entry(w: &MatVar, m: usize, r: usize, c: usize) -> LinExpr {
    l_entry_with(|a, b| w.entry(a, b), m, r, c)
}

/// [`l_entry`] over any symmetric affine matrix given entrywise.
pub(crate) fn l_entry_with(w: impl Fn(usize, usize) -> LinExpr, m: usize, r: usize, c: usize) -> LinExpr {
    let (rb, ri) = (r / m, r % m);
    let (cb, ci) = (c / m, c % m);
    match (rb, cb) {
        (0, 0) | (1, 1) => w(ri, ci) + w(m + ri, m + ci),
        (0, 1) => w(m + ri, ci) - w(ri, m + ci),
        _ => w(ri, m + ci) - w(m + ri, ci),
    }
}

pub(crate) fn g_stack(g: &[Complex64]) -> Vec<f64> {
    g.iter().map(|x| x.re).chain(g.iter().map(|x| x.im)).collect()
}

/// A built model plus what is needed to read precoders back.
#[derive(Clone, Debug)]
pub struct SchemeProgram {
    pub program: ConicProgram,
    pub scheme: Scheme,
    pub norm: Normalizer,
    pub n_bs: usize,
    pub m_antennas: usize,
    /// Interference margin variable per user (partial and statistical).
    pub phi: Vec<Option<usize>>,
    /// Interference bound variable per user (lifted couplings).
    pub u_aux: Vec<Option<usize>>,
    /// Fixed beam directions when a baseline is re-solved for powers only.
    pub beam_directions: Vec<Vec<Complex64>>,
}

struct Builder<'a> {
    s: &'a Scenario,
    opts: &'a SchemeOptions,
    norm: Normalizer,
    p: ConicProgram,
    w: Vec<VarBlock>,
    lifts: Vec<Option<MatVar>>,
    t: f64,
    m: usize,
}

impl<'a> Builder<'a> {
    fn new(s: &'a Scenario, h_hat: &ChannelSet, opts: &'a SchemeOptions, need_lifts: bool) -> Result<Self> {
        let norm = Normalizer::new(s, h_hat);
        let m = s.m_antennas;
        let mut p = ConicProgram::new();
        let mut w = Vec::with_capacity(s.n_bs);
        for j in 0..s.n_bs {
            let name = format!("w{}", j + 1);
            w.push(p.add_vector(&name, 2 * m)?);
            p.mark_precoder(&name)?;
        }
        let mut b = Builder {
            s,
            opts,
            norm,
            p,
            w,
            lifts: vec![None; s.n_bs],
            t: s.tan_theta(),
            m,
        };
        b.objective_and_caps(need_lifts)?;
        Ok(b)
    }

    fn objective_and_caps(&mut self, need_lifts: bool) -> Result<()> {
        let cap = self.norm.power(self.s.p_max);
        let lifted = need_lifts || self.opts.objective == Objective::LiftedTrace;
        if lifted {
            for j in 0..self.s.n_bs {
                let wm = lift_rank_one(&mut self.p, &self.w[j], &format!("W{}", j + 1))?;
                self.lifts[j] = Some(wm);
            }
        }
        match self.opts.objective {
            Objective::LiftedTrace => {
                let mut obj = LinExpr::zero();
                for (j, l) in self.lifts.iter().enumerate() {
                    let tr = l.as_ref().expect("lifted").trace();
                    self.p
                        .add_le(&format!("cap[{}]", j + 1), tr.clone(), LinExpr::constant(cap))?;
                    obj = obj + tr;
                }
                self.p.minimize(obj)?;
            }
            Objective::Epigraph => {
                let tau = self.p.add_scalar("tau")?;
                let mut v: Vec<LinExpr> = self
                    .w
                    .iter()
                    .flat_map(|b| b.indices())
                    .map(|i| LinExpr::term(i, 2.0))
                    .collect();
                v.push(LinExpr::var(tau) - LinExpr::constant(1.0));
                self.p
                    .add_soc("epigraph", LinExpr::var(tau) + LinExpr::constant(1.0), v)?;
                for (j, b) in self.w.iter().enumerate() {
                    let v: Vec<LinExpr> = b.indices().into_iter().map(LinExpr::var).collect();
                    self.p.add_soc(
                        &format!("cap[{}]", j + 1),
                        LinExpr::constant(cap.sqrt()),
                        v,
                    )?;
                }
                self.p.minimize(LinExpr::var(tau))?;
            }
        }
        Ok(())
    }

    fn cov_factor(&self) -> f64 {
        match self.opts.covariance {
            CovarianceForm::SumOfSquares => (1.0 + self.t * self.t).sqrt(),
            CovarianceForm::SquaredSum => 1.0 + self.t,
        }
    }

    fn bound_params(&self, sigma: f64) -> BoundParams {
        BoundParams {
            delta: self.s.delta,
            m_antennas: self.m,
            n_bs: self.s.n_bs,
            theta: self.s.theta,
            sigma,
        }
    }

    /// `meanᵀx + Φ⁻¹(η)·c·||diag(σ)x|| <= rhs` with per-entry stds `sigma`.
    fn chance(&mut self, label: &str, mean: Vec<f64>, x: &[usize], sigma: &[f64], eta: f64, rhs: LinExpr) -> Result<()> {
        if !(eta > 0.5) {
            return Err(CoordError::config(
                "eta",
                format!("chance level {eta} must exceed 0.5 for a convex cone"),
            ));
        }
        let d = cicoord_conic::QuantileSoc {
            cov_sqrt: sigma.iter().map(|s| s * self.cov_factor()).collect(),
            mean,
            quantile: normal_quantile(eta)?,
            rhs,
        };
        add_quantile_soc(&mut self.p, label, &d, x, self.opts.cone_form)?;
        Ok(())
    }

    /// `λ·diag(I, −r²) − diag(diag(s∘x), ρ) ⪰ 0` with `ρ = meanᵀx + offset`
    /// and per-entry error scales `s`.
    ///
    /// Heuristic: the block only forces `λ >= s_k x_k`, so it bounds the
    /// error term by `r²·max_k s_k x_k`. Negative entries are not covered
    /// and the guarantee can fail; Monte Carlo is the arbiter.
    #[allow(clippy::too_many_arguments)]
    fn diagonal_certificate(
        &mut self,
        label: &str,
        multiplier: &str,
        x: &[usize],
        scale: &[f64],
        mean: &[f64],
        offset: LinExpr,
        r2: f64,
    ) -> Result<()> {
        let n = x.len();
        let mut premise = SymAffine::identity(n + 1);
        premise.add(n, n, &LinExpr::constant(-1.0 - r2));
        let mut body = SymAffine::zeros(n + 1);
        for (k, &i) in x.iter().enumerate() {
            body.add(k, k, &LinExpr::term(i, scale[k]));
        }
        body.add(n, n, &(LinExpr::dot(x, mean) + offset));
        s_procedure_lmi(&mut self.p, label, &premise, &body, multiplier)?;
        Ok(())
    }

    fn all_w(&self) -> Vec<usize> {
        self.w.iter().flat_map(|b| b.indices()).collect()
    }

    fn finish(self, scheme: Scheme, phi: Vec<Option<usize>>, u_aux: Vec<Option<usize>>) -> SchemeProgram {
        SchemeProgram {
            program: self.p,
            scheme,
            norm: self.norm,
            n_bs: self.s.n_bs,
            m_antennas: self.m,
            phi,
            u_aux,
            beam_directions: Vec::new(),
        }
    }
}

fn check_eff(eff: &EffectiveChannels, s: &Scenario, want: crate::geometry::CoordMode) -> Result<()> {
    if eff.mode != want {
        return Err(CoordError::Shape(format!(
            "builder expects {want:?} rotation, got {:?}",
            eff.mode
        )));
    }
    if eff.h.n_bs() != s.n_bs || eff.h.n_users() != s.n_users() || eff.h.m() != s.m_antennas {
        return Err(CoordError::Shape("channel tensor does not match scenario".into()));
    }
    Ok(())
}

fn full_builder<'a>(
    s: &'a Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    opts: &'a SchemeOptions,
) -> Result<(Builder<'a>, Vec<(Vec<f64>, Vec<f64>)>)> {
    check_eff(eff, s, crate::geometry::CoordMode::Full)?;
    let b = Builder::new(s, &csi.h_hat, opts, false)?;
    let rows = (0..s.n_users())
        .map(|u| {
            let mut a = Vec::new();
            let mut bb = Vec::new();
            for j in 0..s.n_bs {
                let (ra, rb) = ci_rows(&b.norm.channel(eff.h.link(j, u)), b.t);
                a.extend(ra);
                bb.extend(rb);
            }
            (a, bb)
        })
        .collect();
    Ok((b, rows))
}

/// Full coordination with chance constraints on both CI half-planes.
pub fn build_full_ci_prob(
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    opts: &SchemeOptions,
) -> Result<SchemeProgram> {
    let (mut b, rows) = full_builder(s, csi, eff, opts)?;
    let x = b.all_w();
    for (u, (a, bb)) in rows.into_iter().enumerate() {
        let user = &s.users[u];
        let sig = b.norm.error_std(csi.sigma[u]);
        let sd: Vec<f64> = entry_scales(csi, u, s.n_bs, b.m).iter().map(|f| f * sig).collect();
        let rhs = LinExpr::constant(-user.gamma().sqrt() * b.t);
        b.chance(&format!("ci_a[{u}]"), a, &x, &sd, user.eta, rhs.clone())?;
        b.chance(&format!("ci_b[{u}]"), bb, &x, &sd, user.eta, rhs)?;
    }
    let n = s.n_users();
    Ok(b.finish(Scheme::Ci(SchemeKind::FullCiProb), vec![None; n], vec![None; n]))
}

/// Full coordination with the diagonal worst-case certificates.
pub fn build_full_ci_det(
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    opts: &SchemeOptions,
) -> Result<SchemeProgram> {
    let (mut b, rows) = full_builder(s, csi, eff, opts)?;
    let x = b.all_w();
    for (u, (a, bb)) in rows.into_iter().enumerate() {
        let user = &s.users[u];
        let xi2 = xi_squared(&b.bound_params(b.norm.error_std(csi.sigma[u])))?;
        let off = LinExpr::constant(user.gamma().sqrt() * b.t);
        let sc = entry_scales(csi, u, s.n_bs, b.m);
        b.diagonal_certificate(&format!("det_a[{u}]"), &format!("lambda[{u}]"), &x, &sc, &a, off.clone(), xi2)?;
        b.diagonal_certificate(&format!("det_b[{u}]"), &format!("omega[{u}]"), &x, &sc, &bb, off, xi2)?;
    }
    let n = s.n_users();
    Ok(b.finish(Scheme::Ci(SchemeKind::FullCiDet), vec![None; n], vec![None; n]))
}

/// Error scale of every stacked precoder entry for user `u`.
fn entry_scales(csi: &CsiEstimate, u: usize, n_bs: usize, m: usize) -> Vec<f64> {
    (0..n_bs)
        .flat_map(|j| std::iter::repeat_n(csi.link_scale[j][u], 2 * m))
        .collect()
}

/// Cross-cell interference knowledge for one user.
enum CrossInfo {
    /// Estimated channels `(bs, ĝ, error scale)` with an error ball of
    /// squared radius `nu2` for a unit-scale link.
    Instantaneous { g: Vec<(usize, Vec<Complex64>, f64)>, nu2: f64, per_link: bool },
    /// Real correlation forms `Q_j` with `E|hᵀw_j|² = w_jᵀQ_jw_j`.
    Statistical { q: Vec<(usize, Vec<f64>)> },
}

/// Shared structure of the partial and statistical schemes.
fn build_partial_family(
    kind: SchemeKind,
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    stat: Option<&StatisticalCsi>,
    opts: &SchemeOptions,
    phi_hat: Option<&[f64]>,
) -> Result<SchemeProgram> {
    check_eff(eff, s, crate::geometry::CoordMode::Partial)?;
    let coupling = if phi_hat.is_some() { Coupling::Ccp } else { opts.coupling };
    let coupling = if coupling == Coupling::Ccp && phi_hat.is_none() {
        Coupling::Exact
    } else {
        coupling
    };
    let lifted_coupling = coupling != Coupling::Exact;
    let mut b = Builder::new(s, &csi.h_hat, opts, lifted_coupling)?;
    let n_users = s.n_users();
    let mut phi = vec![None; n_users];
    let mut u_aux = vec![None; n_users];
    let m = b.m;
    for u in 0..n_users {
        let user = &s.users[u];
        let i = user.cell;
        let sig = b.norm.error_std(csi.sigma[u]);
        let gamma_t = user.gamma().sqrt() * b.t;
        let x = b.w[i].indices();
        let cross: Vec<usize> = (0..s.n_bs).filter(|&j| j != i).collect();

        // interference margin φ enters the CI offset as (1 + φ)·√Γ·tanθ
        let phi_var = if cross.is_empty() {
            None
        } else {
            Some(b.p.add_nonneg_scalar(&format!("phi[{u}]"))?)
        };
        phi[u] = phi_var;
        let mut offset = LinExpr::constant(gamma_t);
        if let Some(f) = phi_var {
            offset.add_term(f, gamma_t);
        }

        let (f_bar, d_bar) = ci_rows(&b.norm.channel(eff.h.link(i, u)), b.t);
        let own = csi.link_scale[i][u];
        match kind {
            SchemeKind::PartialCiProb => {
                let rhs = -offset.clone();
                let sd = vec![sig * own; x.len()];
                b.chance(&format!("ci_a[{u}]"), f_bar, &x, &sd, user.eta, rhs.clone())?;
                b.chance(&format!("ci_b[{u}]"), d_bar, &x, &sd, user.eta, rhs)?;
            }
            SchemeKind::PartialCiDet | SchemeKind::StatCi => {
                let rho2 = rho_squared(&b.bound_params(sig))?;
                let sc = vec![own; x.len()];
                b.diagonal_certificate(&format!("det_a[{u}]"), &format!("varsigma[{u}]"), &x, &sc, &f_bar, offset.clone(), rho2)?;
                b.diagonal_certificate(&format!("det_b[{u}]"), &format!("vartheta[{u}]"), &x, &sc, &d_bar, offset.clone(), rho2)?;
            }
            _ => unreachable!("full schemes use their own builders"),
        }

        let Some(phi_var) = phi_var else { continue };
        let info = if kind == SchemeKind::StatCi {
            let stat = stat.ok_or_else(|| {
                CoordError::Insufficient("statistical scheme needs cross-cell statistics".into())
            })?;
            let scale = b.norm.p0 / s.sigma_n2;
            let q = cross
                .iter()
                .map(|&j| {
                    let r = stat.r(j, u);
                    if r.nrows() != m {
                        return Err(CoordError::Shape(format!("statistics for link ({j}, {u})")));
                    }
                    let q: Vec<f64> = correlation_form(r).into_iter().map(|v| v * scale).collect();
                    Ok((j, q))
                })
                .collect::<Result<Vec<_>>>()?;
            CrossInfo::Statistical { q }
        } else {
            let per_link = csi.sharing == ErrorSharing::PerLink;
            let dof = if per_link { m * cross.len() } else { m };
            let nu2 = ball_radius_squared(s.delta, dof, sig, opts.ball_law)?;
            // a cross link's rotation is a unit scalar, so |ĥᵀw| is unaffected
            let g = cross
                .iter()
                .map(|&j| (j, b.norm.channel(csi.h_hat.link(j, u)), csi.link_scale[j][u]))
                .collect();
            CrossInfo::Instantaneous { g, nu2, per_link }
        };

        match coupling {
            Coupling::Exact => exact_coupling(&mut b, u, phi_var, &info)?,
            Coupling::Lifting | Coupling::Ccp => {
                let uv = lifted_coupling_blocks(&mut b, u, phi_var, &info)?;
                u_aux[u] = Some(uv);
                if let (Coupling::Ccp, Some(hat)) = (coupling, phi_hat) {
                    let h = hat[u];
                    b.p.add_le(
                        &format!("tangent[{u}]"),
                        LinExpr::var(uv),
                        LinExpr::term(phi_var, 2.0 * h) - LinExpr::constant(h * h),
                    )?;
                }
            }
        }
    }
    Ok(b.finish(Scheme::Ci(kind), phi, u_aux))
}

/// `φ >= ||P + Q e||` for every error in the ball, or `φ >= ||Q^{1/2}w||`
/// for statistical knowledge.
fn exact_coupling(b: &mut Builder, u: usize, phi: usize, info: &CrossInfo) -> Result<()> {
    let m = b.m;
    match info {
        CrossInfo::Statistical { q } => {
            let mut v = Vec::new();
            for (j, qj) in q {
                let r = psd_sqrt(qj, 2 * m);
                let idx = b.w[*j].indices();
                for row in 0..2 * m {
                    let e = LinExpr::dot(&idx, &r[row * 2 * m..(row + 1) * 2 * m]);
                    if e.n_terms() > 0 {
                        v.push(e);
                    }
                }
            }
            if v.is_empty() {
                return Ok(());
            }
            b.p.add_soc(&format!("interference[{u}]"), LinExpr::var(phi), v)?;
        }
        CrossInfo::Instantaneous { g, nu2, per_link } => {
            let nu = nu2.sqrt();
            let n_err = if *per_link { g.len() } else { 1 };
            let d = 2 * m * n_err;
            let k = 2 * g.len();
            let dim = 1 + d + k;
            let kappa = b.p.add_nonneg_scalar(&format!("kappa[{u}]"))?;
            let mut mat = SymAffine::zeros(dim);
            mat.add(0, 0, &(LinExpr::var(phi) - LinExpr::var(kappa)));
            for r in 0..d {
                mat.add(1 + r, 1 + r, &LinExpr::var(kappa));
            }
            for r in 0..k {
                mat.add(1 + d + r, 1 + d + r, &LinExpr::var(phi));
            }
            for (pos, (j, gj, sj)) in g.iter().enumerate() {
                let idx = b.w[*j].indices();
                let row_re = 1 + d + 2 * pos;
                let row_im = row_re + 1;
                mat.add(0, row_re, &LinExpr::dot(&idx, &re_row(gj)));
                mat.add(0, row_im, &LinExpr::dot(&idx, &im_row(gj)));
                let nu = nu * sj;
                if nu > 0.0 {
                    let off = 1 + if *per_link { 2 * m * pos } else { 0 };
                    // Re(eᵀw) = e_Rᵀw_R − e_Iᵀw_I,  Im(eᵀw) = e_Rᵀw_I + e_Iᵀw_R
                    for a in 0..m {
                        let wr = b.w[*j].index(a);
                        let wi = b.w[*j].index(m + a);
                        mat.add(off + a, row_re, &LinExpr::term(wr, nu));
                        mat.add(off + m + a, row_re, &LinExpr::term(wi, -nu));
                        mat.add(off + a, row_im, &LinExpr::term(wi, nu));
                        mat.add(off + m + a, row_im, &LinExpr::term(wr, nu));
                    }
                }
            }
            b.p.add_psd(&format!("interference[{u}]"), mat)?;
        }
    }
    Ok(())
}

/// The lifted auxiliary coupling: `S ⪰ ttᵀ` with `t = [φ, u]`,
/// `S₁₁ >= u`, and `u` bounding the (worst-case or mean) interference.
/// Returns the index of `u`.
fn lifted_coupling_blocks(b: &mut Builder, u: usize, phi: usize, info: &CrossInfo) -> Result<usize> {
    let m = b.m;
    let uv = b.p.add_scalar(&format!("u[{u}]"))?;
    let sm = b.p.add_sym_matrix(&format!("S[{u}]"), 2)?;
    let mut lift = SymAffine::zeros(3);
    lift.add(0, 0, &sm.entry(0, 0));
    lift.add(0, 1, &sm.entry(0, 1));
    lift.add(1, 1, &sm.entry(1, 1));
    lift.add(0, 2, &LinExpr::var(phi));
    lift.add(1, 2, &LinExpr::var(uv));
    lift.add(2, 2, &LinExpr::constant(1.0));
    b.p.add_psd(&format!("aux_lift[{u}]"), lift)?;
    b.p.add_nonneg(&format!("aux_trace[{u}]"), sm.entry(0, 0) - LinExpr::var(uv))?;
    match info {
        CrossInfo::Statistical { q } => {
            let mut mean = LinExpr::zero();
            for (j, qj) in q {
                let wm = b.lifts[*j].as_ref().expect("lifted coupling needs lifts");
                mean = mean + wm.inner(qj);
            }
            b.p.add_le(&format!("interference[{u}]"), mean, LinExpr::var(uv))?;
        }
        CrossInfo::Instantaneous { g, nu2, per_link } => {
            let n_err = if *per_link { g.len() } else { 1 };
            let d = 2 * m * n_err;
            let mut body = SymAffine::zeros(d + 1);
            for (pos, (j, gj, sj)) in g.iter().enumerate() {
                let wm = b.lifts[*j].as_ref().expect("lifted coupling needs lifts");
                let off = if *per_link { 2 * m * pos } else { 0 };
                let gs = g_stack(gj);
                for r in 0..2 * m {
                    let mut lg = LinExpr::zero();
                    for c in 0..2 * m {
                        let l = l_entry(wm, m, r, c);
                        if c >= r {
                            body.add(off + r, off + c, &l.scaled(sj * sj));
                        }
                        lg.add_scaled(&l, gs[c]);
                    }
                    body.add(off + r, d, &lg.scaled(*sj));
                }
                body.add(d, d, &wm.inner(&power_form(gj)));
            }
            body.add(d, d, &LinExpr::term(uv, -1.0));
            let sign = match b.opts.multiplier_sign {
                MultiplierSign::Plus => 1.0,
                MultiplierSign::Minus => -1.0,
            };
            let mut premise = SymAffine::zeros(d + 1);
            for r in 0..d {
                premise.add(r, r, &LinExpr::constant(sign));
            }
            premise.add(d, d, &LinExpr::constant(-nu2));
            s_procedure_lmi(&mut b.p, &format!("interference[{u}]"), &premise, &body, &format!("kappa[{u}]"))?;
        }
    }
    Ok(uv)
}

pub fn build_partial_ci_prob(
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    opts: &SchemeOptions,
) -> Result<SchemeProgram> {
    build_partial_family(SchemeKind::PartialCiProb, s, csi, eff, None, opts, None)
}

pub fn build_partial_ci_det(
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    opts: &SchemeOptions,
) -> Result<SchemeProgram> {
    build_partial_family(SchemeKind::PartialCiDet, s, csi, eff, None, opts, None)
}

pub fn build_stat_ci(
    s: &Scenario,
    csi_local: &CsiEstimate,
    stat: &StatisticalCsi,
    eff: &EffectiveChannels,
    opts: &SchemeOptions,
) -> Result<SchemeProgram> {
    build_partial_family(SchemeKind::StatCi, s, csi_local, eff, Some(stat), opts, None)
}

/// Builds the model of `kind` on pre-rotated channels. `phi_hat` supplies
/// the tangent points of a concave-convex iteration.
pub fn build_ci(
    kind: SchemeKind,
    s: &Scenario,
    csi: &CsiEstimate,
    eff: &EffectiveChannels,
    stat: Option<&StatisticalCsi>,
    opts: &SchemeOptions,
    phi_hat: Option<&[f64]>,
) -> Result<SchemeProgram> {
    match kind {
        SchemeKind::FullCiProb => build_full_ci_prob(s, csi, eff, opts),
        SchemeKind::FullCiDet => build_full_ci_det(s, csi, eff, opts),
        _ => build_partial_family(kind, s, csi, eff, stat, opts, phi_hat),
    }
}

/// Solution of one scheme on one channel/symbol draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderSolution {
    pub scheme: Scheme,
    pub status: SolveStatus,
    pub precoders: Option<Precoders>,
    pub per_bs_power_w: Vec<f64>,
    pub total_power_w: f64,
    /// `max_j (Tr W_j − ||w_j||²)/max(1, Tr W_j)` in model units.
    pub relaxation_gap: f64,
    pub iterations: usize,
    /// Interference margins `φ` per user, in noise-amplitude units.
    pub phi: Vec<Option<f64>>,
    pub u_aux: Vec<Option<f64>>,
    /// `max(0, u − φ²)` over users for the lifted coupling.
    pub coupling_shortfall: f64,
    /// Largest constraint violation of the returned point on the raw model.
    pub verify_violation: f64,
    pub message: Option<String>,
}

impl PrecoderSolution {
    pub fn failed(scheme: Scheme, status: SolveStatus, n_bs: usize, iterations: usize, message: Option<String>) -> Self {
        Self {
            scheme,
            status,
            precoders: None,
            per_bs_power_w: vec![f64::NAN; n_bs],
            total_power_w: f64::NAN,
            relaxation_gap: f64::NAN,
            iterations,
            phi: Vec::new(),
            u_aux: Vec::new(),
            coupling_shortfall: 0.0,
            verify_violation: f64::NAN,
            message,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn multicast(&self) -> Option<&[Vec<Complex64>]> {
        match &self.precoders {
            Some(Precoders::Multicast(w)) => Some(w),
            _ => None,
        }
    }
}

/// Threshold above which a non-rank-one lift is reported as a failure.
pub const EXTRACTION_GAP_LIMIT: f64 = 1e-3;

/// Reads precoders of a CI model from its dedicated vector blocks.
pub fn extract_precoders(sp: &SchemeProgram, rep: &SolveReport) -> PrecoderSolution {
    if rep.status != SolveStatus::Optimal {
        return PrecoderSolution::failed(sp.scheme, rep.status, sp.n_bs, rep.iterations, rep.message.clone());
    }
    let x = &rep.x;
    let meta = &sp.program.meta;
    let m = sp.m_antennas;
    let amp = sp.norm.amplitude();
    let mut w = Vec::with_capacity(sp.n_bs);
    let mut gap: f64 = 0.0;
    for j in 0..sp.n_bs {
        let blk = meta.vector(&format!("w{}", j + 1)).expect("precoder block");
        let v = blk.values(x);
        w.push((0..m).map(|a| Complex64::new(v[a], v[m + a]) * amp).collect::<Vec<_>>());
        if let Some(wm) = meta.matrix(&format!("W{}", j + 1)) {
            let tr = wm.trace().eval(x);
            let n2: f64 = v.iter().map(|t| t * t).sum();
            gap = gap.max((tr - n2) / tr.max(1.0));
        }
    }
    let pre = Precoders::Multicast(w);
    let per_bs = pre.per_bs_power();
    let phi: Vec<Option<f64>> = sp.phi.iter().map(|p| p.map(|i| x[i])).collect();
    let u_aux: Vec<Option<f64>> = sp.u_aux.iter().map(|p| p.map(|i| x[i])).collect();
    let shortfall = phi
        .iter()
        .zip(&u_aux)
        .filter_map(|(f, u)| Some((u.as_ref()? - f.as_ref()?.powi(2)).max(0.0)))
        .fold(0.0, f64::max);
    let verify = verify_solution(&sp.program, x, 1e-6);
    let status = if gap > EXTRACTION_GAP_LIMIT {
        SolveStatus::NumericalFailure
    } else {
        SolveStatus::Optimal
    };
    PrecoderSolution {
        scheme: sp.scheme,
        status,
        total_power_w: per_bs.iter().sum(),
        per_bs_power_w: per_bs,
        precoders: Some(pre),
        relaxation_gap: gap,
        iterations: rep.iterations,
        phi,
        u_aux,
        coupling_shortfall: shortfall,
        verify_violation: verify.max_violation,
        message: if gap > EXTRACTION_GAP_LIMIT { Some(format!("lift not rank one (gap {gap:.3e})")) } else { rep.message.clone() },
    }
}

/// Everything a scheme may need for one draw.
#[derive(Clone, Copy)]
pub struct SchemeInput<'a> {
    pub scenario: &'a Scenario,
    /// True channels, used only by the perfect-CSI benchmark.
    pub truth: &'a ChannelSet,
    pub csi: &'a CsiEstimate,
    pub draw: &'a SymbolDraw,
    pub stat: Option<&'a StatisticalCsi>,
}

/// Builds, solves and extracts one CI scheme, running the tangent-cut
/// iteration when requested.
pub fn solve_ci(kind: SchemeKind, input: &SchemeInput, opts: &SchemeOptions) -> Result<PrecoderSolution> {
    let s = input.scenario;
    let eff = if kind.is_full() {
        rotate_full(&input.csi.h_hat, input.draw)
    } else {
        rotate_partial(&input.csi.h_hat, input.draw, s)
    };
    let first = build_ci(kind, s, input.csi, &eff, input.stat, opts, None)?;
    let rep = solve(&first.program, &opts.solver);
    let mut sol = extract_precoders(&first, &rep);
    if kind.is_full() || opts.coupling != Coupling::Ccp || !sol.is_optimal() {
        return Ok(sol);
    }
    let mut total_iter = sol.iterations;
    let mut obj = rep.objective;
    for _ in 0..opts.ccp_max_iter {
        let hat: Vec<f64> = sol.phi.iter().map(|p| p.unwrap_or(0.0)).collect();
        let sp = build_ci(kind, s, input.csi, &eff, input.stat, opts, Some(&hat))?;
        let r = solve(&sp.program, &opts.solver);
        total_iter += r.iterations;
        let next = extract_precoders(&sp, &r);
        if !next.is_optimal() {
            break;
        }
        let done = (obj - r.objective).abs() <= opts.ccp_tol * obj.abs().max(1.0);
        obj = r.objective;
        sol = next;
        if done {
            break;
        }
    }
    sol.iterations = total_iter;
    Ok(sol)
}

/// The (first) conic model a scheme solves, without solving it.
pub fn build_scheme(scheme: Scheme, input: &SchemeInput, opts: &SchemeOptions) -> Result<SchemeProgram> {
    let s = input.scenario;
    match scheme {
        Scheme::Ci(kind) => {
            let eff = if kind.is_full() {
                rotate_full(&input.csi.h_hat, input.draw)
            } else {
                rotate_partial(&input.csi.h_hat, input.draw, s)
            };
            build_ci(kind, s, input.csi, &eff, input.stat, opts, None)
        }
        Scheme::Baseline(BaselineKind::CompPerfectCsi) => {
            crate::baselines::build_comp_perfect(s, &CsiEstimate::exact(input.truth, s))
        }
        Scheme::Baseline(kind) => crate::baselines::build_cbf(kind, s, input.csi, opts, None),
    }
}

/// Dispatches to the CI schemes or the baselines.
pub fn solve_scheme(scheme: Scheme, input: &SchemeInput, opts: &SchemeOptions) -> Result<PrecoderSolution> {
    match scheme {
        Scheme::Ci(kind) => solve_ci(kind, input, opts),
        Scheme::Baseline(kind) => crate::baselines::solve_baseline(kind, input, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn real_rows_reproduce_complex_products() {
        let g = [c(0.3, -1.2), c(2.0, 0.5)];
        let w = [c(-0.7, 0.4), c(1.1, 0.9)];
        let ws: Vec<f64> = w.iter().map(|x| x.re).chain(w.iter().map(|x| x.im)).collect();
        let z: Complex64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
        let dot = |r: &[f64]| r.iter().zip(&ws).map(|(a, b)| a * b).sum::<f64>();
        assert!((dot(&re_row(&g)) - z.re).abs() < 1e-14);
        assert!((dot(&im_row(&g)) - z.im).abs() < 1e-14);
        let q = power_form(&g);
        let quad: f64 = (0..4).map(|r| (0..4).map(|k| ws[r] * q[r * 4 + k] * ws[k]).sum::<f64>()).sum();
        assert!((quad - z.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn correlation_form_matches_rank_one_power() {
        let h = [c(0.2, 1.0), c(-0.4, 0.3)];
        let w = [c(0.5, -0.1), c(0.8, 0.6)];
        let hv = DMatrix::from_column_slice(2, 1, &h);
        let r = &hv * hv.adjoint();
        let q = correlation_form(&r);
        let ws: Vec<f64> = w.iter().map(|x| x.re).chain(w.iter().map(|x| x.im)).collect();
        let quad: f64 = (0..4).map(|a| (0..4).map(|b| ws[a] * q[a * 4 + b] * ws[b]).sum::<f64>()).sum();
        let z: Complex64 = h.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((quad - z.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn lifted_form_matches_rank_one_power() {
        let m = 2;
        let mut p = ConicProgram::new();
        let wm = p.add_sym_matrix("W", 2 * m).unwrap();
        let ws = [0.3, -0.8, 1.2, 0.4];
        let mut x = vec![0.0; p.n_vars];
        for r in 0..4 {
            for k in r..4 {
                x[wm.index(r, k)] = ws[r] * ws[k];
            }
        }
        let e = [c(0.5, -0.2), c(-1.0, 0.7)];
        let es = g_stack(&e);
        let mut quad = 0.0;
        for r in 0..4 {
            for k in 0..4 {
                quad += es[r] * l_entry(&wm, m, r, k).eval(&x) * es[k];
            }
        }
        let w = [c(ws[0], ws[2]), c(ws[1], ws[3])];
        let z: Complex64 = e.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((quad - z.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in Scheme::ALL {
            assert_eq!(k.as_str().parse::<Scheme>().unwrap(), k);
        }
        assert!("nope".parse::<Scheme>().is_err());
    }
}
