//! Per-user beamforming baselines: joint transmission with perfect CSI and
//! robust coordinated beamforming with each user served by its own cell.

use cicoord_conic::{
    s_procedure_lmi, solve, verify_solution, ConicProgram, LinExpr, SolveReport, SolveStatus,
    SymAffine,
};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::bounds::{ball_radius_squared, BallLaw};
use crate::error::Result;
use crate::geometry::Precoders;
use crate::schemes::{
    g_stack, im_row, l_entry_with, re_row, BaselineKind, Normalizer, PrecoderSolution, Scheme,
    SchemeInput, SchemeOptions, SchemeProgram, EXTRACTION_GAP_LIMIT,
};
use crate::scenario::{CsiEstimate, ErrorSharing, Scenario};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Joint transmission from all BSs with exact channels: minimum total power
/// subject to every SINR target and the per-BS caps, as a second-order cone
/// program.
pub fn build_comp_perfect(s: &Scenario, truth: &CsiEstimate) -> Result<SchemeProgram> {
    let norm = Normalizer::new(s, &truth.h_hat);
    let (n, m, k) = (s.n_bs, s.m_antennas, s.n_users());
    let mut p = ConicProgram::new();
    let v: Vec<_> = (0..k)
        .map(|u| {
            let name = format!("v{u}");
            let b = p.add_vector(&name, 2 * m * n)?;
            p.mark_precoder(&name)?;
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let rows = |u: usize| -> (Vec<f64>, Vec<f64>) {
        let mut re = Vec::with_capacity(2 * m * n);
        let mut im = Vec::with_capacity(2 * m * n);
        for j in 0..n {
            let g = norm.channel(truth.h_hat.link(j, u));
            re.extend(re_row(&g));
            im.extend(im_row(&g));
        }
        (re, im)
    };
    for u in 0..k {
        let (re, im) = rows(u);
        let signal = LinExpr::dot(&v[u].indices(), &re).scaled(1.0 / s.users[u].gamma().sqrt());
        let mut terms = Vec::with_capacity(2 * k);
        for (l, vl) in v.iter().enumerate().filter(|&(l, _)| l != u) {
            let _ = l;
            terms.push(LinExpr::dot(&vl.indices(), &re));
            terms.push(LinExpr::dot(&vl.indices(), &im));
        }
        terms.push(LinExpr::constant(1.0));
        p.add_soc(&format!("sinr[{u}]"), signal, terms)?;
    }
    let cap = norm.power(s.p_max).sqrt();
    for j in 0..n {
        let block: Vec<LinExpr> = v
            .iter()
            .flat_map(|b| (0..2 * m).map(move |a| b.expr(j * 2 * m + a)))
            .collect();
        p.add_soc(&format!("cap[{}]", j + 1), LinExpr::constant(cap), block)?;
    }
    let tau = p.add_scalar("tau")?;
    let all: Vec<LinExpr> = v.iter().flat_map(|b| b.indices()).map(LinExpr::var).collect();
    p.add_soc("power", LinExpr::var(tau), all)?;
    p.minimize(LinExpr::var(tau))?;
    Ok(SchemeProgram {
        program: p,
        scheme: Scheme::Baseline(BaselineKind::CompPerfectCsi),
        norm,
        n_bs: n,
        m_antennas: m,
        phi: vec![None; k],
        u_aux: vec![None; k],
        beam_directions: Vec::new(),
    })
}

/// Entry `(r, c)` of `[[A, −B], [B, A]]` for `C = A + jB` with `A`
/// symmetric (matrix variable) and `B` skew (strict upper entries).
fn hermitian_entry(a: &cicoord_conic::MatVar, b: &cicoord_conic::VarBlock, m: usize, r: usize, col: usize) -> LinExpr {
    let (rb, ri) = (r / m, r % m);
    let (cb, ci) = (col / m, col % m);
    let skew = |x: usize, y: usize| -> LinExpr {
        if x == y {
            LinExpr::zero()
        } else {
            let (lo, hi, sign) = if x < y { (x, y, 1.0) } else { (y, x, -1.0) };
            // strict upper triangle, row-major
            let k = lo * m - lo * (lo + 1) / 2 + (hi - lo - 1);
            LinExpr::term(b.index(k), sign)
        }
    };
    match (rb, cb) {
        (0, 0) | (1, 1) => a.entry(ri, ci),
        (0, 1) => -skew(ri, ci),
        _ => skew(ri, ci),
    }
}

/// `[[Re C, −Im C], [Im C, Re C]]` for `C = d dᴴ`, row-major.
fn hermitian_real(d: &[Complex64]) -> Vec<f64> {
    let m = d.len();
    let mut out = vec![0.0; 4 * m * m];
    for a in 0..m {
        for b in 0..m {
            let z = d[a] * d[b].conj();
            out[a * 2 * m + b] = z.re;
            out[(m + a) * 2 * m + m + b] = z.re;
            out[a * 2 * m + m + b] = -z.im;
            out[(m + a) * 2 * m + b] = z.im;
        }
    }
    out
}

/// Robust coordinated beamforming. Each user has a Hermitian lift `C_u` on
/// its serving BS; SINR targets hold for every error in a ball whose radius
/// is the `level` quantile. With `directions`, every `C_u = p_u d_u d_uᴴ`
/// and only the powers are optimized.
pub fn build_cbf(
    kind: BaselineKind,
    s: &Scenario,
    csi: &CsiEstimate,
    opts: &SchemeOptions,
    directions: Option<&[Vec<Complex64>]>,
) -> Result<SchemeProgram> {
    let norm = Normalizer::new(s, &csi.h_hat);
    let (n, m, k) = (s.n_bs, s.m_antennas, s.n_users());
    let dm = 2 * m;
    let mut p = ConicProgram::new();

    // R(C_u) entrywise, as affine expressions
    let mut r_of: Vec<Vec<LinExpr>> = Vec::with_capacity(k);
    let mut power: Vec<LinExpr> = Vec::with_capacity(k);
    for u in 0..k {
        match directions {
            None => {
                let a = p.add_sym_matrix(&format!("A{u}"), m)?;
                p.mark_precoder(&format!("A{u}"))?;
                let b = p.add_vector(&format!("B{u}"), m * (m - 1) / 2)?;
                let mut r = vec![LinExpr::zero(); dm * dm];
                let mut psd = SymAffine::zeros(dm);
                for row in 0..dm {
                    for col in 0..dm {
                        let e = hermitian_entry(&a, &b, m, row, col);
                        if col >= row {
                            psd.add(row, col, &e);
                        }
                        r[row * dm + col] = e;
                    }
                }
                p.add_psd(&format!("beam[{u}]"), psd)?;
                power.push(a.trace());
                r_of.push(r);
            }
            Some(dirs) => {
                let pu = p.add_nonneg_scalar(&format!("p{u}"))?;
                p.mark_precoder(&format!("p{u}"))?;
                let h = hermitian_real(&dirs[u]);
                r_of.push(h.iter().map(|&v| LinExpr::term(pu, v)).collect());
                let n2: f64 = dirs[u].iter().map(|z| z.norm_sqr()).sum();
                power.push(LinExpr::term(pu, n2));
            }
        }
    }

    let cap = norm.power(s.p_max);
    for j in 0..n {
        let tot = s
            .cell_users(j)
            .fold(LinExpr::zero(), |acc, u| acc + power[u].clone());
        p.add_le(&format!("cap[{}]", j + 1), tot, LinExpr::constant(cap))?;
    }
    let obj = power.iter().cloned().fold(LinExpr::zero(), |a, b| a + b);
    p.minimize(obj)?;

    let level = match kind {
        BaselineKind::CbfProb => s.users.iter().map(|u| u.eta).collect::<Vec<_>>(),
        _ => vec![s.delta; k],
    };
    let per_link = csi.sharing == ErrorSharing::PerLink;
    let n_err = if per_link { n } else { 1 };
    let d = dm * n_err;
    for u in 0..k {
        let sig = norm.error_std(csi.sigma[u]);
        let law = if opts.ball_law == BallLaw::ExactGamma { BallLaw::ExactGamma } else { BallLaw::ChiSquareM };
        let nu2 = if sig > 0.0 {
            ball_radius_squared(level[u], m * n_err, sig, law)?
        } else {
            0.0
        };
        let gamma = s.users[u].gamma();
        // F = Σ_l c_l·[(ĝ+e)ᵀ ½L(R_l) (ĝ+e)] − 1 as a form in [e; 1]
        let mut f = SymAffine::zeros(d + 1);
        for l in 0..k {
            let coef = if l == u { 0.5 / gamma } else { -0.5 };
            let j = s.users[l].cell;
            let off = if per_link { dm * j } else { 0 };
            let sj = csi.link_scale[j][u];
            let gs = g_stack(&norm.channel(csi.h_hat.link(j, u)));
            let r = &r_of[l];
            let ent = |a: usize, b: usize| r[a * dm + b].clone();
            let mut quad = LinExpr::zero();
            for row in 0..dm {
                let mut lg = LinExpr::zero();
                for col in 0..dm {
                    let e = l_entry_with(ent, m, row, col);
                    if nu2 > 0.0 && col >= row {
                        f.add(off + row, off + col, &e.scaled(coef * sj * sj));
                    }
                    lg.add_scaled(&e, gs[col]);
                }
                quad.add_scaled(&lg, gs[row]);
                if nu2 > 0.0 {
                    f.add(off + row, d, &lg.scaled(coef * sj));
                }
            }
            f.add(d, d, &quad.scaled(coef));
        }
        f.add(d, d, &LinExpr::constant(-1.0));
        if nu2 > 0.0 {
            let mut premise = SymAffine::identity(d + 1);
            premise.add(d, d, &LinExpr::constant(-1.0 - nu2));
            s_procedure_lmi(&mut p, &format!("sinr[{u}]"), &premise, &f.scaled(-1.0), &format!("lambda[{u}]"))?;
        } else {
            let c = f.get(d, d).cloned().unwrap_or_else(LinExpr::zero);
            p.add_nonneg(&format!("sinr[{u}]"), c)?;
        }
    }

    Ok(SchemeProgram {
        program: p,
        scheme: Scheme::Baseline(kind),
        norm,
        n_bs: n,
        m_antennas: m,
        phi: vec![None; k],
        u_aux: vec![None; k],
        beam_directions: directions.map(|d| d.to_vec()).unwrap_or_default(),
    })
}

/// Reads per-user beams of a baseline model. For lifted models the
/// principal eigenvector of each lift is used and the largest relative
/// trace left in the other eigenvalues is returned as the relaxation gap.
pub fn extract_beams(s: &Scenario, sp: &SchemeProgram, rep: &SolveReport) -> PrecoderSolution {
    let (n, m, k) = (sp.n_bs, sp.m_antennas, s.n_users());
    if rep.status != SolveStatus::Optimal {
        return PrecoderSolution::failed(sp.scheme, rep.status, n, rep.iterations, rep.message.clone());
    }
    let x = &rep.x;
    let meta = &sp.program.meta;
    let amp = sp.norm.amplitude();
    let zero = vec![c(0.0, 0.0); m];
    let mut beams = vec![vec![zero; n]; k];
    let mut gap: f64 = 0.0;
    for u in 0..k {
        if let Some(v) = meta.vector(&format!("v{u}")) {
            let vals = v.values(x);
            for j in 0..n {
                let b = &vals[j * 2 * m..(j + 1) * 2 * m];
                beams[u][j] = (0..m).map(|a| c(b[a], b[m + a]) * amp).collect();
            }
            continue;
        }
        let cell = s.users[u].cell;
        if let Some(pu) = meta.scalar(&format!("p{u}")) {
            let scale = x[pu].max(0.0).sqrt() * amp;
            beams[u][cell] = sp.beam_directions[u].iter().map(|z| z * scale).collect();
            continue;
        }
        let (Some(a), Some(b)) = (meta.matrix(&format!("A{u}")), meta.vector(&format!("B{u}"))) else {
            continue;
        };
        let dm = 2 * m;
        let r = DMatrix::from_fn(dm, dm, |i, j| hermitian_entry(a, b, m, i, j).eval(x));
        let eig = SymmetricEigen::new(r);
        let (top, &lam) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|p, q| p.1.total_cmp(q.1))
            .expect("non-empty lift");
        let lam = lam.max(0.0);
        let vec = eig.eigenvectors.column(top);
        beams[u][cell] = (0..m).map(|i| c(vec[i], vec[m + i]) * (lam.sqrt() * amp)).collect();
        let tr = a.trace().eval(x);
        gap = gap.max((tr - lam) / tr.max(1.0));
    }
    let pre = Precoders::PerUser(beams);
    let per_bs = pre.per_bs_power();
    let verify = verify_solution(&sp.program, x, 1e-6);
    let bad = gap > EXTRACTION_GAP_LIMIT;
    PrecoderSolution {
        scheme: sp.scheme,
        status: if bad { SolveStatus::NumericalFailure } else { SolveStatus::Optimal },
        total_power_w: per_bs.iter().sum(),
        per_bs_power_w: per_bs,
        precoders: Some(pre),
        relaxation_gap: gap,
        iterations: rep.iterations,
        phi: vec![None; k],
        u_aux: vec![None; k],
        coupling_shortfall: 0.0,
        verify_violation: verify.max_violation,
        message: if bad { Some(format!("lift not rank one (gap {gap:.3e})")) } else { rep.message.clone() },
    }
}

/// Builds, solves and extracts a baseline. A coordinated-beamforming lift
/// that is not rank one is re-solved over powers along its principal
/// directions; the original gap stays in the report.
pub fn solve_baseline(kind: BaselineKind, input: &SchemeInput, opts: &SchemeOptions) -> Result<PrecoderSolution> {
    let s = input.scenario;
    match kind {
        BaselineKind::CompPerfectCsi => {
            let truth = CsiEstimate::exact(input.truth, s);
            let sp = build_comp_perfect(s, &truth)?;
            let rep = solve(&sp.program, &opts.solver);
            Ok(extract_beams(s, &sp, &rep))
        }
        BaselineKind::CbfProb | BaselineKind::CbfDet => {
            let sp = build_cbf(kind, s, input.csi, opts, None)?;
            let rep = solve(&sp.program, &opts.solver);
            let sol = extract_beams(s, &sp, &rep);
            if sol.status != SolveStatus::NumericalFailure {
                return Ok(sol);
            }
            let Some(Precoders::PerUser(beams)) = &sol.precoders else {
                return Ok(sol);
            };
            let dirs: Vec<Vec<Complex64>> = (0..s.n_users())
                .map(|u| {
                    let b = &beams[u][s.users[u].cell];
                    let nrm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        b.iter().map(|z| z / nrm).collect()
                    } else {
                        let mut e = vec![c(0.0, 0.0); s.m_antennas];
                        e[0] = c(1.0, 0.0);
                        e
                    }
                })
                .collect();
            let sp2 = build_cbf(kind, s, input.csi, opts, Some(&dirs))?;
            let rep2 = solve(&sp2.program, &opts.solver);
            let mut fixed = extract_beams(s, &sp2, &rep2);
            fixed.relaxation_gap = sol.relaxation_gap;
            fixed.iterations += sol.iterations;
            fixed.message = Some(format!(
                "lift gap {:.3e}; powers re-optimized along principal beams",
                sol.relaxation_gap
            ));
            Ok(fixed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_embedding_of_outer_product_is_psd_rank_two() {
        let d = [c(0.6, 0.2), c(-0.3, 0.7)];
        let h = hermitian_real(&d);
        let r = DMatrix::from_row_slice(4, 4, &h);
        let e = SymmetricEigen::new(r);
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let n2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert!((ev[2] - n2).abs() < 1e-12 && (ev[3] - n2).abs() < 1e-12);
    }

    #[test]
    fn half_lifted_form_gives_received_power() {
        let d = [c(0.6, 0.2), c(-0.3, 0.7)];
        let g = [c(1.5, -0.4), c(0.2, 0.9)];
        let h = hermitian_real(&d);
        let gs = g_stack(&g);
        let ent = |a: usize, b: usize| LinExpr::constant(h[a * 4 + b]);
        let mut q = 0.0;
        for r in 0..4 {
            for col in 0..4 {
                q += 0.5 * gs[r] * l_entry_with(ent, 2, r, col).constant * gs[col];
            }
        }
        let z: Complex64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        assert!((q - z.norm_sqr()).abs() < 1e-12, "{q} vs {}", z.norm_sqr());
    }
}
