//! Coordination overhead, interior-point complexity and variable counts.

use serde::{Deserialize, Serialize};

use crate::schemes::{BaselineKind, Scheme, SchemeKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadModel {
    /// Coordinated BS count.
    pub n: u64,
    /// Users per cell.
    pub k: u64,
    /// Bits per user CSI report.
    pub chi_c: u64,
    /// Bits per user symbol exchange.
    pub chi_s: u64,
    /// Solver accuracy.
    pub epsilon: f64,
    pub m_antennas: u64,
}

impl Default for OverheadModel {
    fn default() -> Self {
        Self {
            n: 3,
            k: 3,
            chi_c: 10,
            chi_s: 140,
            epsilon: 1e-6,
            m_antennas: 4,
        }
    }
}

/// Backhaul bits per coordination round.
///
/// Data-sharing schemes pay `N(N−1)K(Nχ_C + χ_S)`, CSI-only schemes
/// `N²(N−1)Kχ_C`, statistical coordination nothing.
pub fn coordination_overhead(scheme: Scheme, m: &OverheadModel) -> u64 {
    let (n, k) = (m.n, m.k);
    let nm1 = n.saturating_sub(1);
    match scheme {
        Scheme::Ci(SchemeKind::FullCiProb | SchemeKind::FullCiDet)
        | Scheme::Baseline(BaselineKind::CompPerfectCsi) => n * nm1 * k * (n * m.chi_c + m.chi_s),
        Scheme::Ci(SchemeKind::PartialCiProb | SchemeKind::PartialCiDet)
        | Scheme::Baseline(BaselineKind::CbfProb | BaselineKind::CbfDet) => n * n * nm1 * k * m.chi_c,
        Scheme::Ci(SchemeKind::StatCi) => 0,
    }
}

/// Square root of the total conic block order (barrier parameter).
pub fn barrier_parameter(kind: SchemeKind, n_bs: u64, m: u64, k: u64) -> f64 {
    let n = n_bs;
    let inner = match kind {
        SchemeKind::FullCiProb => m * k + 3 * k + 1 + 4 * k * n,
        SchemeKind::FullCiDet => 5 + 4 * n + k * m + k,
        SchemeKind::PartialCiProb => {
            1 + 5 * k + 2 * k * (3 * m + 2) + k * ((n.saturating_sub(1)) * m * m + 1)
        }
        SchemeKind::PartialCiDet => 2 + m + k * (8 + 5 * m + 2),
        SchemeKind::StatCi => 2 + 9 * k + 4 * k * m + m,
    };
    ((n * inner) as f64).sqrt()
}

/// Per-iteration cost split `(c_f, c_g)` of one interior-point step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpmCost {
    pub c_f: f64,
    pub c_g: f64,
}

/// Cost of forming the Newton system from `P` LMI blocks and `m − P` cone
/// blocks (sizes `k_j`) over `n` unknowns, and of factorizing it.
pub fn ipm_cost(n: f64, lmi_sizes: &[u64], soc_sizes: &[u64]) -> IpmCost {
    let s = |p: u32, v: &[u64]| v.iter().map(|&k| (k as f64).powi(p as i32)).sum::<f64>();
    IpmCost {
        c_f: n * s(3, lmi_sizes) + n * n * s(2, lmi_sizes) + n * s(2, soc_sizes),
        c_g: n * n * n,
    }
}

/// The tabulated `n`-polynomial `a·n + b·n² + n³` coefficients `(a, b)`.
pub fn table_coefficients(kind: SchemeKind, n_bs: u64, m: u64, k: u64) -> (f64, f64) {
    let (nb, m, k) = (n_bs as f64, m as f64, k as f64);
    let nk = nb * k;
    match kind {
        SchemeKind::FullCiProb => (
            nb + 2.0 * nk * (2.0 * nb + 1.0).powi(3) + nk * (m + 1.0).powi(3),
            nb + 2.0 * nk * (2.0 * nb + 1.0).powi(2) + nk * (m + 1.0).powi(2),
        ),
        SchemeKind::FullCiDet => (
            nb + 2.0 * nk * (2.0 * nb + 1.0).powi(3) + 2.0 * nk + nk * (m + 1.0).powi(3),
            nb + 2.0 * nk * (2.0 * nb + 1.0).powi(2) + 2.0 * nk + nk * (m + 1.0).powi(2),
        ),
        SchemeKind::PartialCiProb => {
            let big = (nb - 1.0) * m * m + 1.0;
            (
                nb + 10.0 * nk + nk * big.powi(3) + 2.0 * nk * (2.0 * m + 1.0).powi(3) + nk * (m + 1.0).powi(3),
                nb + 10.0 * nk + nk * big.powi(2) + 2.0 * nk * (2.0 * m + 1.0).powi(2) + nk * (m + 1.0).powi(2),
            )
        }
        SchemeKind::PartialCiDet => (
            nb + 31.0 * nk + 2.0 * nk * (m + 1.0).powi(3) + 2.0 * nk * (2.0 * m + 1.0).powi(3),
            nb + 13.0 * nk + 2.0 * nk * (m + 1.0).powi(2) + 2.0 * nk * (2.0 * m + 1.0).powi(2),
        ),
        SchemeKind::StatCi => (
            nb + 31.0 * nk + 2.0 * nk * (2.0 * m + 1.0).powi(3) + nk * (m + 1.0).powi(3),
            nb + 13.0 * nk + 2.0 * nk * (2.0 * m + 1.0).powi(2) + nk * (m + 1.0).powi(2),
        ),
    }
}

/// `ln(1/ε)·β·(a·n + b·n² + n³)` for `n` unknowns.
pub fn complexity_estimate(kind: SchemeKind, model: &OverheadModel, n_vars: f64) -> f64 {
    let (a, b) = table_coefficients(kind, model.n, model.m_antennas, model.k);
    let beta = barrier_parameter(kind, model.n, model.m_antennas, model.k);
    (1.0 / model.epsilon).ln() * beta * (a * n_vars + b * n_vars * n_vars + n_vars.powi(3))
}

/// Precoding vectors optimized by a scheme: one per BS for symbol-level
/// schemes, one per (BS, user) pair for the per-user baselines.
pub fn variable_count(scheme: Scheme, n_bs: usize, k_per_cell: usize) -> usize {
    match scheme {
        Scheme::Ci(_) => n_bs,
        Scheme::Baseline(_) => n_bs * k_per_cell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_is_ordered() {
        for n in 2..6 {
            for k in 1..5 {
                let m = OverheadModel { n, k, ..Default::default() };
                let f = coordination_overhead(Scheme::Ci(SchemeKind::FullCiProb), &m);
                let p = coordination_overhead(Scheme::Ci(SchemeKind::PartialCiDet), &m);
                assert!(f >= p);
            }
        }
    }

    #[test]
    fn accuracy_one_costs_nothing() {
        let m = OverheadModel { epsilon: 1.0, ..Default::default() };
        assert_eq!(complexity_estimate(SchemeKind::StatCi, &m, 40.0), 0.0);
    }
}
