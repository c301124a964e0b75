//! Bell-state classification of click patterns and the derived figures of
//! merit: error rates, efficiencies, the detector-limited efficiency and the
//! laser frequency-stability requirement.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::montecarlo::CountsTable;
use crate::states::{Basis, Qubit};

/// Clicks registered in one clock cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClickPattern {
    pub d1_early: bool,
    pub d1_late: bool,
    pub d2_early: bool,
    pub d2_late: bool,
}

impl ClickPattern {
    /// Bit layout: `d1_early | d1_late << 1 | d2_early << 2 | d2_late << 3`.
    pub fn index(self) -> usize {
        self.d1_early as usize
            | (self.d1_late as usize) << 1
            | (self.d2_early as usize) << 2
            | (self.d2_late as usize) << 3
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            d1_early: i & 1 != 0,
            d1_late: i & 2 != 0,
            d2_early: i & 4 != 0,
            d2_late: i & 8 != 0,
        }
    }

    pub fn all() -> impl Iterator<Item = ClickPattern> {
        (0..16).map(Self::from_index)
    }

    pub fn clicks(self) -> u32 {
        (self.index() as u32).count_ones()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BsmOutcome {
    PsiMinus,
    PsiPlus,
    NoProjection,
}

impl fmt::Display for BsmOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BsmOutcome::PsiMinus => "psi-",
            BsmOutcome::PsiPlus => "psi+",
            BsmOutcome::NoProjection => "none",
        })
    }
}

/// Two clicks in different bins on different detectors is `ψ⁻`; both bins
/// on one detector is `ψ⁺`. Every other pattern, including three or four
/// clicks, is discarded.
pub fn classify(p: ClickPattern) -> BsmOutcome {
    if p.clicks() != 2 {
        return BsmOutcome::NoProjection;
    }
    if (p.d1_early && p.d2_late) || (p.d1_late && p.d2_early) {
        BsmOutcome::PsiMinus
    } else if (p.d1_early && p.d1_late) || (p.d2_early && p.d2_late) {
        BsmOutcome::PsiPlus
    } else {
        BsmOutcome::NoProjection
    }
}

pub(crate) const OUTCOME_TABLE: [BsmOutcome; 16] = {
    let mut t = [BsmOutcome::NoProjection; 16];
    // d1e+d2l, d1l+d2e
    t[0b1001] = BsmOutcome::PsiMinus;
    t[0b0110] = BsmOutcome::PsiMinus;
    // d1e+d1l, d2e+d2l
    t[0b0011] = BsmOutcome::PsiPlus;
    t[0b1100] = BsmOutcome::PsiPlus;
    t
};

/// Whether `outcome` counts as an error for inputs `a`, `b` prepared in the
/// same basis.
pub fn is_error(a: Qubit, b: Qubit, outcome: BsmOutcome) -> bool {
    let identical = a == b;
    match (a.basis(), outcome) {
        (_, BsmOutcome::NoProjection) => false,
        (Basis::Z, _) => identical,
        (Basis::X, BsmOutcome::PsiMinus) => identical,
        (Basis::X, BsmOutcome::PsiPlus) => !identical,
    }
}

/// Projections and errors for one (basis, outcome) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub projections: u64,
    pub errors: u64,
    /// `None` when no projections were recorded.
    pub error_rate: Option<f64>,
    /// Projections per cycle.
    pub efficiency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub basis: Basis,
    /// Intensity pair the raw figures were taken at.
    pub mu_a: f64,
    pub mu_b: f64,
    pub cycles: u64,
    pub psi_minus: OutcomeStats,
    pub psi_plus: OutcomeStats,
    pub total_efficiency: f64,
}

/// Raw error rates and projection efficiencies per basis, measured at the
/// signal intensity pair of each basis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub bases: Vec<BasisReport>,
    /// `(η_z + 2η_x)/3`, present when both bases were measured.
    pub basis_averaged_efficiency: Option<f64>,
    /// Detector-limited efficiency for comparison, if supplied.
    pub eq1_reference: Option<f64>,
}

impl AnalysisReport {
    pub fn basis(&self, basis: Basis) -> Option<&BasisReport> {
        self.bases.iter().find(|b| b.basis == basis)
    }

    pub fn has_projections(&self) -> bool {
        self.bases
            .iter()
            .any(|b| b.psi_minus.projections + b.psi_plus.projections > 0)
    }

    /// Aligned text table: error rates, then efficiencies, in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if !self.has_projections() {
            out.push_str("no projections recorded\n");
            return out;
        }
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.3}", 100.0 * x));
        let _ = writeln!(out, "Error rates (raw, signal intensities)");
        let _ = writeln!(out, "{:<8}{:>14}{:>14}", "basis", "psi- (%)", "psi+ (%)");
        for b in &self.bases {
            let _ = writeln!(
                out,
                "{:<8}{:>14}{:>14}",
                format!("e^{}", b.basis),
                pct(b.psi_minus.error_rate),
                pct(b.psi_plus.error_rate)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Projection efficiencies (raw, per cycle)");
        let _ = writeln!(out, "{:<8}{:>14}{:>14}{:>14}", "basis", "psi- (%)", "psi+ (%)", "total (%)");
        for b in &self.bases {
            let _ = writeln!(
                out,
                "{:<8}{:>14}{:>14}{:>14}",
                b.basis.to_string(),
                pct(Some(b.psi_minus.efficiency)),
                pct(Some(b.psi_plus.efficiency)),
                pct(Some(b.total_efficiency))
            );
        }
        let _ = writeln!(out);
        if let Some(avg) = self.basis_averaged_efficiency {
            let _ = writeln!(out, "basis-averaged efficiency (z + 2x)/3: {}%", pct(Some(avg)));
        }
        if let Some(eq1) = self.eq1_reference {
            let _ = writeln!(out, "detector limit eta1*eta2/2:            {}%", pct(Some(eq1)));
        }
        out
    }
}

fn outcome_stats(projections: u64, errors: u64, cycles: u64) -> OutcomeStats {
    OutcomeStats {
        projections,
        errors,
        error_rate: (projections > 0).then(|| errors as f64 / projections as f64),
        efficiency: if cycles > 0 {
            projections as f64 / cycles as f64
        } else {
            0.0
        },
    }
}

/// Raw error rates and efficiencies from accumulated counts.
///
/// Only keys at the largest intensity pair of each basis contribute, so the
/// figures describe the signal states; single-photon oracle tables carry a
/// single intensity label and are used as-is.
pub fn error_rates(counts: &CountsTable) -> AnalysisReport {
    let mut bases = Vec::new();
    for basis in Basis::ALL {
        let keys: Vec<_> = counts.iter().filter(|(k, _)| k.basis() == basis).collect();
        if keys.is_empty() {
            continue;
        }
        let mu_a = keys.iter().map(|(k, _)| k.mu_a).fold(f64::NEG_INFINITY, f64::max);
        let mu_b = keys.iter().map(|(k, _)| k.mu_b).fold(f64::NEG_INFINITY, f64::max);
        let (mut cycles, mut pm, mut pp, mut em, mut ep) = (0, 0, 0, 0, 0);
        for (k, t) in keys.iter().filter(|(k, _)| k.mu_a == mu_a && k.mu_b == mu_b) {
            cycles += t.n_cycles;
            pm += t.n_psiminus;
            pp += t.n_psiplus;
            if is_error(k.state_a, k.state_b, BsmOutcome::PsiMinus) {
                em += t.n_psiminus;
            }
            if is_error(k.state_a, k.state_b, BsmOutcome::PsiPlus) {
                ep += t.n_psiplus;
            }
        }
        let psi_minus = outcome_stats(pm, em, cycles);
        let psi_plus = outcome_stats(pp, ep, cycles);
        bases.push(BasisReport {
            basis,
            mu_a,
            mu_b,
            cycles,
            total_efficiency: psi_minus.efficiency + psi_plus.efficiency,
            psi_minus,
            psi_plus,
        });
    }
    let eff = |b: Basis| {
        bases
            .iter()
            .find(|r| r.basis == b)
            .map(|r| r.total_efficiency)
    };
    let basis_averaged_efficiency = match (eff(Basis::Z), eff(Basis::X)) {
        (Some(z), Some(x)) => Some(basis_averaged_efficiency(z, x)),
        _ => None,
    };
    AnalysisReport {
        bases,
        basis_averaged_efficiency,
        eq1_reference: None,
    }
}

/// Detector-limited efficiency `η₁η₂/2`.
pub fn eq1_efficiency(eta_det_1: f64, eta_det_2: f64) -> f64 {
    0.5 * eta_det_1 * eta_det_2
}

/// Average over the three bases with the unmeasured `y` basis taken equal
/// to `x`.
pub fn basis_averaged_efficiency(eta_z: f64, eta_x: f64) -> f64 {
    (eta_z + 2.0 * eta_x) / 3.0
}

/// Largest laser frequency offset keeping `Δφ = 2πΔν·t₀` below
/// `max_phase_error_deg`, in Hz.
pub fn required_frequency_stability(t0_ns: f64, max_phase_error_deg: f64) -> Result<f64> {
    if !(t0_ns > 0.0) {
        return Err(domain(format!("bin separation must be > 0, got {t0_ns}")));
    }
    Ok(max_phase_error_deg / 360.0 / (t0_ns * 1e-9))
}
