//! Decoy-state bounds on the single-photon-pair component.
//!
//! Gains measured at every pair of source intensities are matched against a
//! truncated Poisson mixture of unknown photon-number yields `Y_nm`. A linear
//! program then finds the smallest `Y_11` (and largest error yield `B_11`)
//! consistent with the data, with the truncated tail and statistical
//! fluctuations folded into the constraint slack.

pub mod simplex;

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::bsm::{basis_averaged_efficiency, is_error, BsmOutcome};
use crate::error::{domain, Error, Result};
use crate::montecarlo::CountsTable;
use crate::states::Basis;
pub use simplex::{simplex_solve, Constraint, LinearProgram, LpSolution, Sense};

pub const DEFAULT_CUTOFF: usize = 7;
pub const DEFAULT_SIGMAS: f64 = 1.0;
pub const BOUND_LABEL: &str = "LP decoy bound";

const MAX_CUTOFF: usize = 12;

/// Which projections count towards the gain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeFilter {
    PsiMinus,
    PsiPlus,
    Combined,
}

impl OutcomeFilter {
    pub const ALL: [OutcomeFilter; 3] = [OutcomeFilter::PsiMinus, OutcomeFilter::PsiPlus, OutcomeFilter::Combined];

    pub fn accepts(self, outcome: BsmOutcome) -> bool {
        match self {
            OutcomeFilter::PsiMinus => outcome == BsmOutcome::PsiMinus,
            OutcomeFilter::PsiPlus => outcome == BsmOutcome::PsiPlus,
            OutcomeFilter::Combined => outcome != BsmOutcome::NoProjection,
        }
    }
}

impl fmt::Display for OutcomeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeFilter::PsiMinus => "psi-",
            OutcomeFilter::PsiPlus => "psi+",
            OutcomeFilter::Combined => "combined",
        })
    }
}

/// Raw counts behind one gain entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainCounts {
    pub cycles: u64,
    pub projections: u64,
    pub errors: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Projections per cycle.
    pub gain: f64,
    /// Erroneous fraction of the projections.
    pub error_rate: f64,
    /// `None` for exact rates, which carry no statistical uncertainty.
    pub counts: Option<GainCounts>,
}

impl GainEntry {
    pub fn exact(mu_a: f64, mu_b: f64, gain: f64, error_rate: f64) -> Self {
        Self {
            mu_a,
            mu_b,
            gain,
            error_rate,
            counts: None,
        }
    }

    pub fn from_counts(mu_a: f64, mu_b: f64, counts: GainCounts) -> Result<Self> {
        if counts.cycles == 0 {
            return Err(Error::IncompleteData(format!("no cycles at intensities ({mu_a}, {mu_b})")));
        }
        if counts.projections > counts.cycles || counts.errors > counts.projections {
            return Err(domain(format!("inconsistent counts at intensities ({mu_a}, {mu_b})")));
        }
        let gain = counts.projections as f64 / counts.cycles as f64;
        let error_rate = if counts.projections == 0 {
            0.0
        } else {
            counts.errors as f64 / counts.projections as f64
        };
        Ok(Self {
            mu_a,
            mu_b,
            gain,
            error_rate,
            counts: Some(counts),
        })
    }

    pub fn error_gain(&self) -> f64 {
        self.gain * self.error_rate
    }

    /// One-sigma standard errors of the gain and the error gain.
    pub fn standard_errors(&self) -> (f64, f64) {
        match self.counts {
            None => (0.0, 0.0),
            Some(c) => (binomial_se(c.projections, c.cycles), binomial_se(c.errors, c.cycles)),
        }
    }
}

/// Standard error of `k/n`; zero observations are treated as one for the
/// variance so that an empty cell still carries some uncertainty.
fn binomial_se(k: u64, n: u64) -> f64 {
    let n_f = n as f64;
    let rest = (n - k) as f64 / n_f;
    ((k.max(1) as f64) * rest).sqrt() / n_f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainsTable {
    pub basis: Basis,
    pub outcome: OutcomeFilter,
    pub entries: Vec<GainEntry>,
}

impl GainsTable {
    pub fn new(basis: Basis, outcome: OutcomeFilter, entries: Vec<GainEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.mu_a >= 0.0 && e.mu_b >= 0.0 && e.mu_a.is_finite() && e.mu_b.is_finite()) {
                return Err(domain(format!("intensities must be finite and >= 0, got ({}, {})", e.mu_a, e.mu_b)));
            }
            if !(0.0..=1.0).contains(&e.gain) || !(0.0..=1.0).contains(&e.error_rate) {
                return Err(domain(format!(
                    "gain and error rate must lie in [0, 1] at ({}, {})",
                    e.mu_a, e.mu_b
                )));
            }
        }
        Ok(Self {
            basis,
            outcome,
            entries,
        })
    }

    pub fn get(&self, mu_a: f64, mu_b: f64) -> Option<&GainEntry> {
        self.entries.iter().find(|e| e.mu_a == mu_a && e.mu_b == mu_b)
    }

    /// Distinct intensities of each source, descending.
    pub fn intensities(&self) -> [Vec<f64>; 2] {
        let collect = |f: fn(&GainEntry) -> f64| {
            let set: BTreeSet<u64> = self.entries.iter().map(|e| f(e).to_bits()).collect();
            let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        [collect(|e| e.mu_a), collect(|e| e.mu_b)]
    }

    /// Signal (largest) intensity of each source.
    pub fn signal(&self) -> (f64, f64) {
        let [a, b] = self.intensities();
        (a.first().copied().unwrap_or(0.0), b.first().copied().unwrap_or(0.0))
    }
}

/// Pools every state pair of `basis` into per-intensity-pair gains.
pub fn assemble_gains(counts: &CountsTable, basis: Basis, outcome: OutcomeFilter) -> Result<GainsTable> {
    let mut cells: Vec<(f64, f64, GainCounts)> = Vec::new();
    for (key, tally) in counts.iter().filter(|(k, _)| k.basis() == basis) {
        let idx = match cells.iter().position(|(a, b, _)| *a == key.mu_a && *b == key.mu_b) {
            Some(i) => i,
            None => {
                cells.push((
                    key.mu_a,
                    key.mu_b,
                    GainCounts {
                        cycles: 0,
                        projections: 0,
                        errors: 0,
                    },
                ));
                cells.len() - 1
            }
        };
        let c = &mut cells[idx].2;
        c.cycles += tally.n_cycles;
        for (o, n) in [(BsmOutcome::PsiMinus, tally.n_psiminus), (BsmOutcome::PsiPlus, tally.n_psiplus)] {
            if outcome.accepts(o) {
                c.projections += n;
                if is_error(key.state_a, key.state_b, o) {
                    c.errors += n;
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::IncompleteData(format!("no {basis}-basis counts")));
    }

    let mut mus_a: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let mut mus_b: Vec<f64> = cells.iter().map(|c| c.1).collect();
    for v in [&mut mus_a, &mut mus_b] {
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
    }
    let mut missing = Vec::new();
    for &a in &mus_a {
        for &b in &mus_b {
            if !cells.iter().any(|c| c.0 == a && c.1 == b) {
                missing.push(format!("({a}, {b})"));
            }
        }
    }
    if mus_a.len() < 3 || mus_b.len() < 3 {
        missing.push(format!("{basis} basis needs three intensities per source"));
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteData(format!(
            "{basis} basis is missing intensity pairs: {}",
            missing.join(", ")
        )));
    }

    cells.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1)));
    let entries = cells
        .into_iter()
        .map(|(a, b, c)| GainEntry::from_counts(a, b, c))
        .collect::<Result<Vec<_>>>()?;
    GainsTable::new(basis, outcome, entries)
}

/// Poisson weights `P_0..=P_cutoff` at mean `mu`.
pub fn poisson_weights(mu: f64, cutoff: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(cutoff + 1);
    let mut cur = (-mu).exp();
    w.push(cur);
    for n in 1..=cutoff {
        cur *= mu / n as f64;
        w.push(cur);
    }
    w
}

/// Single-photon emission probability `μe^{−μ}`.
pub fn p1(mu: f64) -> f64 {
    mu * (-mu).exp()
}

fn check_inputs(gains: &GainsTable, cutoff: usize, sigmas: f64) -> Result<()> {
    if !(3..=MAX_CUTOFF).contains(&cutoff) {
        return Err(Error::Precondition(format!("photon-number cutoff must be in 3..={MAX_CUTOFF}, got {cutoff}")));
    }
    if !(sigmas >= 0.0 && sigmas.is_finite()) {
        return Err(Error::Precondition(format!("confidence sigmas must be finite and >= 0, got {sigmas}")));
    }
    for (side, mus) in ["a", "b"].iter().zip(gains.intensities()) {
        if mus.iter().filter(|&&m| m > 0.0).count() < 2 {
            return Err(Error::Precondition(format!(
                "source {side} needs a signal and a decoy intensity above zero"
            )));
        }
    }
    Ok(())
}

/// Index of `Y_nm` in the flattened variable vector.
fn var(n: usize, m: usize, cutoff: usize) -> usize {
    n * (cutoff + 1) + m
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Quantity {
    Gain,
    ErrorGain,
}

/// Constraint rows `(name, coefficients over the yields, lower, upper)` for one
/// measured quantity at every intensity pair.
fn mixture_rows(gains: &GainsTable, cutoff: usize, sigmas: f64, quantity: Quantity) -> Vec<(String, Vec<f64>, f64, f64)> {
    let size = (cutoff + 1) * (cutoff + 1);
    gains
        .entries
        .iter()
        .map(|e| {
            let pa = poisson_weights(e.mu_a, cutoff);
            let pb = poisson_weights(e.mu_b, cutoff);
            let mut coeffs = vec![0.0; size];
            for n in 0..=cutoff {
                for m in 0..=cutoff {
                    coeffs[var(n, m, cutoff)] = pa[n] * pb[m];
                }
            }
            let tail = (1.0 - pa.iter().sum::<f64>() * pb.iter().sum::<f64>()).max(0.0);
            let (se_q, se_e) = e.standard_errors();
            let (value, u, kind) = match quantity {
                Quantity::Gain => (e.gain, sigmas * se_q, "gain"),
                Quantity::ErrorGain => (e.error_gain(), sigmas * se_e, "error gain"),
            };
            (
                format!("{kind} at ({}, {})", e.mu_a, e.mu_b),
                coeffs,
                value - u - tail,
                value + u,
            )
        })
        .collect()
}

/// Smallest single-photon-pair yield consistent with the gains.
pub fn lp_bound_yield(gains: &GainsTable, cutoff: usize, sigmas: f64) -> Result<f64> {
    check_inputs(gains, cutoff, sigmas)?;
    let size = (cutoff + 1) * (cutoff + 1);
    let mut objective = vec![0.0; size];
    objective[var(1, 1, cutoff)] = 1.0;
    let mut lp = LinearProgram::new(Sense::Minimize, objective, vec![0.0; size], vec![1.0; size]);
    for (name, coeffs, lo, hi) in mixture_rows(gains, cutoff, sigmas, Quantity::Gain) {
        lp.add_constraint(name, coeffs, lo, hi);
    }
    let sol = simplex_solve(&lp)?;
    Ok(sol.objective.clamp(0.0, 1.0))
}

/// Largest single-photon-pair error rate consistent with the gains, given
/// a lower bound on the matching yield.
pub fn lp_bound_error(gains: &GainsTable, cutoff: usize, sigmas: f64, y11_lower: f64) -> Result<f64> {
    check_inputs(gains, cutoff, sigmas)?;
    if !(y11_lower > 0.0 && y11_lower <= 1.0) {
        return Err(Error::Precondition(format!("yield bound must lie in (0, 1], got {y11_lower}")));
    }
    // Variables: Y_nm followed by B_nm = e_nm·Y_nm.
    let size = (cutoff + 1) * (cutoff + 1);
    let mut objective = vec![0.0; 2 * size];
    objective[size + var(1, 1, cutoff)] = 1.0;
    let mut lp = LinearProgram::new(Sense::Maximize, objective, vec![0.0; 2 * size], vec![1.0; 2 * size]);
    for (name, coeffs, lo, hi) in mixture_rows(gains, cutoff, sigmas, Quantity::Gain) {
        let mut full = coeffs;
        full.resize(2 * size, 0.0);
        lp.add_constraint(name, full, lo, hi);
    }
    for (name, coeffs, lo, hi) in mixture_rows(gains, cutoff, sigmas, Quantity::ErrorGain) {
        let mut full = vec![0.0; size];
        full.extend(coeffs);
        lp.add_constraint(name, full, lo, hi);
    }
    for n in 0..=cutoff {
        for m in 0..=cutoff {
            let mut coeffs = vec![0.0; 2 * size];
            coeffs[size + var(n, m, cutoff)] = 1.0;
            coeffs[var(n, m, cutoff)] = -1.0;
            lp.add_constraint(format!("B{n}{m} <= Y{n}{m}"), coeffs, f64::NEG_INFINITY, 0.0);
        }
    }
    let sol = simplex_solve(&lp)?;
    let b11 = sol.objective.max(0.0);
    Ok((b11 / y11_lower).min(1.0))
}

/// `η = Q₁₁ / (P₁(μ)²·t²)`.
pub fn efficiency_from_q11(q11: f64, mu: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("transmission must lie in (0, 1], got {t}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(domain(format!("mean photon number must be > 0, got {mu}")));
    }
    if q11 < 0.0 {
        return Err(domain(format!("gain must be >= 0, got {q11}")));
    }
    Ok(q11 / (p1(mu) * p1(mu) * t * t))
}

/// `η = Y₁₁ / (t_a·t_b)`.
pub fn efficiency_from_yield(y11: f64, t_a: f64, t_b: f64) -> Result<f64> {
    for t in [t_a, t_b] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(domain(format!("transmission must lie in (0, 1], got {t}")));
        }
    }
    Ok(y11 / (t_a * t_b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub label: String,
    pub basis: Basis,
    pub outcome: OutcomeFilter,
    pub y11_lower: f64,
    pub e11_upper: f64,
    /// `P₁(μ_a)·P₁(μ_b)·Y11_lower` at the signal intensities.
    pub q11_lower: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub cutoff: usize,
    pub sigmas: f64,
    /// Analyzer efficiency implied by the yield bound, when the channel
    /// transmissions are known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_bsm: Option<f64>,
}

/// Yield and error bounds for one gains table. A zero yield bound leaves the
/// error rate unconstrained, reported as 1.
pub fn decoy_bounds(gains: &GainsTable, cutoff: usize, sigmas: f64, transmissions: Option<[f64; 2]>) -> Result<DecoyBounds> {
    let y11_lower = lp_bound_yield(gains, cutoff, sigmas)?;
    let e11_upper = if y11_lower > 0.0 {
        lp_bound_error(gains, cutoff, sigmas, y11_lower)?
    } else {
        1.0
    };
    let (mu_a, mu_b) = gains.signal();
    let eta_bsm = match transmissions {
        Some([ta, tb]) => Some(efficiency_from_yield(y11_lower, ta, tb)?),
        None => None,
    };
    Ok(DecoyBounds {
        label: BOUND_LABEL.to_string(),
        basis: gains.basis,
        outcome: gains.outcome,
        y11_lower,
        e11_upper,
        q11_lower: p1(mu_a) * p1(mu_b) * y11_lower,
        mu_a,
        mu_b,
        cutoff,
        sigmas,
        eta_bsm,
    })
}

/// Bounds for every basis present in a counts table and every outcome filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyReport {
    pub label: String,
    pub cutoff: usize,
    pub sigmas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmissions: Option<[f64; 2]>,
    pub bounds: Vec<DecoyBounds>,
    /// `(η_z + 2η_x)/3` from the combined-outcome bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_averaged_efficiency: Option<f64>,
}

impl DecoyReport {
    pub fn get(&self, basis: Basis, outcome: OutcomeFilter) -> Option<&DecoyBounds> {
        self.bounds.iter().find(|b| b.basis == basis && b.outcome == outcome)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Error-rate and efficiency tables in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} (photon-number cutoff {}, {} sigma)",
            self.label, self.cutoff, self.sigmas
        );
        let _ = writeln!(s, "\nsingle-photon error rate upper bound e11 [%]");
        let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>10}", "basis", "psi-", "psi+", "combined");
        let bases: Vec<Basis> = Basis::ALL
            .into_iter()
            .filter(|b| self.bounds.iter().any(|x| x.basis == *b))
            .collect();
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        for &b in &bases {
            let row: Vec<String> = OutcomeFilter::ALL
                .iter()
                .map(|&o| cell(self.get(b, o).map(|x| x.e11_upper)))
                .collect();
            let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>10}", b.to_string(), row[0], row[1], row[2]);
        }
        let to_eta = |x: &DecoyBounds| x.eta_bsm.unwrap_or(x.y11_lower);
        let heading = if self.transmissions.is_some() {
            "BSM efficiency lower bound eta [%]"
        } else {
            "single-photon yield lower bound Y11 [%]"
        };
        let _ = writeln!(s, "\n{heading}");
        let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>10}", "basis", "psi-", "psi+", "combined");
        for &b in &bases {
            let row: Vec<String> = OutcomeFilter::ALL
                .iter()
                .map(|&o| cell(self.get(b, o).map(to_eta)))
                .collect();
            let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>10}", b.to_string(), row[0], row[1], row[2]);
        }
        if let Some(avg) = self.basis_averaged_efficiency {
            let _ = writeln!(s, "\nbasis-averaged (z + 2x)/3: {:.2}%", 100.0 * avg);
        }
        s
    }
}

/// Runs [`decoy_bounds`] for each basis with data and each outcome filter.
pub fn analyze_counts(counts: &CountsTable, cutoff: usize, sigmas: f64, transmissions: Option<[f64; 2]>) -> Result<DecoyReport> {
    let bases: Vec<Basis> = Basis::ALL
        .into_iter()
        .filter(|b| counts.iter().any(|(k, _)| k.basis() == *b))
        .collect();
    if bases.is_empty() {
        return Err(Error::IncompleteData("counts table is empty".into()));
    }
    let mut bounds = Vec::new();
    for &basis in &bases {
        for outcome in OutcomeFilter::ALL {
            let gains = assemble_gains(counts, basis, outcome)?;
            let b = decoy_bounds(&gains, cutoff, sigmas, transmissions).map_err(|e| match e {
                Error::Infeasible { violated } => Error::Infeasible {
                    violated: violated.into_iter().map(|v| format!("{basis} basis, {outcome}: {v}")).collect(),
                },
                other => other,
            })?;
            bounds.push(b);
        }
    }
    let combined = |b: Basis| {
        bounds
            .iter()
            .find(|x| x.basis == b && x.outcome == OutcomeFilter::Combined)
            .map(|x| x.eta_bsm.unwrap_or(x.y11_lower))
    };
    let basis_averaged_efficiency = match (combined(Basis::Z), combined(Basis::X)) {
        (Some(z), Some(x)) => Some(basis_averaged_efficiency(z, x)),
        _ => None,
    };
    Ok(DecoyReport {
        label: BOUND_LABEL.to_string(),
        cutoff,
        sigmas,
        transmissions,
        bounds,
        basis_averaged_efficiency,
    })
}
