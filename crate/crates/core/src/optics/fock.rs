//! Truncated photon-number-basis model of the analyzer, used to check the
//! coherent-state shortcut in the parent module.
//!
//! Input modes are ordered `[A early, A late, B early, B late]`, output modes
//! `[det1 early, det1 late, det2 early, det2 late]`. The splitter acts on
//! creation operators, `a† → (c† + d†)/√2` and `b† → e^{iθ}(c† − d†)/√2`,
//! bin by bin.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::{detector_joint, Analyzer, PatternDistribution};
use crate::error::{domain, Error, Result};
use crate::states::TimeBinState;

/// Largest probability mass the truncated expansion may drop.
pub const FOCK_TAIL_TOLERANCE: f64 = 1e-9;

const MAX_CUTOFF: usize = 60;

type Occupation = [u8; 4];

/// Sparse four-mode photon-number state.
#[derive(Clone, Debug, Default)]
pub struct FockState {
    terms: Vec<(Occupation, Complex64)>,
}

impl FockState {
    /// Coherent pulses from both sources, truncated to at most `cutoff`
    /// photons in total.
    pub fn coherent(a: &TimeBinState, b: &TimeBinState, cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(domain("Fock cutoff must be >= 1"));
        }
        if cutoff > MAX_CUTOFF {
            return Err(domain(format!("Fock cutoff must be <= {MAX_CUTOFF}")));
        }
        let alphas = [a.amp_early, a.amp_late, b.amp_early, b.amp_late];
        let mean: f64 = alphas.iter().map(|z| z.norm_sqr()).sum();
        // amps[m][n] = e^{-|α|²/2} αⁿ/√n!
        let amps: Vec<Vec<Complex64>> = alphas
            .iter()
            .map(|alpha| {
                let mut v = Vec::with_capacity(cutoff + 1);
                let mut cur = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
                v.push(cur);
                for n in 1..=cutoff {
                    cur = cur * alpha / (n as f64).sqrt();
                    v.push(cur);
                }
                v
            })
            .collect();

        let mut terms = Vec::new();
        let mut kept = 0.0;
        for n0 in 0..=cutoff {
            for n1 in 0..=cutoff - n0 {
                for n2 in 0..=cutoff - n0 - n1 {
                    for n3 in 0..=cutoff - n0 - n1 - n2 {
                        let amp = amps[0][n0] * amps[1][n1] * amps[2][n2] * amps[3][n3];
                        kept += amp.norm_sqr();
                        terms.push(([n0 as u8, n1 as u8, n2 as u8, n3 as u8], amp));
                    }
                }
            }
        }
        let tail = if mean == 0.0 { 0.0 } else { (1.0 - kept).max(0.0) };
        if tail > FOCK_TAIL_TOLERANCE {
            return Err(Error::Truncation {
                cutoff,
                tail,
                tolerance: FOCK_TAIL_TOLERANCE,
            });
        }
        Ok(Self { terms })
    }

    /// One photon from each source, in the normalized time-bin superpositions
    /// `a` and `b` (amplitudes `(early, late)`).
    pub fn single_photons(a: (Complex64, Complex64), b: (Complex64, Complex64)) -> Self {
        let mut terms = Vec::with_capacity(4);
        for (ia, za) in [a.0, a.1].into_iter().enumerate() {
            for (ib, zb) in [b.0, b.1].into_iter().enumerate() {
                let mut occ = [0u8; 4];
                occ[ia] = 1;
                occ[2 + ib] = 1;
                terms.push((occ, za * zb));
            }
        }
        Self { terms }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.iter().map(|(_, z)| z.norm_sqr()).sum()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Output-port creation-operator polynomial of one bin,
/// `(c+d)^na (e^{iθ}(c−d))^nb / 2^{(na+nb)/2}`, as `(k_c, coefficient)`
/// with `k_d = na + nb − k_c`.
fn bin_polynomial(na: usize, nb: usize, phase: Complex64) -> Vec<Complex64> {
    let total = na + nb;
    let mut coeff = vec![Complex64::ZERO; total + 1];
    let scale = phase.powu(nb as u32) * FRAC_1_SQRT_2.powi(total as i32);
    for i in 0..=na {
        for j in 0..=nb {
            let sign = if (nb - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            coeff[i + j] += scale * (binomial(na, i) * binomial(nb, j) * sign);
        }
    }
    coeff
}

/// Pattern distribution of an arbitrary photon-number input state at a
/// fixed relative phase.
pub fn fock_distribution(state: &FockState, analyzer: &Analyzer, theta: f64) -> Result<PatternDistribution> {
    let phase = Complex64::from_polar(1.0, theta);
    let mut out: HashMap<Occupation, Complex64> = HashMap::new();
    let max_photons = state
        .terms
        .iter()
        .map(|(occ, _)| occ.iter().map(|&n| n as usize).sum::<usize>())
        .max()
        .unwrap_or(0);
    let factorials: Vec<f64> = (0..=max_photons).map(factorial).collect();
    for &(occ, amp) in &state.terms {
        if amp == Complex64::ZERO {
            continue;
        }
        let [ae, al, be, bl] = occ.map(usize::from);
        let norm = amp / (factorials[ae] * factorials[al] * factorials[be] * factorials[bl]).sqrt();
        let early = bin_polynomial(ae, be, phase);
        let late = bin_polynomial(al, bl, phase);
        let (ne, nl) = (ae + be, al + bl);
        for (kce, ce) in early.iter().enumerate() {
            let kde = ne - kce;
            let fe = (factorials[kce] * factorials[kde]).sqrt();
            for (kcl, cl) in late.iter().enumerate() {
                let kdl = nl - kcl;
                let fl = (factorials[kcl] * factorials[kdl]).sqrt();
                let key = [kce as u8, kcl as u8, kde as u8, kdl as u8];
                *out.entry(key).or_insert(Complex64::ZERO) += norm * ce * cl * (fe * fl);
            }
        }
    }

    let darks = [analyzer.dark_prob(0)?, analyzer.dark_prob(1)?];
    let click = |k: usize, n: u8| -> f64 {
        let eta = analyzer.detectors[k].eta;
        1.0 - (1.0 - darks[k]) * (1.0 - eta).powi(n as i32)
    };
    let mut acc = [0.0; 16];
    // Sort for summation order independent of hash iteration.
    let mut entries: Vec<_> = out.into_iter().collect();
    entries.sort_by_key(|(k, _)| *k);
    for ([d1e, d1l, d2e, d2l], amp) in entries {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let det = [
            detector_joint(click(0, d1e), click(0, d1l), analyzer.blocks_late(0)),
            detector_joint(click(1, d2e), click(1, d2l), analyzer.blocks_late(1)),
        ];
        let dist = PatternDistribution::from_detector_pairs(det);
        for (s, q) in acc.iter_mut().zip(dist.0) {
            *s += p * q;
        }
    }
    Ok(PatternDistribution(acc))
}

/// Photon-number computation of the coherent-input pattern distribution.
pub fn fock_pattern_oracle(
    a: &TimeBinState,
    b: &TimeBinState,
    analyzer: &Analyzer,
    theta: f64,
    cutoff: usize,
) -> Result<PatternDistribution> {
    let state = FockState::coherent(a, b, cutoff)?;
    fock_distribution(&state, analyzer, theta)
}
