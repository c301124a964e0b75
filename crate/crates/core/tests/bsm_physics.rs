use proptest::prelude::*;
use timebin::bsm::{
    basis_averaged_efficiency, classify, eq1_efficiency, error_rates, is_error, BsmOutcome, ClickPattern,
};
use timebin::montecarlo::{CountKey, CountsTable, Tally};
use timebin::optics::{fock_distribution, Analyzer, FockState, PatternDistribution};
use timebin::states::{Basis, Qubit};

fn single(a: Qubit, b: Qubit, analyzer: &Analyzer, theta: f64) -> PatternDistribution {
    let state = FockState::single_photons(a.unit_amplitudes(), b.unit_amplitudes());
    fock_distribution(&state, analyzer, theta).unwrap()
}

/// Expected `(ψ⁻, ψ⁺)` for ideal single photons.
fn ideal_table(a: Qubit, b: Qubit) -> (f64, f64) {
    match (a.basis(), a == b) {
        (Basis::Z, true) => (0.0, 0.0),
        (Basis::Z, false) => (0.5, 0.5),
        (Basis::X, true) => (0.0, 0.5),
        (Basis::X, false) => (0.5, 0.0),
    }
}

const PSI_PLUS_D1: usize = 0b0011;
const PSI_PLUS_D2: usize = 0b1100;

#[test]
fn ideal_single_photon_table() {
    let analyzer = Analyzer::ideal();
    for basis in Basis::ALL {
        for a in basis.states() {
            for b in basis.states() {
                for theta in [0.0, 0.7, 2.0, 4.5] {
                    let d = single(a, b, &analyzer, theta);
                    let (m, p) = ideal_table(a, b);
                    assert!((d.outcome_prob(BsmOutcome::PsiMinus) - m).abs() < 1e-12, "{a}{b} {theta}");
                    assert!((d.outcome_prob(BsmOutcome::PsiPlus) - p).abs() < 1e-12, "{a}{b} {theta}");
                    assert!((d.total() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn ideal_projections_are_never_errors() {
    let analyzer = Analyzer::ideal();
    for a in Qubit::ALL {
        for b in a.basis().states() {
            let d = single(a, b, &analyzer, 1.3);
            for o in [BsmOutcome::PsiMinus, BsmOutcome::PsiPlus] {
                if is_error(a, b, o) {
                    assert!(d.outcome_prob(o) < 1e-15, "{a}{b} {o}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn detector_efficiency_scaling(eta1 in 0.0f64..1.0, eta2 in 0.0f64..1.0, theta in 0.0f64..6.3) {
        let ideal = Analyzer::ideal();
        let real = Analyzer::with_efficiencies(eta1, eta2);
        for a in Qubit::ALL {
            for b in a.basis().states() {
                let i = single(a, b, &ideal, theta);
                let r = single(a, b, &real, theta);
                let m = r.outcome_prob(BsmOutcome::PsiMinus);
                prop_assert!((m - eta1 * eta2 * i.outcome_prob(BsmOutcome::PsiMinus)).abs() < 1e-12);
                prop_assert!((r.0[PSI_PLUS_D1] - eta1 * eta1 * i.0[PSI_PLUS_D1]).abs() < 1e-12);
                prop_assert!((r.0[PSI_PLUS_D2] - eta2 * eta2 * i.0[PSI_PLUS_D2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_detectors_reach_quadratic_limit(eta in 0.0f64..1.0) {
        let real = Analyzer::with_efficiencies(eta, eta);
        for basis in Basis::ALL {
            let mut total = 0.0;
            for a in basis.states() {
                for b in basis.states() {
                    let d = single(a, b, &real, 0.4);
                    total += d.outcome_prob(BsmOutcome::PsiMinus) + d.outcome_prob(BsmOutcome::PsiPlus);
                }
            }
            prop_assert!((total / 4.0 - eq1_efficiency(eta, eta)).abs() < 1e-12);
        }
    }
}

#[test]
fn classify_counts() {
    let mut n = [0usize; 3];
    for p in ClickPattern::all() {
        match classify(p) {
            BsmOutcome::PsiMinus => n[0] += 1,
            BsmOutcome::PsiPlus => n[1] += 1,
            BsmOutcome::NoProjection => n[2] += 1,
        }
    }
    assert_eq!(n, [2, 2, 12]);
}

#[test]
fn averaged_limit_is_one_half() {
    let analyzer = Analyzer::ideal();
    let mut per_basis = Vec::new();
    for basis in Basis::ALL {
        let mut total = 0.0;
        for a in basis.states() {
            for b in basis.states() {
                let d = single(a, b, &analyzer, 0.0);
                total += d.outcome_prob(BsmOutcome::PsiMinus) + d.outcome_prob(BsmOutcome::PsiPlus);
            }
        }
        per_basis.push(total / 4.0);
    }
    assert!((basis_averaged_efficiency(per_basis[0], per_basis[1]) - 0.5).abs() < 1e-12);
}

fn tally(n_cycles: u64, n_psiminus: u64, n_psiplus: u64) -> Tally {
    Tally {
        n_cycles,
        n_psiminus,
        n_psiplus,
    }
}

#[test]
fn error_rate_arithmetic() {
    let mut t = CountsTable::new("d", 0);
    t.add(CountKey::new(Qubit::Zero, Qubit::One, 0.1, 0.1), tally(1000, 99, 40));
    t.add(CountKey::new(Qubit::Zero, Qubit::Zero, 0.1, 0.1), tally(1000, 1, 0));
    let r = error_rates(&t);
    let z = r.basis(Basis::Z).unwrap();
    assert_eq!(z.psi_minus.error_rate, Some(0.01));
    assert_eq!(z.psi_plus.error_rate, Some(0.0));
    assert_eq!(z.total_efficiency, z.psi_minus.efficiency + z.psi_plus.efficiency);
    assert!(r.basis(Basis::X).is_none());
}

#[test]
fn orthogonal_z_inputs_have_no_errors() {
    let mut t = CountsTable::new("d", 0);
    t.add(CountKey::new(Qubit::Zero, Qubit::One, 0.1, 0.1), tally(500, 20, 21));
    let z = error_rates(&t);
    let z = z.basis(Basis::Z).unwrap();
    assert_eq!(z.psi_minus.error_rate, Some(0.0));
    assert_eq!(z.psi_plus.error_rate, Some(0.0));
}

#[test]
fn missing_projections_are_absent_not_zero() {
    let mut t = CountsTable::new("d", 0);
    t.add(CountKey::new(Qubit::Plus, Qubit::Minus, 0.1, 0.1), tally(500, 20, 0));
    let r = error_rates(&t);
    let x = r.basis(Basis::X).unwrap();
    assert_eq!(x.psi_plus.error_rate, None);
    assert_eq!(x.psi_minus.error_rate, Some(0.0));
    let json = serde_json::to_string(&r).unwrap();
    let back: timebin::bsm::AnalysisReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert!(r.to_table().contains("n/a"));
}

#[test]
fn oracle_counts_give_zero_error_rates() {
    // Tables built from ideal single-photon probabilities.
    let analyzer = Analyzer::ideal();
    let mut t = CountsTable::new("oracle", 0);
    let n = 1_000_000u64;
    for a in Qubit::ALL {
        for b in a.basis().states() {
            let d = single(a, b, &analyzer, 0.0);
            let m = (d.outcome_prob(BsmOutcome::PsiMinus) * n as f64).round() as u64;
            let p = (d.outcome_prob(BsmOutcome::PsiPlus) * n as f64).round() as u64;
            t.add(CountKey::new(a, b, 1.0, 1.0), tally(n, m, p));
        }
    }
    let r = error_rates(&t);
    for basis in Basis::ALL {
        let b = r.basis(basis).unwrap();
        assert_eq!(b.psi_minus.error_rate, Some(0.0));
        assert_eq!(b.psi_plus.error_rate, Some(0.0));
    }
    assert!((r.basis_averaged_efficiency.unwrap() - 0.5).abs() < 1e-12);
}
