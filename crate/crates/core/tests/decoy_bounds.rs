mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timebin::decoy::{
    analyze_counts, assemble_gains, decoy_bounds, lp_bound_error, lp_bound_yield, poisson_weights, simplex_solve,
    GainCounts, GainEntry, GainsTable, OutcomeFilter,
};
use timebin::montecarlo::{CountsTable, RunConfig, Tally};
use timebin::optics::{fock_distribution, Analyzer, FockState};
use timebin::bsm::BsmOutcome;
use timebin::states::Basis;
use timebin::Error;

use common::*;

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let lp = random_lp(&mut rng);
        let brute = enumerate_vertices(&lp).expect("instances are feasible by construction");
        let sol = simplex_solve(&lp).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!((sol.objective - brute).abs() < 1e-9, "case {case}: {} vs {brute}", sol.objective);
        assert!(lp.max_violation(&sol.x) < 1e-9);
    }
}

#[test]
fn simplex_reports_infeasible_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut seen = 0;
    for _ in 0..200 {
        let mut lp = random_lp(&mut rng);
        // Demand a row value beyond anything the box allows.
        let n = lp.objective.len();
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let reach: f64 = coeffs.iter().zip(&lp.upper).map(|(a, u)| a * u).sum();
        lp.add_constraint("unreachable", coeffs, reach + 0.1, f64::INFINITY);
        assert!(enumerate_vertices(&lp).is_none());
        match simplex_solve(&lp) {
            Err(Error::Infeasible { violated }) => {
                assert!(!violated.is_empty());
                seen += 1;
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
    assert_eq!(seen, 200);
}

#[test]
fn bounds_bracket_truth_for_random_yields() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let (y, b) = random_yields(&mut rng);
        let gains = exact_gains(&y, &b, &INTENSITIES);
        let y11 = lp_bound_yield(&gains, 7, 0.0).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(y11 <= y[1][1] + 1e-9, "case {case}: {y11} > {}", y[1][1]);
        if y11 > 0.0 {
            let e11 = lp_bound_error(&gains, 7, 0.0, y11).unwrap();
            let truth = if y[1][1] > 0.0 { b[1][1] / y[1][1] } else { 0.0 };
            assert!(e11 >= truth - 1e-9, "case {case}: {e11} < {truth}");
        }
    }
}

/// Gains rounded to integer counts at `cycles` per intensity pair.
fn counted_gains(y: &[Vec<f64>], b: &[Vec<f64>], cycles: u64) -> GainsTable {
    let exact = exact_gains(y, b, &INTENSITIES);
    let entries = exact
        .entries
        .iter()
        .map(|e| {
            let projections = (e.gain * cycles as f64).round() as u64;
            let errors = ((e.error_gain() * cycles as f64).round() as u64).min(projections);
            GainEntry::from_counts(
                e.mu_a,
                e.mu_b,
                GainCounts {
                    cycles,
                    projections,
                    errors,
                },
            )
            .unwrap()
        })
        .collect();
    GainsTable::new(Basis::Z, OutcomeFilter::Combined, entries).unwrap()
}

#[test]
fn larger_confidence_never_tightens() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (y, b) = random_yields(&mut rng);
        let gains = counted_gains(&y, &b, 1_000_000);
        let mut prev: Option<(f64, f64)> = None;
        for sigmas in [1.0, 2.0, 4.0] {
            let d = decoy_bounds(&gains, 7, sigmas, None).unwrap();
            if let Some((py, pe)) = prev {
                assert!(d.y11_lower <= py + 1e-12);
                assert!(d.e11_upper >= pe - 1e-12);
            }
            prev = Some((d.y11_lower, d.e11_upper));
        }
    }
}

#[test]
fn error_free_data_bound_shrinks_with_counts() {
    let y: Vec<Vec<f64>> = (0..=SYNTH_PHOTONS)
        .map(|n| (0..=SYNTH_PHOTONS).map(|m| 1.0 - 0.7f64.powi((n + m) as i32)).collect())
        .collect();
    let b = vec![vec![0.0; SYNTH_PHOTONS + 1]; SYNTH_PHOTONS + 1];
    let mut prev = f64::INFINITY;
    for cycles in [1e5 as u64, 1e7 as u64, 1e9 as u64, 1e11 as u64] {
        let d = decoy_bounds(&counted_gains(&y, &b, cycles), 7, 1.0, None).unwrap();
        assert!(d.e11_upper < prev);
        prev = d.e11_upper;
    }
    assert!(prev < 1e-4, "{prev}");
}

#[test]
fn identical_inputs_give_identical_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (y, b) = random_yields(&mut rng);
    let gains = counted_gains(&y, &b, 10_000_000);
    let a = decoy_bounds(&gains, 7, 1.0, None).unwrap();
    let c = decoy_bounds(&gains, 7, 1.0, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
}

/// Single-photon-pair yield at the analyzer, averaged over the four state
/// pairs of a basis, from photon-number states.
fn single_photon_yield(cfg: &RunConfig, basis: Basis) -> f64 {
    let analyzer = cfg.analyzer();
    let [ta, tb] = cfg.transmissions();
    let mut total = 0.0;
    for a in basis.states() {
        for b in basis.states() {
            let state = FockState::single_photons(a.unit_amplitudes(), b.unit_amplitudes());
            let mut p = 0.0;
            let n = 64;
            for k in 0..n {
                let theta = std::f64::consts::TAU * k as f64 / n as f64;
                let d = fock_distribution(&state, &analyzer, theta).unwrap();
                p += d.outcome_prob(BsmOutcome::PsiMinus) + d.outcome_prob(BsmOutcome::PsiPlus);
            }
            total += p / n as f64;
        }
    }
    ta * tb * total / 4.0
}

#[test]
fn bounds_converge_on_simulator_physics() {
    // Expected counts from the analytic model, 1e9 cycles per intensity pair.
    let cfg = RunConfig::default();
    let per_key = 2.5e8;
    let mut table = CountsTable::new(cfg.digest(), 0);
    for (key, [m, p]) in cfg.analytic_outcomes().unwrap() {
        table.add(
            key,
            Tally {
                n_cycles: per_key as u64,
                n_psiminus: (m * per_key).round() as u64,
                n_psiplus: (p * per_key).round() as u64,
            },
        );
    }
    let report = analyze_counts(&table, 10, 1.0, None).unwrap();
    for basis in Basis::ALL {
        let truth = single_photon_yield(&cfg, basis);
        let bound = report.get(basis, OutcomeFilter::Combined).unwrap().y11_lower;
        assert!(bound <= truth, "{basis}: {bound} > {truth}");
        assert!((truth - bound) / truth < 0.10, "{basis}: gap {}", (truth - bound) / truth);
    }
}

#[test]
fn gains_from_counts_divide_exactly() {
    let mut table = CountsTable::new("d", 0);
    for a in Basis::Z.states() {
        for b in Basis::Z.states() {
            for &ma in &INTENSITIES {
                for &mb in &INTENSITIES {
                    let hits = if a == b { 1 } else { 7 };
                    table.add(
                        timebin::montecarlo::CountKey::new(a, b, ma, mb),
                        Tally {
                            n_cycles: 1000,
                            n_psiminus: if ma == 0.0 && mb == 0.0 { 0 } else { hits },
                            n_psiplus: 0,
                        },
                    );
                }
            }
        }
    }
    let g = assemble_gains(&table, Basis::Z, OutcomeFilter::PsiMinus).unwrap();
    assert_eq!(g.get(0.0, 0.0).unwrap().gain, 0.0);
    let e = g.get(0.11, 0.05).unwrap();
    assert_eq!(e.gain, 16.0 / 4000.0);
    assert_eq!(e.error_rate, 2.0 / 16.0);
    let c = assemble_gains(&table, Basis::Z, OutcomeFilter::PsiPlus).unwrap();
    assert_eq!(c.get(0.11, 0.11).unwrap().gain, 0.0);
}

#[test]
fn poisson_weights_sum_to_one() {
    let w = poisson_weights(0.11, 30);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!((w[1] - 0.11 * (-0.11f64).exp()).abs() < 1e-18);
}

#[test]
fn ideal_detector_analyzer_is_finite() {
    // Guard the oracle helper itself: ideal detectors, lossless channels.
    let mut cfg = RunConfig::default();
    cfg.detectors = Analyzer::ideal().detectors;
    cfg.channels = [timebin::optics::ChannelConfig::lossless(), timebin::optics::ChannelConfig::lossless()];
    cfg.timing.bin_separation_ns = 75.0;
    for basis in Basis::ALL {
        assert!((single_photon_yield(&cfg, basis) - 0.5).abs() < 1e-12);
    }
}
