//! Time-bin qubit states carried by weak coherent pulses.
//!
//! A state is a pair of coherent amplitudes, one per temporal mode. The
//! squared modulus of each amplitude is the mean photon number in that bin.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn states(self) -> [Qubit; 2] {
        match self {
            Basis::Z => [Qubit::Zero, Qubit::One],
            Basis::X => [Qubit::Plus, Qubit::Minus],
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "z",
            Basis::X => "x",
        })
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "z" | "Z" => Ok(Basis::Z),
            "x" | "X" => Ok(Basis::X),
            other => Err(format!("unknown basis `{other}` (expected z or x)")),
        }
    }
}

/// The four BB84-style time-bin qubit states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Qubit {
    /// Early bin.
    #[serde(rename = "0")]
    Zero,
    /// Late bin.
    #[serde(rename = "1")]
    One,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Qubit {
    pub const ALL: [Qubit; 4] = [Qubit::Zero, Qubit::One, Qubit::Plus, Qubit::Minus];

    pub fn basis(self) -> Basis {
        match self {
            Qubit::Zero | Qubit::One => Basis::Z,
            Qubit::Plus | Qubit::Minus => Basis::X,
        }
    }

    /// Normalized single-photon amplitudes `(early, late)`.
    pub fn unit_amplitudes(self) -> (Complex64, Complex64) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Qubit::Zero => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Qubit::One => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Qubit::Plus => (Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
            Qubit::Minus => (Complex64::new(h, 0.0), Complex64::new(-h, 0.0)),
        }
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qubit::Zero => "0",
            Qubit::One => "1",
            Qubit::Plus => "+",
            Qubit::Minus => "-",
        })
    }
}

impl FromStr for Qubit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "0" => Ok(Qubit::Zero),
            "1" => Ok(Qubit::One),
            "+" => Ok(Qubit::Plus),
            "-" => Ok(Qubit::Minus),
            other => Err(format!("unknown qubit state `{other}` (expected 0, 1, + or -)")),
        }
    }
}

/// Coherent amplitudes of the early and late temporal modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBinState {
    pub amp_early: Complex64,
    pub amp_late: Complex64,
    pub label: Option<Qubit>,
}

impl TimeBinState {
    pub const VACUUM: TimeBinState = TimeBinState {
        amp_early: Complex64::new(0.0, 0.0),
        amp_late: Complex64::new(0.0, 0.0),
        label: None,
    };

    pub fn new(amp_early: Complex64, amp_late: Complex64) -> Self {
        Self {
            amp_early,
            amp_late,
            label: None,
        }
    }

    pub fn intensity_early(&self) -> f64 {
        self.amp_early.norm_sqr()
    }

    pub fn intensity_late(&self) -> f64 {
        self.amp_late.norm_sqr()
    }

    /// Mean photon number summed over both bins.
    pub fn intensity(&self) -> f64 {
        self.intensity_early() + self.intensity_late()
    }
}

/// Prepares `qubit` in a coherent pulse pair of mean photon number `mu`.
pub fn prepare(qubit: Qubit, mu: f64, global_phase: f64) -> Result<TimeBinState> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(domain(format!("mean photon number must be finite and >= 0, got {mu}")));
    }
    if !global_phase.is_finite() {
        return Err(domain("global phase must be finite"));
    }
    let scale = Complex64::from_polar(mu.sqrt(), global_phase);
    let (e, l) = qubit.unit_amplitudes();
    Ok(TimeBinState {
        amp_early: e * scale,
        amp_late: l * scale,
        label: Some(qubit),
    })
}

/// Adds intensity-modulator leakage into every nominally empty bin.
///
/// Leakage is coherent with the pulse: it carries the phase of the occupied
/// bin. Bins that already carry light are left untouched.
pub fn apply_extinction(state: &TimeBinState, extinction_db: f64, mu: f64) -> Result<TimeBinState> {
    if !(extinction_db > 0.0) {
        return Err(domain(format!("extinction ratio must be > 0 dB, got {extinction_db}")));
    }
    let leak = mu * 10f64.powf(-extinction_db / 10.0);
    if leak == 0.0 {
        return Ok(*state);
    }
    let (empty_early, empty_late) = match state.label {
        Some(Qubit::Zero) => (false, true),
        Some(Qubit::One) => (true, false),
        Some(Qubit::Plus | Qubit::Minus) => (false, false),
        None => (state.amp_early == Complex64::ZERO, state.amp_late == Complex64::ZERO),
    };
    let phase = if state.amp_early != Complex64::ZERO {
        state.amp_early.arg()
    } else {
        state.amp_late.arg()
    };
    let leak_amp = Complex64::from_polar(leak.sqrt(), phase);
    let mut out = *state;
    if empty_early {
        out.amp_early = leak_amp;
    }
    if empty_late {
        out.amp_late = leak_amp;
    }
    Ok(out)
}

/// Rotates the late-bin amplitude by `delta_phi`.
pub fn apply_prep_phase_error(state: &TimeBinState, delta_phi: f64) -> TimeBinState {
    TimeBinState {
        amp_late: state.amp_late * Complex64::from_polar(1.0, delta_phi),
        ..*state
    }
}

/// Intensity levels and imperfections of one transmitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Mean photon numbers, signal first, vacuum last.
    pub intensities: Vec<f64>,
    pub extinction_db: f64,
    /// Phase error applied to the late bin of `|->` preparations.
    #[serde(default)]
    pub prep_phase_error_rad: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            intensities: vec![0.11, 0.05, 0.0],
            extinction_db: 50.0,
            prep_phase_error_rad: 0.0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        let levels = &self.intensities;
        if levels.is_empty() {
            return Err(config(field("intensities"), "must not be empty"));
        }
        if levels.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(config(field("intensities"), "all intensities must be finite and >= 0"));
        }
        if levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(config(field("intensities"), "must be strictly decreasing"));
        }
        if *levels.last().unwrap() != 0.0 {
            return Err(config(field("intensities"), "last intensity must be the vacuum (0)"));
        }
        if !(self.extinction_db > 0.0) {
            return Err(config(field("extinction_db"), "must be > 0"));
        }
        if !self.prep_phase_error_rad.is_finite() {
            return Err(config(field("prep_phase_error_rad"), "must be finite"));
        }
        Ok(())
    }

    /// Prepared pulse including extinction leakage and the `|->` phase error.
    pub fn emit(&self, qubit: Qubit, mu: f64) -> Result<TimeBinState> {
        let state = prepare(qubit, mu, 0.0)?;
        let state = apply_extinction(&state, self.extinction_db, mu)?;
        Ok(if qubit == Qubit::Minus {
            apply_prep_phase_error(&state, self.prep_phase_error_rad)
        } else {
            state
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn prepare_z_zero() {
        let s = prepare(Qubit::Zero, 0.11, 0.0).unwrap();
        assert!(close(s.amp_early, Complex64::new(0.11f64.sqrt(), 0.0)));
        assert!(close(s.amp_late, Complex64::ZERO));
    }

    #[test]
    fn prepare_x_states() {
        let mu = 0.3;
        let p = prepare(Qubit::Plus, mu, 0.0).unwrap();
        let r = (mu / 2.0).sqrt();
        assert!(close(p.amp_early, Complex64::new(r, 0.0)));
        assert!(close(p.amp_late, Complex64::new(r, 0.0)));

        let m = prepare(Qubit::Minus, 0.2, 0.0).unwrap();
        assert!(close(m.amp_early, Complex64::new(0.1f64.sqrt(), 0.0)));
        assert!(close(m.amp_late, Complex64::new(-(0.1f64.sqrt()), 0.0)));
    }

    #[test]
    fn prepare_vacuum_any_phase() {
        let s = prepare(Qubit::Zero, 0.0, 1.234).unwrap();
        assert_eq!(s.intensity(), 0.0);
    }

    #[test]
    fn prepare_rejects_negative_mu() {
        assert!(matches!(prepare(Qubit::One, -0.1, 0.0), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn extinction_leaks_into_empty_bin() {
        let s = prepare(Qubit::Zero, 0.11, 0.0).unwrap();
        let l = apply_extinction(&s, 50.0, 0.11).unwrap();
        assert_eq!(l.amp_early, s.amp_early);
        assert!((l.intensity_late() - 1.1e-6).abs() < 1e-18);
        assert!(close(l.amp_late, Complex64::new(1.1e-6f64.sqrt(), 0.0)));
    }

    #[test]
    fn extinction_carries_source_phase() {
        let s = prepare(Qubit::One, 0.05, 0.7).unwrap();
        let l = apply_extinction(&s, 30.0, 0.05).unwrap();
        assert!((l.amp_early.arg() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn perfect_extinction_and_vacuum() {
        let s = prepare(Qubit::Zero, 0.11, 0.0).unwrap();
        assert_eq!(apply_extinction(&s, f64::INFINITY, 0.11).unwrap(), s);
        assert_eq!(
            apply_extinction(&TimeBinState::VACUUM, 50.0, 0.0).unwrap(),
            TimeBinState::VACUUM
        );
        assert!(apply_extinction(&s, 0.0, 0.11).is_err());
    }

    #[test]
    fn phase_error_pi_turns_plus_into_minus() {
        let p = prepare(Qubit::Plus, 0.2, 0.0).unwrap();
        let m = apply_prep_phase_error(&p, PI);
        assert!(close(m.amp_early, Complex64::new(0.1f64.sqrt(), 0.0)));
        assert!(close(m.amp_late, Complex64::new(-(0.1f64.sqrt()), 0.0)));
        assert_eq!(apply_prep_phase_error(&p, 0.0), p);
    }

    #[test]
    fn source_config_validation() {
        assert!(SourceConfig::default().validate("source").is_ok());
        let bad = SourceConfig {
            intensities: vec![0.05, 0.11, 0.0],
            ..Default::default()
        };
        assert!(bad.validate("source").is_err());
        let no_vac = SourceConfig {
            intensities: vec![0.11, 0.05],
            ..Default::default()
        };
        assert!(no_vac.validate("source").is_err());
    }

    fn qubit() -> impl Strategy<Value = Qubit> {
        prop::sample::select(Qubit::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn prepare_normalization(q in qubit(), mu in 0.0f64..10.0, phi in -10.0f64..10.0) {
            let s = prepare(q, mu, phi).unwrap();
            prop_assert!((s.intensity() - mu).abs() < 1e-12);
        }

        #[test]
        fn phase_error_preserves_bin_intensities(
            re in -1.0f64..1.0, im in -1.0f64..1.0, re2 in -1.0f64..1.0, im2 in -1.0f64..1.0,
            dphi in -7.0f64..7.0,
        ) {
            let s = TimeBinState::new(Complex64::new(re, im), Complex64::new(re2, im2));
            let t = apply_prep_phase_error(&s, dphi);
            prop_assert_eq!(t.amp_early, s.amp_early);
            prop_assert!((t.intensity_late() - s.intensity_late()).abs() < 1e-15);
            prop_assert!((t.intensity() - s.intensity()).abs() < 1e-15);
        }

        #[test]
        fn extinction_never_decreases_or_alters_lit_bins(
            q in qubit(), mu in 0.0f64..1.0, db in 1.0f64..80.0,
        ) {
            let s = prepare(q, mu, 0.0).unwrap();
            let l = apply_extinction(&s, db, mu).unwrap();
            prop_assert!(l.intensity_early() >= s.intensity_early());
            prop_assert!(l.intensity_late() >= s.intensity_late());
            if s.intensity_early() > 0.0 { prop_assert_eq!(l.amp_early, s.amp_early); }
            if s.intensity_late() > 0.0 { prop_assert_eq!(l.amp_late, s.amp_late); }
        }
    }
}
