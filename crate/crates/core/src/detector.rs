//! Superconducting nanowire detector model: efficiency, dark counts and a
//! hard (non-paralyzable) dead-time.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Impedance of the readout coaxial cable.
pub const CABLE_IMPEDANCE_OHM: f64 = 50.0;

/// Calibration constant shared by the two reference detectors (ns per
/// inductance unit per ohm). With it, inductances of 0.3 and 1.0 give 30 ns
/// and 100 ns at 50 ohm.
pub const REFERENCE_KAPPA: f64 = 5000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// System detection efficiency.
    pub eta: f64,
    pub dark_rate_hz: f64,
    /// Effective dead-time used by the simulators.
    pub tau_ns: f64,
    /// Kinetic inductance, arbitrary units.
    pub kinetic_inductance: f64,
    /// 50 ohm cable plus optional series resistor.
    pub load_resistance_ohm: f64,
    pub pileup_floor_ns: f64,
    pub kappa: f64,
}

impl DetectorConfig {
    /// Single-meander detector, 30 ns dead-time on the bare cable.
    pub fn reference_1() -> Self {
        let mut d = Self {
            eta: 0.775,
            dark_rate_hz: 10.0,
            tau_ns: 0.0,
            kinetic_inductance: 0.3,
            load_resistance_ohm: CABLE_IMPEDANCE_OHM,
            pileup_floor_ns: 0.0,
            kappa: REFERENCE_KAPPA,
        };
        d.tau_ns = d.physical_deadtime().expect("valid reference parameters");
        d
    }

    /// Double-meander detector, 100 ns dead-time on the bare cable.
    pub fn reference_2() -> Self {
        let mut d = Self {
            eta: 0.762,
            kinetic_inductance: 1.0,
            ..Self::reference_1()
        };
        d.tau_ns = d.physical_deadtime().expect("valid reference parameters");
        d
    }

    /// Reference detector 2 with a 300 ohm series resistor; pile-up limits
    /// the dead-time to 40 ns.
    pub fn reference_2_loaded() -> Self {
        let mut d = Self {
            load_resistance_ohm: CABLE_IMPEDANCE_OHM + 300.0,
            pileup_floor_ns: 40.0,
            ..Self::reference_2()
        };
        d.tau_ns = d.physical_deadtime().expect("valid reference parameters");
        d
    }

    pub fn physical_deadtime(&self) -> Result<f64> {
        deadtime_from_physics(
            self.kinetic_inductance,
            self.load_resistance_ohm,
            self.kappa,
            self.pileup_floor_ns,
        )
    }

    /// Dark-click probability within `window_ns`.
    pub fn dark_prob(&self, window_ns: f64) -> Result<f64> {
        dark_click_prob(self.dark_rate_hz, window_ns)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(config(field("eta"), "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("dark_rate_hz", self.dark_rate_hz),
            ("tau_ns", self.tau_ns),
            ("pileup_floor_ns", self.pileup_floor_ns),
            ("kinetic_inductance", self.kinetic_inductance),
            ("kappa", self.kappa),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config(field(name), "must be finite and >= 0"));
            }
        }
        if !(self.load_resistance_ohm >= CABLE_IMPEDANCE_OHM) {
            return Err(config(field("load_resistance_ohm"), "must be >= 50 (cable impedance)"));
        }
        Ok(())
    }
}

/// Dead-time from the `L_k / R_l` scaling, clipped below by the pile-up floor.
pub fn deadtime_from_physics(
    kinetic_inductance: f64,
    load_resistance_ohm: f64,
    kappa: f64,
    pileup_floor_ns: f64,
) -> Result<f64> {
    if !(load_resistance_ohm > 0.0) {
        return Err(domain(format!(
            "load resistance must be > 0 ohm, got {load_resistance_ohm}"
        )));
    }
    Ok((kappa * kinetic_inductance / load_resistance_ohm).max(pileup_floor_ns))
}

/// Fits `kappa` so that a detector with the given inductance shows `tau_ns`
/// at `load_resistance_ohm`.
pub fn calibrate_kappa(kinetic_inductance: f64, load_resistance_ohm: f64, tau_ns: f64) -> Result<f64> {
    if !(kinetic_inductance > 0.0) {
        return Err(domain("kinetic inductance must be > 0 for calibration"));
    }
    Ok(tau_ns * load_resistance_ohm / kinetic_inductance)
}

pub fn dark_click_prob(dark_rate_hz: f64, window_ns: f64) -> Result<f64> {
    if !(dark_rate_hz >= 0.0 && window_ns >= 0.0) {
        return Err(domain("dark rate and window must be >= 0"));
    }
    Ok(-(-dark_rate_hz * window_ns * 1e-9).exp_m1())
}

/// Streaming non-paralyzable dead-time: suppressed events do not extend
/// the blind interval, which includes its end point.
#[derive(Clone, Copy, Debug)]
pub struct DeadTimeFilter {
    tau_ns: f64,
    last_accepted: Option<f64>,
}

impl DeadTimeFilter {
    pub fn new(tau_ns: f64) -> Self {
        Self {
            tau_ns,
            last_accepted: None,
        }
    }

    /// Offers an event at `t_ns`; returns whether the detector registers it.
    #[inline]
    pub fn accept(&mut self, t_ns: f64) -> bool {
        match self.last_accepted {
            Some(last) if t_ns - last <= self.tau_ns && self.tau_ns > 0.0 => false,
            _ => {
                self.last_accepted = Some(t_ns);
                true
            }
        }
    }

    pub fn reset(&mut self) {
        self.last_accepted = None;
    }
}

/// Greedy dead-time filter over a sorted timestamp list.
pub fn apply_deadtime(timestamps: &[f64], tau_ns: f64) -> Result<Vec<f64>> {
    if let Some(i) = timestamps.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(Error::Precondition(format!(
            "timestamps not sorted ascending at index {}",
            i + 1
        )));
    }
    let mut filter = DeadTimeFilter::new(tau_ns);
    Ok(timestamps.iter().copied().filter(|&t| filter.accept(t)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ns: f64,
    pub counts: Vec<u64>,
    /// Detections surviving the dead-time filter.
    pub detections: u64,
    pub warnings: Vec<String>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_ns
    }

    pub fn first_nonzero_bin(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c > 0)
    }

    /// `bin_start_ns,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_ns,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.bin_start(i), c);
        }
        out
    }
}

const MIN_HISTOGRAM_DETECTIONS: u64 = 10_000;

/// Inter-arrival histogram of a dead-time filtered Poisson detection stream.
pub fn interarrival_histogram(
    rate_hz: f64,
    tau_ns: f64,
    duration_s: f64,
    bin_width_ns: f64,
    seed: u64,
) -> Result<Histogram> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(domain(format!("rate must be > 0, got {rate_hz}")));
    }
    if !(tau_ns >= 0.0 && duration_s > 0.0 && bin_width_ns > 0.0) {
        return Err(domain("tau must be >= 0, duration and bin width > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Exp::new(rate_hz * 1e-9).map_err(|e| domain(e.to_string()))?;
    let end_ns = duration_s * 1e9;
    let mut filter = DeadTimeFilter::new(tau_ns);
    let mut counts: Vec<u64> = Vec::new();
    let mut detections = 0u64;
    let mut previous: Option<f64> = None;
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= end_ns {
            break;
        }
        if !filter.accept(t) {
            continue;
        }
        detections += 1;
        if let Some(p) = previous {
            let bin = ((t - p) / bin_width_ns) as usize;
            if bin >= counts.len() {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
        previous = Some(t);
    }
    let mut warnings = Vec::new();
    if detections < MIN_HISTOGRAM_DETECTIONS {
        warnings.push(format!(
            "only {detections} detections recorded; at least {MIN_HISTOGRAM_DETECTIONS} recommended"
        ));
    }
    Ok(Histogram {
        bin_width_ns,
        counts,
        detections,
        warnings,
    })
}
