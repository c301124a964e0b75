//! Channel loss, the 50/50 beam splitter and exact click-pattern
//! distributions for coherent pulse pairs on threshold detectors.
//!
//! Detector 1 watches the output port `c = (a + b e^{iθ})/√2`, detector 2
//! the port `d = (a − b e^{iθ})/√2`. Coherent inputs stay coherent through
//! the splitter, so the four (detector, bin) slots click independently
//! except for the dead-time coupling between the early and late bins of one
//! detector.

mod fock;

pub use fock::{fock_distribution, fock_pattern_oracle, FockState, FOCK_TAIL_TOLERANCE};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bsm::{classify, BsmOutcome, ClickPattern};
use crate::detector::DetectorConfig;
use crate::error::{config, domain, Result};
use crate::states::TimeBinState;

pub const DEFAULT_PHASE_POINTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub length_km: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    #[serde(default)]
    pub extra_loss_db: f64,
}

fn default_attenuation() -> f64 {
    0.2
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            length_km: 20.0,
            attenuation_db_per_km: default_attenuation(),
            extra_loss_db: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn lossless() -> Self {
        Self {
            length_km: 0.0,
            attenuation_db_per_km: 0.0,
            extra_loss_db: 0.0,
        }
    }

    pub fn loss_db(&self) -> f64 {
        self.length_km * self.attenuation_db_per_km + self.extra_loss_db
    }

    /// Power transmission `10^(-loss/10)`.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.loss_db() / 10.0)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("length_km", self.length_km),
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("extra_loss_db", self.extra_loss_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config(format!("{prefix}.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

pub fn attenuate(state: &TimeBinState, channel: &ChannelConfig) -> TimeBinState {
    let s = channel.transmission().sqrt();
    TimeBinState {
        amp_early: state.amp_early * s,
        amp_late: state.amp_late * s,
        label: state.label,
    }
}

/// Per-bin 50/50 beam splitter with relative phase `theta` on input `b`.
pub fn beamsplit(a: &TimeBinState, b: &TimeBinState, theta: f64) -> (TimeBinState, TimeBinState) {
    let rot = Complex64::from_polar(1.0, theta);
    let be = b.amp_early * rot;
    let bl = b.amp_late * rot;
    let c = TimeBinState::new((a.amp_early + be) * FRAC_1_SQRT_2, (a.amp_late + bl) * FRAC_1_SQRT_2);
    let d = TimeBinState::new((a.amp_early - be) * FRAC_1_SQRT_2, (a.amp_late - bl) * FRAC_1_SQRT_2);
    (c, d)
}

/// Threshold-detector click probability for coherent light of mean
/// photon number `lambda`.
pub fn click_prob(lambda: f64, eta: f64, p_dark: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(domain(format!("mean photon number must be >= 0, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&p_dark) {
        return Err(domain("efficiency and dark probability must lie in [0, 1]"));
    }
    Ok(click_prob_unchecked(lambda, eta, p_dark))
}

#[inline]
pub(crate) fn click_prob_unchecked(lambda: f64, eta: f64, p_dark: f64) -> f64 {
    1.0 - (1.0 - p_dark) * (-eta * lambda).exp()
}

/// Detector pair plus the timing that couples their bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Analyzer {
    pub detectors: [DetectorConfig; 2],
    pub bin_separation_ns: f64,
    /// Integration window per bin for dark counts.
    pub dark_window_ns: f64,
}

impl Analyzer {
    pub fn new(detectors: [DetectorConfig; 2], bin_separation_ns: f64, dark_window_ns: f64) -> Self {
        Self {
            detectors,
            bin_separation_ns,
            dark_window_ns,
        }
    }

    /// Unit-efficiency, dark-free, fast detectors.
    pub fn ideal() -> Self {
        let d = DetectorConfig {
            eta: 1.0,
            dark_rate_hz: 0.0,
            tau_ns: 0.0,
            ..DetectorConfig::reference_1()
        };
        Self::new([d.clone(), d], 75.0, 0.5)
    }

    pub fn with_efficiencies(eta1: f64, eta2: f64) -> Self {
        let mut a = Self::ideal();
        a.detectors[0].eta = eta1;
        a.detectors[1].eta = eta2;
        a
    }

    pub fn dark_prob(&self, k: usize) -> Result<f64> {
        self.detectors[k].dark_prob(self.dark_window_ns)
    }

    /// Whether detector `k` is still blind in the late bin after an early click.
    pub fn blocks_late(&self, k: usize) -> bool {
        self.detectors[k].tau_ns >= self.bin_separation_ns
    }
}

/// Probabilities of the 16 click patterns, indexed by [`ClickPattern::index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternDistribution(pub [f64; 16]);

impl PatternDistribution {
    pub fn prob(&self, p: ClickPattern) -> f64 {
        self.0[p.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn outcome_prob(&self, outcome: BsmOutcome) -> f64 {
        ClickPattern::all()
            .filter(|p| classify(*p) == outcome)
            .map(|p| self.prob(p))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &PatternDistribution) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Joint distribution from per-slot click probabilities of each detector.
    pub(crate) fn from_detector_pairs(det: [[[f64; 2]; 2]; 2]) -> Self {
        let mut out = [0.0; 16];
        for (i, v) in out.iter_mut().enumerate() {
            let p = ClickPattern::from_index(i);
            *v = det[0][p.d1_early as usize][p.d1_late as usize]
                * det[1][p.d2_early as usize][p.d2_late as usize];
        }
        Self(out)
    }
}

/// Joint early/late click table `[early][late]` for one detector.
pub(crate) fn detector_joint(p_early: f64, p_late: f64, blocks_late: bool) -> [[f64; 2]; 2] {
    if blocks_late {
        [[(1.0 - p_early) * (1.0 - p_late), (1.0 - p_early) * p_late], [p_early, 0.0]]
    } else {
        [
            [(1.0 - p_early) * (1.0 - p_late), (1.0 - p_early) * p_late],
            [p_early * (1.0 - p_late), p_early * p_late],
        ]
    }
}

/// Exact click-pattern distribution at a fixed relative phase.
pub fn pattern_distribution(
    a: &TimeBinState,
    b: &TimeBinState,
    analyzer: &Analyzer,
    theta: f64,
) -> Result<PatternDistribution> {
    let (c, d) = beamsplit(a, b, theta);
    let mut det = [[[0.0; 2]; 2]; 2];
    for (k, out) in [c, d].iter().enumerate() {
        let eta = analyzer.detectors[k].eta;
        let dark = analyzer.dark_prob(k)?;
        let pe = click_prob(out.intensity_early(), eta, dark)?;
        let pl = click_prob(out.intensity_late(), eta, dark)?;
        det[k] = detector_joint(pe, pl, analyzer.blocks_late(k));
    }
    Ok(PatternDistribution::from_detector_pairs(det))
}

/// Uniform trapezoidal average of [`pattern_distribution`] over the
/// relative phase.
pub fn phase_average(
    a: &TimeBinState,
    b: &TimeBinState,
    analyzer: &Analyzer,
    n_points: usize,
) -> Result<PatternDistribution> {
    if n_points < 8 {
        return Err(domain(format!("phase averaging needs >= 8 points, got {n_points}")));
    }
    let mut acc = [0.0; 16];
    for j in 0..n_points {
        let theta = 2.0 * PI * j as f64 / n_points as f64;
        let dist = pattern_distribution(a, b, analyzer, theta)?;
        for (s, p) in acc.iter_mut().zip(dist.0) {
            *s += p;
        }
    }
    for s in &mut acc {
        *s /= n_points as f64;
    }
    Ok(PatternDistribution(acc))
}
