//! Per-clock-cycle stochastic simulation of source, channel, beam splitter,
//! detectors and classifier.
//!
//! # Random streams
//!
//! Cycles are grouped into blocks of [`BLOCK_CYCLES`]. Block `k` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `k`, and consumes
//! exactly six uniforms per cycle in the order schedule entry, phase,
//! detector-1 early, detector-1 late, detector-2 early, detector-2 late.
//! Both detectors start each block recovered; within a block the dead-time
//! filter runs over absolute timestamps `cycle / rep_rate + bin offset`, so
//! late-to-next-early suppression is kept. Any partition of the block range
//! therefore reproduces the serial run exactly.

mod counts;

pub use counts::{CountKey, CountsMetadata, CountsTable, Tally, CSV_HEADER};

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsm::{BsmOutcome, OUTCOME_TABLE};
use crate::detector::{DeadTimeFilter, DetectorConfig};
use crate::error::{config, Result};
use crate::optics::{attenuate, phase_average, Analyzer, ChannelConfig, DEFAULT_PHASE_POINTS};
use crate::states::{Basis, Qubit, SourceConfig, TimeBinState};

pub const BLOCK_CYCLES: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub rep_rate_hz: f64,
    pub bin_separation_ns: f64,
    pub pulse_width_ns: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 5e6,
            bin_separation_ns: 75.0,
            pulse_width_ns: 0.5,
        }
    }
}

impl TimingConfig {
    pub fn period_ns(&self) -> f64 {
        1e9 / self.rep_rate_hz
    }

    fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return Err(config("timing.rep_rate_hz", "must be > 0"));
        }
        if !(self.bin_separation_ns > 0.0 && self.bin_separation_ns < self.period_ns()) {
            return Err(config("timing.bin_separation_ns", "must be > 0 and below the clock period"));
        }
        if !(self.pulse_width_ns > 0.0 && self.pulse_width_ns < self.bin_separation_ns) {
            return Err(config("timing.pulse_width_ns", "must be > 0 and below the bin separation"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhaseMode {
    /// Fresh uniform relative phase every cycle.
    Random,
    Fixed { theta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub state_a: Qubit,
    pub state_b: Qubit,
    pub mu_a: f64,
    pub mu_b: f64,
    pub weight: f64,
}

impl ScheduleEntry {
    pub fn key(&self) -> CountKey {
        CountKey::new(self.state_a, self.state_b, self.mu_a, self.mu_b)
    }
}

/// Uniform schedule over same-basis state pairs and all intensity pairs.
pub fn default_schedule(alice: &SourceConfig, bob: &SourceConfig) -> Vec<ScheduleEntry> {
    let mut out = Vec::new();
    for basis in Basis::ALL {
        for qa in basis.states() {
            for qb in basis.states() {
                for &mu_a in &alice.intensities {
                    for &mu_b in &bob.intensities {
                        out.push(ScheduleEntry {
                            state_a: qa,
                            state_b: qb,
                            mu_a,
                            mu_b,
                            weight: 0.0,
                        });
                    }
                }
            }
        }
    }
    let w = 1.0 / out.len() as f64;
    for e in &mut out {
        e.weight = w;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cycles: u64,
    pub seed: u64,
    /// Alice, Bob.
    pub sources: [SourceConfig; 2],
    pub channels: [ChannelConfig; 2],
    pub detectors: [DetectorConfig; 2],
    #[serde(default)]
    pub timing: TimingConfig,
    /// `None` selects [`default_schedule`].
    #[serde(default)]
    pub schedule: Option<Vec<ScheduleEntry>>,
    #[serde(default = "default_phase_mode")]
    pub phase_mode: PhaseMode,
}

fn default_phase_mode() -> PhaseMode {
    PhaseMode::Random
}

impl Default for RunConfig {
    /// 20 km per arm, detectors at 30 ns and 40 ns dead-time.
    fn default() -> Self {
        Self {
            cycles: 1_000_000,
            seed: 1,
            sources: [SourceConfig::default(), SourceConfig::default()],
            channels: [ChannelConfig::default(), ChannelConfig::default()],
            detectors: [DetectorConfig::reference_1(), DetectorConfig::reference_2_loaded()],
            timing: TimingConfig::default(),
            schedule: None,
            phase_mode: PhaseMode::Random,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(config("cycles", "must be > 0"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            s.validate(&format!("sources.{i}"))?;
        }
        for (i, c) in self.channels.iter().enumerate() {
            c.validate(&format!("channels.{i}"))?;
        }
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate(&format!("detectors.{i}"))?;
        }
        self.timing.validate()?;
        if let PhaseMode::Fixed { theta } = self.phase_mode {
            if !theta.is_finite() {
                return Err(config("phase_mode.theta", "must be finite"));
            }
        }
        let schedule = self.resolved_schedule();
        if schedule.is_empty() {
            return Err(config("schedule", "must not be empty"));
        }
        for (i, e) in schedule.iter().enumerate() {
            if e.state_a.basis() != e.state_b.basis() {
                return Err(config(format!("schedule.{i}"), "states must share a basis"));
            }
            if !(e.mu_a >= 0.0 && e.mu_b >= 0.0 && e.mu_a.is_finite() && e.mu_b.is_finite()) {
                return Err(config(format!("schedule.{i}"), "intensities must be finite and >= 0"));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(config(format!("schedule.{i}.weight"), "must be finite and >= 0"));
            }
        }
        let total: f64 = schedule.iter().map(|e| e.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config("schedule", format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn resolved_schedule(&self) -> Vec<ScheduleEntry> {
        self.schedule
            .clone()
            .unwrap_or_else(|| default_schedule(&self.sources[0], &self.sources[1]))
    }

    pub fn analyzer(&self) -> Analyzer {
        Analyzer::new(
            self.detectors.clone(),
            self.timing.bin_separation_ns,
            self.timing.pulse_width_ns,
        )
    }

    pub fn transmissions(&self) -> [f64; 2] {
        [self.channels[0].transmission(), self.channels[1].transmission()]
    }

    /// SHA-256 over the canonical JSON of the physics configuration: keys
    /// sorted, the schedule expanded, `seed` and `cycles` removed.
    pub fn digest(&self) -> String {
        let mut resolved = self.clone();
        resolved.schedule = Some(self.resolved_schedule());
        let mut value = serde_json::to_value(&resolved).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
            obj.remove("cycles");
        }
        let canonical = serde_json::to_string(&value).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// States arriving at the beam splitter for each schedule entry.
    pub fn arriving_states(&self) -> Result<Vec<(CountKey, TimeBinState, TimeBinState)>> {
        self.resolved_schedule()
            .iter()
            .map(|e| {
                let a = attenuate(&self.sources[0].emit(e.state_a, e.mu_a)?, &self.channels[0]);
                let b = attenuate(&self.sources[1].emit(e.state_b, e.mu_b)?, &self.channels[1]);
                Ok((e.key(), a, b))
            })
            .collect()
    }

    /// Phase-averaged `(ψ⁻, ψ⁺)` probabilities per schedule entry from the
    /// analytic model.
    pub fn analytic_outcomes(&self) -> Result<Vec<(CountKey, [f64; 2])>> {
        let analyzer = self.analyzer();
        self.arriving_states()?
            .into_iter()
            .map(|(k, a, b)| {
                let d = match self.phase_mode {
                    PhaseMode::Random => phase_average(&a, &b, &analyzer, DEFAULT_PHASE_POINTS)?,
                    PhaseMode::Fixed { theta } => crate::optics::pattern_distribution(&a, &b, &analyzer, theta)?,
                };
                Ok((k, [d.outcome_prob(BsmOutcome::PsiMinus), d.outcome_prob(BsmOutcome::PsiPlus)]))
            })
            .collect()
    }
}

/// Per-entry quantities fixed for the whole run.
#[derive(Clone, Copy)]
struct Prepared {
    /// `(|a|² + |b|²)/2` per bin.
    mean: [f64; 2],
    /// `conj(a)·b` per bin; the interference term is `Re(w e^{iθ})`.
    cross: [Complex64; 2],
}

struct Engine {
    prepared: Vec<Prepared>,
    cumulative: Vec<f64>,
    eta: [f64; 2],
    survive_dark: [f64; 2],
    tau_ns: [f64; 2],
    period_ns: f64,
    t0_ns: f64,
    fixed_theta: Option<f64>,
}

impl Engine {
    fn new(config: &RunConfig) -> Result<Self> {
        let schedule = config.resolved_schedule();
        let arriving = config.arriving_states()?;
        let prepared = arriving
            .iter()
            .map(|(_, a, b)| Prepared {
                mean: [
                    0.5 * (a.intensity_early() + b.intensity_early()),
                    0.5 * (a.intensity_late() + b.intensity_late()),
                ],
                cross: [a.amp_early.conj() * b.amp_early, a.amp_late.conj() * b.amp_late],
            })
            .collect();
        let total: f64 = schedule.iter().map(|e| e.weight).sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = schedule
            .iter()
            .map(|e| {
                acc += e.weight / total;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        let analyzer = config.analyzer();
        Ok(Self {
            prepared,
            cumulative,
            eta: [config.detectors[0].eta, config.detectors[1].eta],
            survive_dark: [1.0 - analyzer.dark_prob(0)?, 1.0 - analyzer.dark_prob(1)?],
            tau_ns: [config.detectors[0].tau_ns, config.detectors[1].tau_ns],
            period_ns: config.timing.period_ns(),
            t0_ns: config.timing.bin_separation_ns,
            fixed_theta: match config.phase_mode {
                PhaseMode::Random => None,
                PhaseMode::Fixed { theta } => Some(theta),
            },
        })
    }

    /// Simulates cycles `[start, end)` of block `block`, adding
    /// `[cycles, ψ⁻, ψ⁺]` per schedule entry into `tally`.
    fn run_block(&self, seed: u64, block: u64, start: u64, end: u64, tally: &mut [[u64; 3]]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let mut filters = [DeadTimeFilter::new(self.tau_ns[0]), DeadTimeFilter::new(self.tau_ns[1])];
        for cycle in start..end {
            let u_entry: f64 = rng.random();
            let u_theta: f64 = rng.random();
            let u: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];

            let idx = self.cumulative.partition_point(|&c| c <= u_entry);
            let prep = &self.prepared[idx];
            let theta = self.fixed_theta.unwrap_or(u_theta * TAU);
            let (sin, cos) = theta.sin_cos();

            let t_early = cycle as f64 * self.period_ns;
            let t_late = t_early + self.t0_ns;
            let mut pattern = 0usize;
            for bin in 0..2 {
                let w = prep.cross[bin];
                let interference = w.re * cos - w.im * sin;
                let lambda = [prep.mean[bin] + interference, prep.mean[bin] - interference];
                let t = if bin == 0 { t_early } else { t_late };
                for det in 0..2 {
                    let p = 1.0 - self.survive_dark[det] * (-self.eta[det] * lambda[det].max(0.0)).exp();
                    if u[2 * det + bin] < p && filters[det].accept(t) {
                        pattern |= 1 << (2 * det + bin);
                    }
                }
            }
            let row = &mut tally[idx];
            row[0] += 1;
            match OUTCOME_TABLE[pattern] {
                BsmOutcome::PsiMinus => row[1] += 1,
                BsmOutcome::PsiPlus => row[2] += 1,
                BsmOutcome::NoProjection => {}
            }
        }
    }

    fn blocks(cycles: u64) -> impl Iterator<Item = (u64, u64, u64)> + Clone {
        let n_blocks = cycles.div_ceil(BLOCK_CYCLES);
        (0..n_blocks).map(move |b| {
            let start = b * BLOCK_CYCLES;
            (b, start, (start + BLOCK_CYCLES).min(cycles))
        })
    }

    fn build_table(&self, config: &RunConfig, tally: &[[u64; 3]]) -> CountsTable {
        let mut table = CountsTable::new(config.digest(), config.seed);
        for (entry, row) in config.resolved_schedule().iter().zip(tally) {
            if row[0] == 0 {
                continue;
            }
            table.add(
                entry.key(),
                Tally {
                    n_cycles: row[0],
                    n_psiminus: row[1],
                    n_psiplus: row[2],
                },
            );
        }
        table
    }
}

/// Single-threaded run over all blocks in order.
pub fn run(config: &RunConfig) -> Result<CountsTable> {
    config.validate()?;
    let engine = Engine::new(config)?;
    let mut tally = vec![[0u64; 3]; engine.prepared.len()];
    for (b, start, end) in Engine::blocks(config.cycles) {
        engine.run_block(config.seed, b, start, end, &mut tally);
    }
    Ok(engine.build_table(config, &tally))
}

/// Runs blocks across the rayon pool; identical to [`run`] for any pool size.
pub fn run_parallel(config: &RunConfig) -> Result<CountsTable> {
    config.validate()?;
    let engine = Engine::new(config)?;
    let n = engine.prepared.len();
    let blocks: Vec<_> = Engine::blocks(config.cycles).collect();
    let tally = blocks
        .par_iter()
        .fold(
            || vec![[0u64; 3]; n],
            |mut acc, &(b, start, end)| {
                engine.run_block(config.seed, b, start, end, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![[0u64; 3]; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for i in 0..3 {
                        x[i] += y[i];
                    }
                }
                a
            },
        );
    Ok(engine.build_table(config, &tally))
}

/// Runs cycles `[start_block * BLOCK_CYCLES, ...)` covering `n_blocks`
/// blocks of the canonical stream, clipped to `config.cycles`. Merging the
/// partitions of a block range gives the full run.
pub fn run_partition(config: &RunConfig, start_block: u64, n_blocks: u64) -> Result<CountsTable> {
    config.validate()?;
    let engine = Engine::new(config)?;
    let mut tally = vec![[0u64; 3]; engine.prepared.len()];
    for (b, start, end) in Engine::blocks(config.cycles).skip(start_block as usize).take(n_blocks as usize) {
        engine.run_block(config.seed, b, start, end, &mut tally);
    }
    Ok(engine.build_table(config, &tally))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cycles: u64, seed: u64) -> RunConfig {
        RunConfig {
            cycles,
            seed,
            ..RunConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.resolved_schedule().len(), 72);
        assert!((c.detectors[0].tau_ns - 30.0).abs() < 1e-12);
        assert!((c.detectors[1].tau_ns - 40.0).abs() < 1e-12);
    }

    #[test]
    fn digest_ignores_seed_and_cycles() {
        let a = small(10, 1);
        let b = small(99, 2);
        assert_eq!(a.digest(), b.digest());
        let mut c = small(10, 1);
        c.detectors[0].eta = 0.5;
        assert_ne!(a.digest(), c.digest());
        let mut explicit = small(10, 1);
        explicit.schedule = Some(explicit.resolved_schedule());
        assert_eq!(a.digest(), explicit.digest());
    }

    #[test]
    fn validation_names_fields() {
        let mut c = RunConfig::default();
        c.timing.bin_separation_ns = 300.0;
        match c.validate() {
            Err(crate::Error::Config { field, .. }) => assert_eq!(field, "timing.bin_separation_ns"),
            other => panic!("unexpected {other:?}"),
        }
        let mut c = RunConfig::default();
        c.detectors[1].eta = 1.2;
        assert!(matches!(c.validate(), Err(crate::Error::Config { field, .. }) if field == "detectors.1.eta"));
        let mut c = RunConfig::default();
        c.cycles = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        let mut s = c.resolved_schedule();
        s[0].weight += 0.5;
        c.schedule = Some(s);
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = run(&small(200_000, 5)).unwrap();
        let b = run(&small(200_000, 5)).unwrap();
        assert_eq!(a, b);
        let c = run(&small(200_000, 6)).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn partitioning_reproduces_serial_run() {
        let cfg = small(5 * BLOCK_CYCLES + 123, 11);
        let serial = run(&cfg).unwrap();
        assert_eq!(run_parallel(&cfg).unwrap(), serial);
        let merged = run_partition(&cfg, 0, 2)
            .unwrap()
            .merge(&run_partition(&cfg, 2, 4).unwrap())
            .unwrap();
        assert_eq!(merged.to_csv(), serial.to_csv());
    }

    #[test]
    fn counts_conserved() {
        let t = run(&small(300_000, 2)).unwrap();
        assert_eq!(t.total_cycles(), 300_000);
        let sum: u64 = t.iter().map(|(_, v)| v.n_cycles).sum();
        assert_eq!(sum, 300_000);
        assert!(t.iter().all(|(_, v)| v.n_psiminus + v.n_psiplus <= v.n_cycles));
    }

    #[test]
    fn vacuum_without_darks_never_projects() {
        let mut cfg = small(100_000, 3);
        cfg.detectors[0].dark_rate_hz = 0.0;
        cfg.detectors[1].dark_rate_hz = 0.0;
        cfg.schedule = Some(vec![ScheduleEntry {
            state_a: Qubit::Zero,
            state_b: Qubit::One,
            mu_a: 0.0,
            mu_b: 0.0,
            weight: 1.0,
        }]);
        let t = run(&cfg).unwrap();
        let (_, v) = t.iter().next().unwrap();
        assert_eq!((v.n_cycles, v.n_psiminus, v.n_psiplus), (100_000, 0, 0));
    }

    #[test]
    fn long_deadtime_removes_psi_plus() {
        let mut cfg = small(500_000, 4);
        cfg.detectors[0].tau_ns = 100.0;
        cfg.detectors[1].tau_ns = 100.0;
        let t = run(&cfg).unwrap();
        assert!(t.iter().all(|(_, v)| v.n_psiplus == 0));
        assert!(t.iter().any(|(_, v)| v.n_psiminus > 0));
    }

    #[test]
    fn one_blind_detector_still_projects_psi_plus_on_the_other() {
        let mut cfg = small(500_000, 4);
        cfg.detectors[0].tau_ns = 100.0;
        cfg.schedule = Some(vec![ScheduleEntry {
            state_a: Qubit::Zero,
            state_b: Qubit::One,
            mu_a: 0.5,
            mu_b: 0.5,
            weight: 1.0,
        }]);
        assert!(run(&cfg).unwrap().iter().any(|(_, v)| v.n_psiplus > 0));
    }

    #[test]
    fn cross_cycle_deadtime_matches_markov_chain() {
        // One source per bin, so the detectors are independent. Both settings
        // blind the late bin after an early click; only 130 ns also lets a
        // late click blind the next cycle's early bin (gap 125 ns).
        let mut cfg = small(400_000, 8);
        cfg.detectors[0].dark_rate_hz = 0.0;
        cfg.detectors[1].dark_rate_hz = 0.0;
        cfg.schedule = Some(vec![ScheduleEntry {
            state_a: Qubit::One,
            state_b: Qubit::Zero,
            mu_a: 2.0,
            mu_b: 2.0,
            weight: 1.0,
        }]);
        cfg.channels = [ChannelConfig::lossless(), ChannelConfig::lossless()];
        let p: Vec<f64> = cfg.detectors.iter().map(|d| 1.0 - (-d.eta).exp()).collect();
        for (tau, cross) in [(100.0, false), (130.0, true)] {
            cfg.detectors[0].tau_ns = tau;
            cfg.detectors[1].tau_ns = tau;
            let t = run(&cfg).unwrap();
            let (psim, psip) = t.iter().fold((0, 0), |(a, b), (_, v)| (a + v.n_psiminus, b + v.n_psiplus));
            assert_eq!(psip, 0);
            // Stationary probability of entering a cycle blind in the early bin.
            let marginals: Vec<(f64, f64)> = p
                .iter()
                .map(|&p| {
                    let blind = if cross { p / (1.0 + p) } else { 0.0 };
                    let early = (1.0 - blind) * p;
                    let late = (1.0 - blind) * (1.0 - p) * p + blind * p;
                    (early, late)
                })
                .collect();
            let expect = marginals[0].0 * marginals[1].1 + marginals[0].1 * marginals[1].0;
            let n = cfg.cycles as f64;
            let se = (expect * (1.0 - expect) / n).sqrt();
            let got = psim as f64 / n;
            assert!((got - expect).abs() < 5.0 * se, "tau {tau}: {got} vs {expect}");
        }
    }
}
