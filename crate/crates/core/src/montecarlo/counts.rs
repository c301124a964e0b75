use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{Basis, Qubit};

pub const CSV_HEADER: &str = "basis,state_a,state_b,mu_a,mu_b,n_cycles,n_psiminus,n_psiplus";

/// Preparation setting of one clock cycle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CountKey {
    pub state_a: Qubit,
    pub state_b: Qubit,
    pub mu_a: f64,
    pub mu_b: f64,
}

impl CountKey {
    pub fn new(state_a: Qubit, state_b: Qubit, mu_a: f64, mu_b: f64) -> Self {
        Self {
            state_a,
            state_b,
            mu_a,
            mu_b,
        }
    }

    pub fn basis(&self) -> Basis {
        self.state_a.basis()
    }
}

impl PartialEq for CountKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CountKey {}

impl PartialOrd for CountKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CountKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.basis()
            .cmp(&other.basis())
            .then(self.state_a.cmp(&other.state_a))
            .then(self.state_b.cmp(&other.state_b))
            .then(other.mu_a.total_cmp(&self.mu_a))
            .then(other.mu_b.total_cmp(&self.mu_b))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n_cycles: u64,
    pub n_psiminus: u64,
    pub n_psiplus: u64,
}

impl Tally {
    fn add(&mut self, other: &Tally) {
        self.n_cycles += other.n_cycles;
        self.n_psiminus += other.n_psiminus;
        self.n_psiplus += other.n_psiplus;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsMetadata {
    /// Seeds of every run merged into the table, sorted.
    pub seeds: Vec<u64>,
    /// Digest of the physics configuration (seed and cycle count excluded).
    pub config_digest: String,
    pub total_cycles: u64,
    /// Manifest file describing the run, if one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Outcome counts keyed by preparation setting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountsTable {
    pub metadata: CountsMetadata,
    entries: BTreeMap<CountKey, Tally>,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    basis: Basis,
    #[serde(flatten)]
    key: CountKey,
    #[serde(flatten)]
    tally: Tally,
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    metadata: CountsMetadata,
    counts: Vec<JsonRow>,
}

impl CountsTable {
    pub fn new(config_digest: impl Into<String>, seed: u64) -> Self {
        Self {
            metadata: CountsMetadata {
                seeds: vec![seed],
                config_digest: config_digest.into(),
                total_cycles: 0,
                manifest: None,
            },
            entries: BTreeMap::new(),
        }
    }

    /// A table with no runs; the identity of [`CountsTable::merge`].
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.metadata.seeds.is_empty()
    }

    pub fn add(&mut self, key: CountKey, tally: Tally) {
        self.entries.entry(key).or_default().add(&tally);
        self.metadata.total_cycles += tally.n_cycles;
    }

    pub fn get(&self, key: &CountKey) -> Option<&Tally> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CountKey, &Tally)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn total_cycles(&self) -> u64 {
        self.metadata.total_cycles
    }

    /// Keywise sum of two tables from the same configuration.
    pub fn merge(&self, other: &CountsTable) -> Result<CountsTable> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.metadata.config_digest != other.metadata.config_digest {
            return Err(Error::Merge(format!(
                "config digests differ: {} vs {}",
                self.metadata.config_digest, other.metadata.config_digest
            )));
        }
        let mut out = self.clone();
        out.metadata.manifest = None;
        for (k, t) in &other.entries {
            out.add(*k, *t);
        }
        out.metadata.seeds.extend_from_slice(&other.metadata.seeds);
        out.metadata.seeds.sort_unstable();
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.entries.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (k, t) in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                k.basis(),
                k.state_a,
                k.state_b,
                k.mu_a,
                k.mu_b,
                t.n_cycles,
                t.n_psiminus,
                t.n_psiplus
            );
        }
        out
    }

    /// Parses the CSV layout written by [`CountsTable::to_csv`]. CSV carries
    /// no metadata, so the result has an empty digest and no seeds.
    pub fn from_csv(text: &str) -> Result<CountsTable> {
        let mut table = CountsTable::empty();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((_, h)) => {
                return Err(Error::Parse {
                    line: 1,
                    reason: format!("expected header `{CSV_HEADER}`, found `{h}`"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    reason: "empty file".into(),
                })
            }
        }
        for (i, raw) in lines {
            let line = (i + 1) as u64;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line, reason };
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(err(format!("expected 8 fields, found {}", fields.len())));
            }
            let basis: Basis = fields[0].parse().map_err(err)?;
            let state_a: Qubit = fields[1].parse().map_err(err)?;
            let state_b: Qubit = fields[2].parse().map_err(err)?;
            if state_a.basis() != basis || state_b.basis() != basis {
                return Err(err(format!("states {state_a},{state_b} do not belong to basis {basis}")));
            }
            let float = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| err(format!("invalid {name} `{s}`")))
            };
            let int = |s: &str, name: &str| -> Result<u64> {
                s.parse::<u64>().map_err(|_| err(format!("invalid {name} `{s}`")))
            };
            let key = CountKey::new(state_a, state_b, float(fields[3], "mu_a")?, float(fields[4], "mu_b")?);
            let tally = Tally {
                n_cycles: int(fields[5], "n_cycles")?,
                n_psiminus: int(fields[6], "n_psiminus")?,
                n_psiplus: int(fields[7], "n_psiplus")?,
            };
            if tally.n_psiminus + tally.n_psiplus > tally.n_cycles {
                return Err(err("projections exceed cycles".into()));
            }
            table.add(key, tally);
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        let doc = JsonTable {
            metadata: self.metadata.clone(),
            counts: self
                .entries
                .iter()
                .map(|(k, t)| JsonRow {
                    basis: k.basis(),
                    key: *k,
                    tally: *t,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("counts serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<CountsTable> {
        let doc: JsonTable = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            reason: e.to_string(),
        })?;
        let mut table = CountsTable {
            metadata: CountsMetadata {
                total_cycles: 0,
                ..doc.metadata
            },
            entries: BTreeMap::new(),
        };
        for row in doc.counts {
            if row.key.state_a.basis() != row.basis || row.key.state_b.basis() != row.basis {
                return Err(Error::Parse {
                    line: 0,
                    reason: "row states do not match its basis".into(),
                });
            }
            table.add(row.key, row.tally);
        }
        Ok(table)
    }

    /// Parses either format, detected from the first non-blank character.
    pub fn parse(text: &str) -> Result<CountsTable> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_csv(text)
        }
    }
}
