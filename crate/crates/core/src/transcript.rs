//! Protocol transcripts and their JSON form.
//!
//! A transcript records one protocol run as an ordered list of steps. Each
//! step carries the acting party, the registers it moved, who holds which
//! register afterwards, the global state (a weighted list of pure branches;
//! one branch unless a server measured something), the reduced state of the
//! user and of every server holding data, and cumulative communication
//! counters.
//!
//! The JSON document is versioned by [`TRANSCRIPT_SCHEMA`]; loading a document
//! with any other version fails.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::pir::Database;
use crate::quantum::{DensityMatrix, RegisterLayout, SparseState, NORM_TOL};

pub const TRANSCRIPT_SCHEMA: &str = "qspir-transcript/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Party {
    User,
    /// 1-based server number.
    Server(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::User => f.write_str("user"),
            Party::Server(j) => write!(f, "server{j}"),
        }
    }
}

impl FromStr for Party {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "user" {
            return Ok(Party::User);
        }
        s.strip_prefix("server")
            .and_then(|j| j.parse().ok())
            .filter(|&j| j >= 1)
            .map(Party::Server)
            .ok_or_else(|| Error::Parse(format!("unknown party `{s}`")))
    }
}

impl From<Party> for String {
    fn from(p: Party) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Party {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One pure component of the global state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub probability: f64,
    pub state: SparseState,
}

/// The user's classical randomness for one run: the scheme's random string
/// and, for compiled protocols, one mask per server.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct UserDraw {
    pub randomness: u64,
    pub masks: Vec<BitString>,
}

/// What the user knows classically during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserKnowledge {
    pub index: usize,
    pub draw: UserDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Qubits (quantum protocols) or bits (classical) sent to servers.
    pub sent: usize,
    /// Qubits or bits sent back to the user.
    pub returned: usize,
}

impl Counters {
    pub fn total(&self) -> usize {
        self.sent + self.returned
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Unique within a transcript, e.g. `send:1` or `phase:2`.
    pub label: String,
    pub party: Party,
    pub moved: Vec<String>,
    pub custody: Arc<BTreeMap<String, Party>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<Branch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_state: Option<DensityMatrix>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub server_states: BTreeMap<usize, DensityMatrix>,
    pub counters: Counters,
}

impl Step {
    /// Servers holding at least one register after this step.
    pub fn holders(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .custody
            .values()
            .filter_map(|p| match p {
                Party::Server(j) => Some(*j),
                Party::User => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Probability of each value of the output bit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub p0: f64,
    pub p1: f64,
}

impl OutputDistribution {
    pub fn probability(&self, bit: bool) -> f64 {
        if bit {
            self.p1
        } else {
            self.p0
        }
    }

    /// The output bit, if it is produced with probability 1.
    pub fn deterministic(&self) -> Option<bool> {
        if self.p1 >= 1.0 - NORM_TOL {
            Some(true)
        } else if self.p0 >= 1.0 - NORM_TOL {
            Some(false)
        } else {
            None
        }
    }
}

/// Whether communication is counted in qubits or classical bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommUnit {
    Qubits,
    Bits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema: String,
    pub protocol: String,
    pub n: usize,
    pub database: Database,
    pub knowledge: UserKnowledge,
    pub layout: RegisterLayout,
    pub unit: CommUnit,
    pub steps: Vec<Step>,
    pub output: OutputDistribution,
}

impl Transcript {
    pub fn communication(&self) -> Counters {
        self.steps.last().map(|s| s.counters).unwrap_or_default()
    }

    pub fn step(&self, label: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.label == label)
    }

    /// The output bit when it is deterministic.
    pub fn output_bit(&self) -> Option<bool> {
        self.output.deterministic()
    }

    /// The pure global state after the last step, when there is exactly one
    /// branch recorded.
    pub fn final_state(&self) -> Option<&SparseState> {
        match self.steps.last().map(|s| s.branches.as_slice()) {
            Some([b]) => Some(&b.state),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // check the version before the full parse so a tampered document
        // reports the version and not some unrelated field error
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("schema").and_then(|v| v.as_str()).unwrap_or("").to_string();
        if found != TRANSCRIPT_SCHEMA {
            return Err(Error::SchemaVersion { expected: TRANSCRIPT_SCHEMA.into(), found });
        }
        Ok(serde_json::from_value(raw)?)
    }
}

pub fn export_transcript(transcript: &Transcript, path: &Path) -> Result<()> {
    fs::write(path, transcript.to_json()?)?;
    Ok(())
}

pub fn load_transcript(path: &Path) -> Result<Transcript> {
    Transcript::from_json(&fs::read_to_string(path)?)
}
