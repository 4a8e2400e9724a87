//! Append-only, hash-chained experiment log.
//!
//! Storage is line-delimited JSON (UTF-8, one record per line). Each line is
//! an envelope carrying a monotone sequence number, the previous record's
//! digest, and the digest of this record. Record 0 is a header freezing the
//! session protocol (hash algorithm, gate and split snapshots, config
//! digest). Field-by-field format notes live in `docs/trace-format.md`.
//!
//! Single writer; appends are serialized through one `Trace` owner. Existing
//! records are never mutated: interpretation updates are appended as
//! amendment records referencing the original sequence number.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{EvalMetrics, GateConfig, GateVerdict};
use crate::panel::SplitConfig;

/// prev_hash of the first record.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CandidateType {
    Mechanical,
    Hypothesis,
}

/// The five required proposal fields, pre-evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateProposal {
    pub name: String,
    pub hypothesis: String,
    pub rationale: String,
    pub candidate_type: CandidateType,
    pub recipe_text: String,
}

impl CandidateProposal {
    pub fn check_fields(&self) -> Result<()> {
        for (field, value) in [
            ("name", &self.name),
            ("hypothesis", &self.hypothesis),
            ("rationale", &self.rationale),
            ("recipe_text", &self.recipe_text),
        ] {
            if value.trim().is_empty() {
                return Err(Error::TraceAppend(format!(
                    "proposal field '{field}' must be non-empty"
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated candidate in the trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateRecord {
    pub round: u32,
    pub name: String,
    pub hypothesis: String,
    pub rationale: String,
    pub candidate_type: CandidateType,
    pub recipe_text: String,
    pub metrics_train: EvalMetrics,
    /// Diagnostic only; never feeds the gate.
    pub metrics_validation: Option<EvalMetrics>,
    #[serde(flatten)]
    pub verdict: GateVerdict,
    /// Filled after evaluation via amendment records.
    pub interpretation: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct PoolDelta {
    pub hold_added: Vec<String>,
    /// Full ordered good pool after this summary (empty = unchanged).
    pub good: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Header {
        version: u32,
        hash_algo: String,
        config_digest: String,
        session_seed: u64,
        gate: GateConfig,
        split: SplitConfig,
        timestamp: String,
    },
    Candidate(CandidateRecord),
    Rejected {
        round: u32,
        proposal: CandidateProposal,
        reason: String,
        timestamp: String,
    },
    RoundSummary {
        round: u32,
        text: String,
        decision: String,
        pool_delta: PoolDelta,
        timestamp: String,
    },
    Amendment {
        ref_seq: u64,
        interpretation: String,
        author: String,
        timestamp: String,
    },
    RoundAbort {
        round: u32,
        reason: String,
        timestamp: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub prev_hash: String,
    pub payload: Payload,
    pub hash: String,
}

fn record_hash(seq: u64, prev_hash: &str, payload: &Payload) -> String {
    let payload_json = serde_json::to_string(payload).expect("payload serializes");
    let mut hasher = Sha256::new();
    hasher.update(seq.to_string().as_bytes());
    hasher.update(b"\n");
    hasher.update(prev_hash.as_bytes());
    hasher.update(b"\n");
    hasher.update(payload_json.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntegrityReport {
    Ok {
        records: u64,
        /// A trailing partial line (no newline) was dropped during recovery.
        truncated_tail: bool,
    },
    Bad {
        first_bad_seq: u64,
    },
}

/// Owner of one trace file. Holds the verified head.
#[derive(Debug)]
pub struct Trace {
    path: PathBuf,
    entries: Vec<Envelope>,
}

impl Trace {
    /// Create a fresh trace whose first record is the given header payload.
    pub fn create(path: &Path, header: Payload) -> Result<Trace> {
        if !matches!(header, Payload::Header { .. }) {
            return Err(Error::TraceAppend("first record must be a header".into()));
        }
        if path.exists() {
            return Err(Error::TraceAppend(format!(
                "trace file {} already exists",
                path.display()
            )));
        }
        let mut trace = Trace {
            path: path.to_path_buf(),
            entries: Vec::new(),
        };
        trace.append(header)?;
        Ok(trace)
    }

    /// Open and verify an existing trace. A trailing partial line is dropped
    /// (partial-write recovery); any interior corruption is an error.
    pub fn open(path: &Path) -> Result<Trace> {
        let (entries, report) = load_entries(path)?;
        match report {
            IntegrityReport::Ok { .. } => Ok(Trace {
                path: path.to_path_buf(),
                entries,
            }),
            IntegrityReport::Bad { first_bad_seq } => Err(Error::TraceIntegrity {
                seq: first_bad_seq,
                message: "hash chain mismatch".into(),
            }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn head_hash(&self) -> &str {
        self.entries.last().map(|e| e.hash.as_str()).unwrap_or(GENESIS_HASH)
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn header(&self) -> Option<&Payload> {
        self.entries.first().map(|e| &e.payload)
    }

    /// Append a record at the current head.
    pub fn append(&mut self, payload: Payload) -> Result<u64> {
        let head = self.head_hash().to_string();
        self.append_at(payload, &head)
    }

    /// Append a record whose author believes the head is `expected_prev_hash`.
    /// Rejected if the head has moved (stale writer or tamper).
    pub fn append_at(&mut self, payload: Payload, expected_prev_hash: &str) -> Result<u64> {
        if expected_prev_hash != self.head_hash() {
            return Err(Error::TraceAppend(format!(
                "stale prev_hash: expected {}, head is {}",
                expected_prev_hash,
                self.head_hash()
            )));
        }
        if let Payload::Candidate(rec) = &payload {
            if rec.hypothesis.trim().is_empty()
                || rec.name.trim().is_empty()
                || rec.rationale.trim().is_empty()
                || rec.recipe_text.trim().is_empty()
            {
                return Err(Error::TraceAppend(
                    "candidate records require all five proposal fields non-empty".into(),
                ));
            }
            if self.candidate_names().contains(rec.name.as_str()) {
                return Err(Error::TraceAppend(format!(
                    "duplicate candidate name '{}'",
                    rec.name
                )));
            }
        }
        let seq = self.next_seq();
        let prev_hash = self.head_hash().to_string();
        let hash = record_hash(seq, &prev_hash, &payload);
        let envelope = Envelope {
            seq,
            prev_hash,
            payload,
            hash,
        };
        let line = serde_json::to_string(&envelope)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.entries.push(envelope);
        Ok(seq)
    }

    fn candidate_names(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter_map(|e| match &e.payload {
                Payload::Candidate(rec) => Some(rec.name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn read_state(&self) -> ResearchState {
        let mut state = ResearchState::default();
        let mut amendments: BTreeMap<u64, String> = BTreeMap::new();
        for e in &self.entries {
            match &e.payload {
                Payload::Header { session_seed, .. } => {
                    state.session_seed = *session_seed;
                }
                Payload::Candidate(rec) => {
                    state.last_round = state.last_round.max(rec.round);
                    if rec.verdict.passed() {
                        state.hold.push(rec.name.clone());
                    }
                    state.candidates.push((e.seq, rec.clone()));
                }
                Payload::Rejected { round, .. } => {
                    state.last_round = state.last_round.max(*round);
                    state.rejected += 1;
                }
                Payload::RoundSummary {
                    round, pool_delta, ..
                } => {
                    state.last_round = state.last_round.max(*round);
                    if !pool_delta.good.is_empty() {
                        state.good = pool_delta.good.clone();
                    }
                }
                Payload::Amendment {
                    ref_seq,
                    interpretation,
                    ..
                } => {
                    amendments.insert(*ref_seq, interpretation.clone());
                }
                Payload::RoundAbort { .. } => {}
            }
        }
        for (seq, rec) in &mut state.candidates {
            if let Some(text) = amendments.get(seq) {
                rec.interpretation = text.clone();
            }
        }
        state
    }
}

/// The research state h_k an agent consumes at the start of a round.
#[derive(Debug, Clone, Default)]
pub struct ResearchState {
    pub session_seed: u64,
    pub last_round: u32,
    /// (seq, record) with amendments folded into `interpretation`.
    pub candidates: Vec<(u64, CandidateRecord)>,
    /// Names that passed the train gate, in trace order.
    pub hold: Vec<String>,
    /// Curated ordered subset of hold.
    pub good: Vec<String>,
    pub rejected: usize,
}

impl ResearchState {
    pub fn recipe_for(&self, name: &str) -> Option<&str> {
        self.candidates
            .iter()
            .find(|(_, r)| r.name == name)
            .map(|(_, r)| r.recipe_text.as_str())
    }

    pub fn record_for(&self, name: &str) -> Option<&CandidateRecord> {
        self.candidates
            .iter()
            .find(|(_, r)| r.name == name)
            .map(|(_, r)| r)
    }
}

fn load_entries(path: &Path) -> Result<(Vec<Envelope>, IntegrityReport)> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut complete_lines: Vec<&str> = Vec::new();
    let mut truncated_tail = false;
    let mut rest = raw.as_str();
    while let Some(idx) = rest.find('\n') {
        complete_lines.push(&rest[..idx]);
        rest = &rest[idx + 1..];
    }
    if !rest.is_empty() {
        // partial write: last line has no terminator, reject it and recover
        truncated_tail = true;
    }

    let mut entries = Vec::new();
    let mut prev = GENESIS_HASH.to_string();
    for (k, line) in complete_lines.iter().enumerate() {
        let envelope: Envelope = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(_) => {
                return Ok((entries, IntegrityReport::Bad { first_bad_seq: k as u64 }));
            }
        };
        let expected_hash = record_hash(envelope.seq, &envelope.prev_hash, &envelope.payload);
        if envelope.seq != k as u64
            || envelope.prev_hash != prev
            || envelope.hash != expected_hash
        {
            return Ok((entries, IntegrityReport::Bad { first_bad_seq: k as u64 }));
        }
        prev = envelope.hash.clone();
        entries.push(envelope);
    }
    let n = entries.len() as u64;
    Ok((
        entries,
        IntegrityReport::Ok {
            records: n,
            truncated_tail,
        },
    ))
}

/// Recompute the hash chain of a trace file without constructing a `Trace`.
pub fn verify_integrity(path: &Path) -> Result<IntegrityReport> {
    load_entries(path).map(|(_, report)| report)
}
