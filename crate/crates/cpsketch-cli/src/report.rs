//! JSON and CSV report shapes. Reports contain only deterministic data:
//! identical inputs and seeds produce byte-identical files, so wall-clock
//! timings go to stderr instead.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use cpsketch::gossip::{SimLog, SubRoundRow};
use cpsketch::relay::{OpCounters, PartyRecovery};
use cpsketch::{Mode, SketchParams};
use serde::Serialize;

use crate::CliError;

#[derive(Serialize)]
pub struct ParamsReport {
    pub q: u64,
    pub m: u64,
    pub owner_count: u32,
    pub d: u32,
    pub c: u32,
    pub points_per_sketch: usize,
    pub message_bytes: usize,
}

impl ParamsReport {
    pub fn new(params: &SketchParams) -> Self {
        ParamsReport {
            q: params.q(),
            m: params.m(),
            owner_count: params.owner_count(),
            d: params.d(),
            c: params.c(),
            points_per_sketch: params.n_points(),
            message_bytes: params.message_len(),
        }
    }
}

#[derive(Serialize)]
pub struct Reconcile2Report {
    pub mode: &'static str,
    pub params: ParamsReport,
    pub a_count: usize,
    pub b_count: usize,
    /// Keys held by B that A lacks.
    pub a_missing: BTreeSet<u64>,
    /// Keys held by A that B lacks.
    pub b_missing: BTreeSet<u64>,
    pub messages: usize,
    pub bytes_per_message: usize,
    pub total_bytes: usize,
    /// Lower bound in bits for naming the keys each side is missing:
    /// ceil(log2 C(m - |S|, k)) where k is the count actually missing.
    pub floor_bits_a: u64,
    pub floor_bits_b: u64,
}

#[derive(Serialize)]
pub struct RelayPartyReport {
    pub party: u32,
    pub key_count: usize,
    pub recovered: PartyRecovery,
}

#[derive(Serialize)]
pub struct RelayReport {
    pub mode: Mode,
    pub params: ParamsReport,
    pub seed: u64,
    pub ingest_order: Vec<u32>,
    pub party_messages: usize,
    pub party_message_bytes: usize,
    pub broadcasts: usize,
    pub broadcast_bytes: usize,
    pub total_bytes: usize,
    pub counters: OpCounters,
    pub parties: Vec<RelayPartyReport>,
}

#[derive(Serialize)]
pub struct GossipPartyReport {
    pub party: u32,
    pub vertex: u32,
    pub recovered: PartyRecovery,
}

#[derive(Serialize)]
pub struct GossipReport {
    pub mode: Mode,
    pub params: ParamsReport,
    pub seed: u64,
    pub max_rounds: u32,
    pub vertices: u32,
    pub edges: usize,
    /// Exact conductance `cut/volume` as a reduced fraction, when the
    /// graph is small enough to enumerate.
    pub conductance: Option<String>,
    pub completion_round: Option<u32>,
    pub rounds_run: u32,
    pub total_messages: u64,
    pub total_bytes: u64,
    pub max_payload_sketches: u32,
    pub parties: Vec<GossipPartyReport>,
}

impl GossipReport {
    pub fn from_log(log: &SimLog, extra: GossipReportHead) -> Self {
        GossipReport {
            mode: log.mode,
            params: extra.params,
            seed: extra.seed,
            max_rounds: extra.max_rounds,
            vertices: extra.vertices,
            edges: extra.edges,
            conductance: extra.conductance,
            completion_round: log.completion_round,
            rounds_run: log.rounds_run,
            total_messages: log.total_messages,
            total_bytes: log.total_bytes,
            max_payload_sketches: log.max_payload_sketches,
            parties: log
                .recoveries
                .iter()
                .map(|r| GossipPartyReport {
                    party: r.party,
                    vertex: r.vertex,
                    recovered: r.recovered.clone(),
                })
                .collect(),
        }
    }
}

pub struct GossipReportHead {
    pub params: ParamsReport,
    pub seed: u64,
    pub max_rounds: u32,
    pub vertices: u32,
    pub edges: usize,
    pub conductance: Option<String>,
}

#[derive(Serialize)]
pub struct SketchInspect {
    pub params: ParamsReport,
    pub owner_encoded: bool,
    pub cardinality: u64,
    pub evals: Vec<u64>,
}

/// Serializes `value` as pretty JSON with a trailing newline, either to
/// `out` or to stdout.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialize report: {}", e)))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e))),
        None => {
            let mut stdout = std::io::stdout();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Config(format!("stdout: {}", e)))
        }
    }
}

/// Writes the per-sub-round trace as CSV.
pub fn write_rounds_csv(rows: &[SubRoundRow], path: &Path) -> Result<(), CliError> {
    let mut text = String::from("round,sub_round,vertex,known_count,bytes_sent\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.round, row.sub_round, row.vertex, row.known_count, row.bytes_sent
        ));
    }
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))
}

/// ceil(log2 C(n, k)) computed via a log-domain sum; 0 when the binomial
/// is 0 or 1.
pub fn binomial_log2_ceil(n: u64, k: u64) -> u64 {
    if k == 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut bits = 0f64;
    for i in 0..k {
        bits += ((n - i) as f64).log2() - ((i + 1) as f64).log2();
    }
    bits.max(0.0).ceil() as u64
}
