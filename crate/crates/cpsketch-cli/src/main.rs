//! Command-line front end: two-party reconciliation, relay and gossip
//! simulators, exact conductance, field selection, and sketch encode/inspect.
//!
//! Exit codes: 0 on success, 2 for bad input or configuration (including
//! argument parsing), 3 when a protocol run fails, e.g. the set difference
//! exceeds the sketch capacity.

mod input;
mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use cpsketch::gossip::{self, GossipError, SimConfig};
use cpsketch::relay::{party_decode, PartyState, RelayError, RelayState};
use cpsketch::sketch::recover_difference;
use cpsketch::{choose_field, FieldError, Mode, Sketch, SketchError, SketchParams};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use report::{
    binomial_log2_ceil, write_json, write_rounds_csv, GossipReport, GossipReportHead,
    ParamsReport, Reconcile2Report, RelayPartyReport, RelayReport, SketchInspect,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
        }
    }
}

impl From<SketchError> for CliError {
    fn from(e: SketchError) -> Self {
        match e {
            SketchError::DifferenceBoundExceeded | SketchError::VerificationFailed => {
                CliError::Protocol(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RelayError> for CliError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::Sketch(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<GossipError> for CliError {
    fn from(e: GossipError) -> Self {
        match e {
            GossipError::Sketch(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "cpsketch", version, about = "Set reconciliation with polynomial sketches")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IngestOrder {
    /// Seeded random arrival order.
    Arrival,
    /// Parties ingest in index order 1..N.
    Ascending,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reconcile two key sets by exchanging one sketch each way.
    Reconcile2 {
        /// Key-set file for side A.
        #[arg(long)]
        a: PathBuf,
        /// Key-set file for side B.
        #[arg(long)]
        b: PathBuf,
        /// Key universe size; keys lie in [0, m).
        #[arg(long)]
        m: u64,
        /// Largest recoverable symmetric difference.
        #[arg(long)]
        d: u32,
        /// Extra verification points per sketch.
        #[arg(long, default_value_t = 2)]
        c: u32,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the central-relay protocol over N party key sets.
    RelaySim {
        /// Key-set file for one party; repeat for each. The i-th file is
        /// party i.
        #[arg(long = "party", required = true)]
        parties: Vec<PathBuf>,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 2)]
        c: u32,
        /// Track which party holds each element outside the intersection.
        #[arg(long)]
        owners: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Order in which party messages reach the relay.
        #[arg(long, value_enum, default_value_t = IngestOrder::Arrival)]
        order: IngestOrder,
        /// Write the JSON report here.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run push-pull gossip on a graph until every party vertex is complete.
    GossipSim {
        /// Graph file: `V E` header then one `u v` edge per line.
        #[arg(long)]
        graph: PathBuf,
        /// Key-set file for one party; repeat for each. The i-th file is
        /// party i.
        #[arg(long = "party", required = true)]
        parties: Vec<PathBuf>,
        /// Placement file: one `vertex party` pair per line.
        #[arg(long)]
        placement: PathBuf,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 2)]
        c: u32,
        #[arg(long)]
        owners: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        max_rounds: u32,
        /// Write the JSON report here.
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-sub-round trace as CSV.
        #[arg(long)]
        rounds_csv: Option<PathBuf>,
    },
    /// Print the exact conductance of a graph as a reduced fraction.
    Conductance {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Pick the smallest usable prime field for the given shape.
    FieldFind {
        #[arg(long)]
        m: u64,
        /// Parties whose ownership must be encodable; 1 disables tagging.
        #[arg(long, default_value_t = 1)]
        num_parties: u32,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 2)]
        c: u32,
    },
    /// Encode a key set as a sketch message, or inspect an encoded one.
    Sketch {
        /// Key-set file to encode (with --m, --d, --out).
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long)]
        c: Option<u32>,
        /// Write the encoded sketch message here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a JSON summary of an encoded sketch message.
        #[arg(long)]
        inspect: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Reconcile2 { a, b, m, d, c, out } => cmd_reconcile2(&a, &b, m, d, c, out.as_deref()),
        Cmd::RelaySim { parties, m, d, c, owners, seed, order, out } => {
            cmd_relay_sim(&parties, m, d, c, owners, seed, order, &out)
        }
        Cmd::GossipSim {
            graph,
            parties,
            placement,
            m,
            d,
            c,
            owners,
            seed,
            max_rounds,
            out,
            rounds_csv,
        } => cmd_gossip_sim(GossipArgs {
            graph,
            parties,
            placement,
            m,
            d,
            c,
            owners,
            seed,
            max_rounds,
            out,
            rounds_csv,
        }),
        Cmd::Conductance { graph } => cmd_conductance(&graph),
        Cmd::FieldFind { m, num_parties, d, c } => cmd_field_find(m, num_parties, d, c),
        Cmd::Sketch { keys, m, d, c, out, inspect } => cmd_sketch(keys, m, d, c, out, inspect),
    }
}

fn cmd_reconcile2(
    a: &std::path::Path,
    b: &std::path::Path,
    m: u64,
    d: u32,
    c: u32,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let params = SketchParams::new(choose_field(m, 1, d, c)?);
    let a_keys = input::read_key_set(a, m)?;
    let b_keys = input::read_key_set(b, m)?;
    let sketch_a = Sketch::of_set(a_keys.iter().copied(), &params)?;
    let sketch_b = Sketch::of_set(b_keys.iter().copied(), &params)?;

    // Round-trip both sketches through the wire format, as a real exchange
    // would.
    let received_b = Sketch::from_bytes(&sketch_b.to_bytes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a_only, b_only) = recover_difference(&sketch_a, &received_b, &mut rng)?;

    let bytes_per_message = params.message_len();
    let report = Reconcile2Report {
        mode: "two_party",
        params: ParamsReport::new(&params),
        a_count: a_keys.len(),
        b_count: b_keys.len(),
        floor_bits_a: binomial_log2_ceil(m - a_keys.len() as u64, b_only.len() as u64),
        floor_bits_b: binomial_log2_ceil(m - b_keys.len() as u64, a_only.len() as u64),
        a_missing: b_only,
        b_missing: a_only,
        messages: 2,
        bytes_per_message,
        total_bytes: 2 * bytes_per_message,
    };
    write_json(&report, out)?;
    eprintln!("elapsed: {:.3?}", start.elapsed());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_relay_sim(
    files: &[PathBuf],
    m: u64,
    d: u32,
    c: u32,
    owners: bool,
    seed: u64,
    order: IngestOrder,
    out: &std::path::Path,
) -> Result<(), CliError> {
    let start = Instant::now();
    let n = files.len();
    let mode = if owners { Mode::Owner } else { Mode::Plain };
    let owner_count = if owners { n as u32 } else { 1 };
    let params = SketchParams::new(choose_field(m, owner_count, d, c)?);

    let mut parties = Vec::with_capacity(n);
    for (i, file) in files.iter().enumerate() {
        let keys = input::read_key_set(file, m)?;
        parties.push(PartyState::new(i as u32 + 1, keys, &params, mode)?);
    }

    let mut ingest_indices: Vec<usize> = (0..n).collect();
    if order == IngestOrder::Arrival {
        // Distinct stream from the relay's recovery randomness.
        let mut order_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        ingest_indices.shuffle(&mut order_rng);
    }

    let mut relay = RelayState::new(params, mode, seed);
    let mut party_bytes = 0usize;
    for &i in &ingest_indices {
        let message = parties[i].encode();
        party_bytes += message.len();
        relay.ingest(i as u32 + 1, &message)?;
    }
    let broadcasts = relay.finalize()?;
    let broadcast_bytes: usize = broadcasts.iter().map(Vec::len).sum();

    let mut decode_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut party_reports = Vec::with_capacity(n);
    for (i, party) in parties.iter().enumerate() {
        let recovered = party_decode(party, &broadcasts, mode, &mut decode_rng)?;
        party_reports.push(RelayPartyReport {
            party: i as u32 + 1,
            key_count: party.keys().len(),
            recovered,
        });
    }

    let report = RelayReport {
        mode,
        params: ParamsReport::new(&params),
        seed,
        ingest_order: ingest_indices.iter().map(|&i| i as u32 + 1).collect(),
        party_messages: n,
        party_message_bytes: params.message_len(),
        broadcasts: broadcasts.len(),
        broadcast_bytes,
        total_bytes: party_bytes + broadcast_bytes,
        counters: *relay.counters(),
        parties: party_reports,
    };
    write_json(&report, Some(out))?;
    eprintln!("elapsed: {:.3?}", start.elapsed());
    Ok(())
}

struct GossipArgs {
    graph: PathBuf,
    parties: Vec<PathBuf>,
    placement: PathBuf,
    m: u64,
    d: u32,
    c: u32,
    owners: bool,
    seed: u64,
    max_rounds: u32,
    out: PathBuf,
    rounds_csv: Option<PathBuf>,
}

fn cmd_gossip_sim(args: GossipArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let graph = input::read_graph(&args.graph)?;
    let n = args.parties.len();
    let mode = if args.owners { Mode::Owner } else { Mode::Plain };
    let owner_count = if args.owners { n as u32 } else { 1 };
    let params = SketchParams::new(choose_field(args.m, owner_count, args.d, args.c)?);

    let mut party_sets = Vec::with_capacity(n);
    for file in &args.parties {
        party_sets.push(input::read_key_set(file, args.m)?);
    }
    let placement = input::read_placement(&args.placement)?;

    let conductance = if graph.vertex_count() <= gossip::CONDUCTANCE_VERTEX_LIMIT {
        gossip::conductance(&graph).ok().map(|(num, den)| format!("{num}/{den}"))
    } else {
        None
    };

    let cfg = SimConfig {
        graph,
        params,
        mode,
        placement,
        party_sets,
        seed: args.seed,
        max_rounds: args.max_rounds,
    };
    let log = gossip::simulate(&cfg)?;

    if let Some(csv_path) = &args.rounds_csv {
        write_rounds_csv(&log.rows, csv_path)?;
    }
    let report = GossipReport::from_log(
        &log,
        GossipReportHead {
            params: ParamsReport::new(&params),
            seed: args.seed,
            max_rounds: args.max_rounds,
            vertices: cfg.graph.vertex_count(),
            edges: cfg.graph.edge_count(),
            conductance,
        },
    );
    write_json(&report, Some(&args.out))?;
    if log.completion_round.is_none() {
        eprintln!("did not complete within {} rounds", args.max_rounds);
    }
    eprintln!("elapsed: {:.3?}", start.elapsed());
    Ok(())
}

fn cmd_conductance(graph: &std::path::Path) -> Result<(), CliError> {
    let graph = input::read_graph(graph)?;
    let (num, den) = gossip::conductance(&graph).map_err(CliError::from)?;
    println!("{num}/{den}");
    Ok(())
}

fn cmd_field_find(m: u64, num_parties: u32, d: u32, c: u32) -> Result<(), CliError> {
    let params = SketchParams::new(choose_field(m, num_parties, d, c)?);
    println!("q = {}", params.q());
    let points: Vec<String> = params.points().map(|p| p.to_string()).collect();
    println!("points = {}", points.join(" "));
    println!("message_bytes = {}", params.message_len());
    Ok(())
}

fn cmd_sketch(
    keys: Option<PathBuf>,
    m: Option<u64>,
    d: Option<u32>,
    c: Option<u32>,
    out: Option<PathBuf>,
    inspect: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(path) = inspect {
        if keys.is_some() || m.is_some() || d.is_some() || c.is_some() || out.is_some() {
            return Err(CliError::Config(
                "--inspect cannot be combined with encoding flags".into(),
            ));
        }
        let bytes = fs::read(&path)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))?;
        let sketch = Sketch::from_bytes(&bytes)?;
        let summary = SketchInspect {
            params: ParamsReport::new(sketch.params()),
            owner_encoded: sketch.owner_encoded(),
            cardinality: sketch.cardinality(),
            evals: sketch.evals().to_vec(),
        };
        return write_json(&summary, None);
    }
    let (keys, m, d, out) = match (keys, m, d, out) {
        (Some(k), Some(m), Some(d), Some(o)) => (k, m, d, o),
        _ => {
            return Err(CliError::Config(
                "encoding needs --keys, --m, --d and --out (or use --inspect)".into(),
            ))
        }
    };
    let params = SketchParams::new(choose_field(m, 1, d, c.unwrap_or(2))?);
    let key_set: BTreeSet<u64> = input::read_key_set(&keys, m)?;
    let sketch = Sketch::of_set(key_set.iter().copied(), &params)?;
    let bytes = sketch.to_bytes();
    fs::write(&out, &bytes).map_err(|e| CliError::Config(format!("{}: {}", out.display(), e)))?;
    eprintln!("wrote {} bytes to {}", bytes.len(), out.display());
    Ok(())
}
