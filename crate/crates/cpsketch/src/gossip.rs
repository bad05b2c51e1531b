//! PUSH-PULL gossip reconciliation on arbitrary connected graphs.
//!
//! Parties sit on (some of the) vertices. Each synchronous round has a push
//! sub-round and a pull sub-round. In the push sub-round every vertex picks
//! a uniform random neighbor and sends it its current payload; all pushes
//! read the pre-sub-round state, then land in vertex order. In the pull
//! sub-round every vertex picks a neighbor and takes a copy of that
//! neighbor's (post-push) payload. A vertex therefore initiates exactly one
//! contact per sub-round, and the payload of one contact is one sketch in
//! plain mode or two sketches plus a leader label in owner mode.
//!
//! All randomness derives from the run seed: the contact and any combine it
//! triggers draw from a ChaCha8 stream seeded by mixing
//! `(seed, round, sub_round, vertex)` through splitmix64, so runs are
//! reproducible byte for byte regardless of scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::relay::{Mode, PartyRecovery};
use crate::sketch::{self, OwnerElement, Sketch, SketchError, SketchParams};

/// Conductance enumerates all vertex subsets; cap the blowup.
pub const CONDUCTANCE_VERTEX_LIMIT: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GossipError {
    #[error("graph file line {line}: {reason}")]
    GraphParse { line: usize, reason: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(&'static str),
    #[error("graph is not connected")]
    Disconnected,
    #[error("{vertices} vertices exceed the conductance limit of {limit}")]
    GraphTooLarge { vertices: u32, limit: u32 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Simple undirected graph, vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    edges: usize,
}

impl Graph {
    pub fn new(n: u32, edges: &[(u32, u32)]) -> Result<Graph, GossipError> {
        if n == 0 {
            return Err(GossipError::InvalidGraph("no vertices"));
        }
        let mut adj = vec![Vec::new(); n as usize];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GossipError::InvalidGraph("edge endpoint out of range"));
            }
            if u == v {
                return Err(GossipError::InvalidGraph("self-loop"));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GossipError::InvalidGraph("duplicate edge"));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        Ok(Graph { adj, edges: edges.len() })
    }

    /// Parses the `V E` header followed by one `u v` pair per line. Blank
    /// lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Graph, GossipError> {
        let mut header: Option<(u32, usize)> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse_u32 = |s: Option<&str>, what: &str| -> Result<u32, GossipError> {
                s.and_then(|t| t.parse().ok()).ok_or_else(|| GossipError::GraphParse {
                    line: idx + 1,
                    reason: format!("expected {what}"),
                })
            };
            if header.is_none() {
                let v = parse_u32(fields.next(), "vertex count")?;
                let e = parse_u32(fields.next(), "edge count")?;
                if fields.next().is_some() {
                    return Err(GossipError::GraphParse {
                        line: idx + 1,
                        reason: "trailing fields after header".into(),
                    });
                }
                header = Some((v, e as usize));
            } else {
                let u = parse_u32(fields.next(), "edge endpoint")?;
                let v = parse_u32(fields.next(), "edge endpoint")?;
                if fields.next().is_some() {
                    return Err(GossipError::GraphParse {
                        line: idx + 1,
                        reason: "trailing fields after edge".into(),
                    });
                }
                edges.push((u, v));
            }
        }
        let Some((n, e)) = header else {
            return Err(GossipError::GraphParse { line: 1, reason: "missing header".into() });
        };
        if edges.len() != e {
            return Err(GossipError::GraphParse {
                line: text.lines().count(),
                reason: format!("header declares {e} edges, found {}", edges.len()),
            });
        }
        Graph::new(n, &edges)
    }

    pub fn vertex_count(&self) -> u32 {
        self.adj.len() as u32
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn is_connected(&self) -> bool {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    pub fn complete(n: u32) -> Graph {
        let edges: Vec<(u32, u32)> =
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Graph::new(n, &edges).unwrap()
    }

    /// Cycle on `n >= 3` vertices.
    pub fn cycle(n: u32) -> Graph {
        assert!(n >= 3);
        let edges: Vec<(u32, u32)> = (0..n).map(|u| (u, (u + 1) % n)).collect();
        Graph::new(n, &edges).unwrap()
    }

    /// Star with vertex 0 at the center, `n >= 2` vertices total.
    pub fn star(n: u32) -> Graph {
        assert!(n >= 2);
        let edges: Vec<(u32, u32)> = (1..n).map(|v| (0, v)).collect();
        Graph::new(n, &edges).unwrap()
    }

    pub fn path(n: u32) -> Graph {
        assert!(n >= 2);
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|u| (u, u + 1)).collect();
        Graph::new(n, &edges).unwrap()
    }
}

/// Exact conductance as a reduced fraction `(num, den)`:
/// the minimum of `cut(A) / vol(A)` over vertex subsets with
/// `0 < 2 vol(A) <= vol(V)`.
///
/// Subsets are enumerated in Gray-code order so each step flips one vertex
/// and updates the cut and volume incrementally.
pub fn conductance(g: &Graph) -> Result<(u64, u64), GossipError> {
    let n = g.vertex_count();
    if n < 2 {
        return Err(GossipError::InvalidGraph("conductance needs at least two vertices"));
    }
    if n > CONDUCTANCE_VERTEX_LIMIT {
        return Err(GossipError::GraphTooLarge { vertices: n, limit: CONDUCTANCE_VERTEX_LIMIT });
    }
    if !g.is_connected() {
        return Err(GossipError::Disconnected);
    }
    let vol_total: u64 = (0..n).map(|v| g.degree(v) as u64).sum();
    let mut mask: u64 = 0;
    let mut vol: u64 = 0;
    let mut cut: u64 = 0;
    let mut best: Option<(u64, u64)> = None;
    for i in 1u64..(1u64 << n) {
        let v = i.trailing_zeros();
        let deg = g.degree(v) as u64;
        let joining = mask & (1 << v) == 0;
        if joining {
            let inside = g.neighbors(v).iter().filter(|&&w| mask & (1 << w) != 0).count() as u64;
            mask |= 1 << v;
            vol += deg;
            cut = cut + deg - 2 * inside;
        } else {
            mask &= !(1 << v);
            let inside = g.neighbors(v).iter().filter(|&&w| mask & (1 << w) != 0).count() as u64;
            vol -= deg;
            cut = cut + 2 * inside - deg;
        }
        if mask != 0 && 2 * vol <= vol_total {
            // cut/vol < best_cut/best_vol by cross-multiplication.
            let better = match best {
                None => true,
                Some((bc, bv)) => cut * bv < bc * vol,
            };
            if better {
                best = Some((cut, vol));
            }
        }
    }
    let (c, v) = best.expect("connected graph with n >= 2 has a candidate cut");
    let g = gcd_u64(c, v);
    Ok((c / g, v / g))
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Plain-mode payloads merge with [`sketch::combine_union`].
pub use crate::sketch::combine_union as combine_plain;

/// Owner-mode gossip payload for a group `C` of parties: the union of their
/// sets with owner tags, the intersection (value-level), and the smallest
/// party label in the group.
///
/// Tag 0 stands for "owned by the leader": the leader's label never needs
/// spelling out, and elements of the intersection (held by everyone, so
/// attributed to the leader as smallest holder) stay value-level. All other
/// tags are 1-based party labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerTuple {
    union: Sketch,
    intersection: Sketch,
    leader: u32,
    known: BTreeSet<u32>,
}

impl OwnerTuple {
    /// The singleton tuple for one party: union and intersection both
    /// sketch its own set, every element implicitly owned by itself.
    pub fn for_party(
        label: u32,
        keys: &BTreeSet<u64>,
        params: &SketchParams,
    ) -> Result<Self, GossipError> {
        if label == 0 || label > params.owner_count() {
            return Err(GossipError::InvalidConfig("party label outside the tag space"));
        }
        if let Some(&key) = keys.iter().find(|&&k| k >= params.m()) {
            return Err(SketchError::KeyOutOfRange { key, bound: params.m() }.into());
        }
        let sk = Sketch::of_encoded(keys.iter().copied(), params, true)?;
        Ok(OwnerTuple {
            union: sk.clone(),
            intersection: sk,
            leader: label,
            known: BTreeSet::from([label]),
        })
    }

    pub fn union(&self) -> &Sketch {
        &self.union
    }

    pub fn intersection(&self) -> &Sketch {
        &self.intersection
    }

    pub fn leader(&self) -> u32 {
        self.leader
    }

    pub fn known(&self) -> &BTreeSet<u32> {
        &self.known
    }

    /// Wire size of the tuple: two sketches plus the leader label.
    pub fn message_bytes(&self) -> u64 {
        2 * self.union.params().message_len() as u64 + 4
    }

    /// What one party learns from this tuple: every union element it does
    /// not hold itself, with the holder's label (tag 0 resolves to the
    /// leader).
    pub fn decode<R: Rng + ?Sized>(
        &self,
        own_keys: &BTreeSet<u64>,
        rng: &mut R,
    ) -> Result<Vec<OwnerElement>, GossipError> {
        let params = *self.union.params();
        let tagged = sketch::recover_missing(&self.union, &self.intersection, rng)?;
        let mut out = Vec::new();
        for encoded in tagged {
            let elem = params.decode_owner(encoded)?;
            let owner = if elem.owner == 0 { self.leader } else { elem.owner };
            if owner == 0 || owner > params.owner_count() {
                return Err(SketchError::VerificationFailed.into());
            }
            if !own_keys.contains(&elem.value) {
                out.push(OwnerElement { value: elem.value, owner });
            }
        }
        out.sort();
        Ok(out)
    }
}

/// Merges two group tuples into the tuple of the combined group.
///
/// With `C` the side holding the smaller leader and `D` the other:
/// the new intersection is `I_C` minus whatever `D`'s intersection lacks;
/// both unions are then decoded relative to that new intersection, `D`-side
/// tag 0 is materialized to `D`'s leader (it no longer means the combined
/// leader), and per-value owners merge by minimum, with tag 0 (the combined
/// leader, smallest of all labels) winning any tie it appears in.
pub fn combine_tuples<R: Rng + ?Sized>(
    a: &OwnerTuple,
    b: &OwnerTuple,
    rng: &mut R,
) -> Result<OwnerTuple, GossipError> {
    let (c, d) = if a.leader <= b.leader { (a, b) } else { (b, a) };
    let params = *c.union.params();
    if d.union.params() != &params {
        return Err(SketchError::ParamsMismatch.into());
    }
    let m = params.m();

    // New intersection: strip I_C of the elements D's intersection lacks.
    let (dropped, _) = sketch::recover_difference(&c.intersection, &d.intersection, rng)?;
    if dropped.iter().any(|&v| v >= m) {
        return Err(SketchError::VerificationFailed.into());
    }
    let drop_sketch = Sketch::of_encoded(dropped.iter().copied(), &params, true)?;
    let intersection = c.intersection.pointwise_div(&drop_sketch)?;

    // Both sides' union elements beyond the new intersection, tags decoded.
    let mut merged: BTreeMap<u64, u32> = BTreeMap::new();
    for (side, side_leader) in [(c, None), (d, Some(d.leader))] {
        let extra = sketch::recover_missing(&side.union, &intersection, rng)?;
        for encoded in extra {
            let elem = params.decode_owner(encoded)?;
            let tag = match (elem.owner, side_leader) {
                // D's "leader" tag only stays 0 if the leaders coincide.
                (0, Some(l)) if l != c.leader => l,
                (tag, _) => tag,
            };
            if tag > params.owner_count() {
                return Err(SketchError::VerificationFailed.into());
            }
            merged
                .entry(elem.value)
                .and_modify(|t| *t = (*t).min(tag))
                .or_insert(tag);
        }
    }

    let encoded: Vec<u64> = merged
        .iter()
        .map(|(&value, &tag)| params.encode_owner(value, tag))
        .collect::<Result<_, _>>()?;
    let tagged = Sketch::of_encoded(encoded, &params, true)?;
    let union = intersection.pointwise_mul(&tagged)?;
    Ok(OwnerTuple {
        union,
        intersection,
        leader: c.leader,
        known: c.known.union(&d.known).copied().collect(),
    })
}

/// Everything one simulation run needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub graph: Graph,
    pub params: SketchParams,
    pub mode: Mode,
    /// Vertex -> 1-based party label; a bijection onto `1..=N`. Vertices
    /// without a party start uninformed.
    pub placement: BTreeMap<u32, u32>,
    /// Party `i` holds `party_sets[i - 1]`.
    pub party_sets: Vec<BTreeSet<u64>>,
    pub seed: u64,
    pub max_rounds: u32,
}

/// A vertex's payload between sub-rounds.
#[derive(Debug, Clone)]
pub enum VertexState {
    Idle,
    Plain { sketch: Sketch, known: BTreeSet<u32> },
    Owner(OwnerTuple),
}

impl VertexState {
    fn known_count(&self) -> u32 {
        match self {
            VertexState::Idle => 0,
            VertexState::Plain { known, .. } => known.len() as u32,
            VertexState::Owner(t) => t.known.len() as u32,
        }
    }

    fn payload_sketches(&self) -> u32 {
        match self {
            VertexState::Idle => 0,
            VertexState::Plain { .. } => 1,
            VertexState::Owner(_) => 2,
        }
    }

    fn payload_bytes(&self, params: &SketchParams) -> u64 {
        match self {
            VertexState::Idle => 0,
            VertexState::Plain { .. } => params.message_len() as u64,
            VertexState::Owner(t) => t.message_bytes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubRound {
    Push,
    Pull,
}

impl std::fmt::Display for SubRound {
    fn fmt(&self, w: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        w.write_str(match self {
            SubRound::Push => "push",
            SubRound::Pull => "pull",
        })
    }
}

/// One vertex's view after one sub-round: how many parties it has heard
/// from and how many payload bytes its initiated contact moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubRoundRow {
    pub round: u32,
    pub sub_round: SubRound,
    pub vertex: u32,
    pub known_count: u32,
    pub bytes_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartyReport {
    pub party: u32,
    pub vertex: u32,
    pub recovered: PartyRecovery,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimLog {
    pub mode: Mode,
    /// First round after which every party vertex had heard from all
    /// parties; `None` if `max_rounds` ran out.
    pub completion_round: Option<u32>,
    pub rounds_run: u32,
    pub total_messages: u64,
    pub total_bytes: u64,
    /// Largest payload (in sketches) any single contact carried.
    pub max_payload_sketches: u32,
    /// Per (round, sub-round, vertex) progress; written to CSV, not JSON.
    #[serde(skip)]
    pub rows: Vec<SubRoundRow>,
    /// Filled once complete: each party's recovered missing elements.
    pub recoveries: Vec<PartyReport>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha8 stream per (round, sub-round, vertex) event.
/// Sub-round 2 at round 0 is reserved for decoding.
fn event_rng(seed: u64, round: u32, sub: u8, vertex: u32) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ round as u64);
    h = splitmix64(h ^ ((sub as u64) << 32));
    h = splitmix64(h ^ vertex as u64);
    ChaCha8Rng::seed_from_u64(h)
}

fn validate(cfg: &SimConfig) -> Result<(), GossipError> {
    let n_parties = cfg.party_sets.len() as u32;
    if n_parties == 0 {
        return Err(GossipError::InvalidConfig("no parties"));
    }
    if cfg.max_rounds == 0 {
        return Err(GossipError::InvalidConfig("max_rounds must be positive"));
    }
    if !cfg.graph.is_connected() {
        return Err(GossipError::Disconnected);
    }
    let expected_owners = match cfg.mode {
        Mode::Plain => 1,
        Mode::Owner => n_parties,
    };
    if cfg.params.owner_count() != expected_owners {
        return Err(GossipError::InvalidConfig("owner_count does not match mode and party count"));
    }
    let mut labels = BTreeSet::new();
    for (&vertex, &label) in &cfg.placement {
        if vertex >= cfg.graph.vertex_count() {
            return Err(GossipError::InvalidConfig("placement names an unknown vertex"));
        }
        if label == 0 || label > n_parties {
            return Err(GossipError::InvalidConfig("placement names an unknown party"));
        }
        if !labels.insert(label) {
            return Err(GossipError::InvalidConfig("party placed twice"));
        }
    }
    if labels.len() as u32 != n_parties {
        return Err(GossipError::InvalidConfig("every party needs a vertex"));
    }
    Ok(())
}

fn initial_state(cfg: &SimConfig, label: u32) -> Result<VertexState, GossipError> {
    let keys = &cfg.party_sets[label as usize - 1];
    match cfg.mode {
        Mode::Plain => {
            let sketch = Sketch::of_set(keys.iter().copied(), &cfg.params)?;
            Ok(VertexState::Plain { sketch, known: BTreeSet::from([label]) })
        }
        Mode::Owner => Ok(VertexState::Owner(OwnerTuple::for_party(label, keys, &cfg.params)?)),
    }
}

/// Merges an incoming payload into a vertex's state.
fn absorb<R: Rng + ?Sized>(
    dst: &mut VertexState,
    src: &VertexState,
    rng: &mut R,
) -> Result<(), GossipError> {
    match (&mut *dst, src) {
        (_, VertexState::Idle) => Ok(()),
        (VertexState::Idle, s) => {
            *dst = s.clone();
            Ok(())
        }
        (VertexState::Plain { sketch, known }, VertexState::Plain { sketch: s2, known: k2 }) => {
            *sketch = combine_plain(sketch, s2, rng)?;
            known.extend(k2.iter().copied());
            Ok(())
        }
        (VertexState::Owner(t1), VertexState::Owner(t2)) => {
            *t1 = combine_tuples(t1, t2, rng)?;
            Ok(())
        }
        _ => Err(GossipError::InvalidConfig("mixed payload modes")),
    }
}

/// Runs synchronous PUSH-PULL rounds until every party vertex has heard
/// from all parties or `max_rounds` elapse. Running out of rounds is not an
/// error; it shows up as `completion_round: None`.
pub fn simulate(cfg: &SimConfig) -> Result<SimLog, GossipError> {
    validate(cfg)?;
    let n = cfg.graph.vertex_count();
    let n_parties = cfg.party_sets.len() as u32;
    let all_labels: BTreeSet<u32> = (1..=n_parties).collect();

    let mut states: Vec<VertexState> = vec![VertexState::Idle; n as usize];
    for (&vertex, &label) in &cfg.placement {
        states[vertex as usize] = initial_state(cfg, label)?;
    }

    let mut log = SimLog {
        mode: cfg.mode,
        completion_round: None,
        rounds_run: 0,
        total_messages: 0,
        total_bytes: 0,
        max_payload_sketches: 0,
        rows: Vec::new(),
        recoveries: Vec::new(),
    };

    'rounds: for round in 1..=cfg.max_rounds {
        log.rounds_run = round;
        for (sub_idx, sub) in [(0u8, SubRound::Push), (1u8, SubRound::Pull)] {
            let snapshot = states.clone();
            let mut bytes_sent = vec![0u64; n as usize];
            for v in 0..n {
                if cfg.graph.degree(v) == 0 {
                    continue; // single-vertex graph: nobody to talk to
                }
                let mut rng = event_rng(cfg.seed, round, sub_idx, v);
                let peer = cfg.graph.neighbors(v)[rng.gen_range(0..cfg.graph.degree(v))];
                let (payload, target) = match sub {
                    SubRound::Push => (&snapshot[v as usize], peer),
                    SubRound::Pull => (&snapshot[peer as usize], v),
                };
                let moved = payload.payload_bytes(&cfg.params);
                if moved > 0 {
                    log.total_messages += 1;
                    log.max_payload_sketches =
                        log.max_payload_sketches.max(payload.payload_sketches());
                    // Avoid aliasing: payload lives in the snapshot.
                    let incoming = payload.clone();
                    absorb(&mut states[target as usize], &incoming, &mut rng)?;
                }
                bytes_sent[v as usize] = moved;
                log.total_bytes += moved;
            }
            for v in 0..n {
                log.rows.push(SubRoundRow {
                    round,
                    sub_round: sub,
                    vertex: v,
                    known_count: states[v as usize].known_count(),
                    bytes_sent: bytes_sent[v as usize],
                });
            }
        }
        let complete = cfg
            .placement
            .keys()
            .all(|&v| match &states[v as usize] {
                VertexState::Idle => false,
                VertexState::Plain { known, .. } => *known == all_labels,
                VertexState::Owner(t) => t.known == all_labels,
            });
        if complete {
            log.completion_round = Some(round);
            break 'rounds;
        }
    }

    if log.completion_round.is_some() {
        log.recoveries = decode_all(cfg, &states)?;
    }
    Ok(log)
}

/// Decodes every party's final state into the elements it was missing.
/// Requires completion; decoding an incomplete state would just report a
/// difference-bound failure.
pub fn decode_all(cfg: &SimConfig, states: &[VertexState]) -> Result<Vec<PartyReport>, GossipError> {
    let mut reports = Vec::new();
    for (&vertex, &label) in &cfg.placement {
        let keys = &cfg.party_sets[label as usize - 1];
        let mut rng = event_rng(cfg.seed, 0, 2, vertex);
        let recovered = match &states[vertex as usize] {
            VertexState::Idle => {
                return Err(GossipError::InvalidConfig("party vertex has no state"))
            }
            VertexState::Plain { sketch, .. } => {
                let own = Sketch::of_set(keys.iter().copied(), &cfg.params)?;
                PartyRecovery::Plain(sketch::recover_missing(sketch, &own, &mut rng)?)
            }
            VertexState::Owner(tuple) => PartyRecovery::Owner(tuple.decode(keys, &mut rng)?),
        };
        reports.push(PartyReport { party: label, vertex, recovered });
    }
    reports.sort_by_key(|r| r.party);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::choose_field;

    fn params(m: u64, owners: u32, d: u32, c: u32) -> SketchParams {
        SketchParams::new(choose_field(m, owners, d, c).unwrap())
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn graph_construction_and_validation() {
        let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.neighbors(0), &[1, 3]);
        assert!(g.is_connected());

        assert_eq!(
            Graph::new(3, &[(0, 0)]),
            Err(GossipError::InvalidGraph("self-loop"))
        );
        assert_eq!(
            Graph::new(3, &[(0, 1), (1, 0)]),
            Err(GossipError::InvalidGraph("duplicate edge"))
        );
        assert_eq!(
            Graph::new(3, &[(0, 5)]),
            Err(GossipError::InvalidGraph("edge endpoint out of range"))
        );
        assert!(!Graph::new(4, &[(0, 1), (2, 3)]).unwrap().is_connected());
    }

    #[test]
    fn graph_parse_formats() {
        let g = Graph::parse("# square\n4 4\n0 1\n1 2\n2 3\n3 0\n").unwrap();
        assert_eq!(g, Graph::cycle(4));

        assert!(matches!(
            Graph::parse(""),
            Err(GossipError::GraphParse { line: 1, .. })
        ));
        assert!(matches!(
            Graph::parse("2 1\n0 x\n"),
            Err(GossipError::GraphParse { line: 2, .. })
        ));
        assert!(matches!(
            Graph::parse("2 2\n0 1\n"),
            Err(GossipError::GraphParse { .. })
        ));
        assert!(matches!(
            Graph::parse("2 1\n0 1 9\n"),
            Err(GossipError::GraphParse { line: 2, .. })
        ));
    }

    #[test]
    fn conductance_known_graphs() {
        assert_eq!(conductance(&Graph::complete(4)).unwrap(), (2, 3));
        assert_eq!(conductance(&Graph::cycle(8)).unwrap(), (1, 4));
        assert_eq!(conductance(&Graph::complete(2)).unwrap(), (1, 1));
        assert_eq!(conductance(&Graph::complete(16)).unwrap(), (8, 15));
        assert_eq!(conductance(&Graph::cycle(16)).unwrap(), (1, 8));
        assert_eq!(conductance(&Graph::star(8)).unwrap(), (1, 1));
        assert_eq!(conductance(&Graph::path(4)).unwrap(), (1, 3));

        assert!(matches!(
            conductance(&Graph::new(30, &(0..29).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()),
            Err(GossipError::GraphTooLarge { vertices: 30, limit: 24 })
        ));
        assert_eq!(
            conductance(&Graph::new(4, &[(0, 1), (2, 3)]).unwrap()),
            Err(GossipError::Disconnected)
        );
    }

    /// From-scratch reference: enumerate plain bitmasks, recompute cut and
    /// volume per subset.
    fn conductance_reference(g: &Graph) -> (u64, u64) {
        let n = g.vertex_count();
        let vol_total: u64 = (0..n).map(|v| g.degree(v) as u64).sum();
        let mut best: Option<(u64, u64)> = None;
        for mask in 1u64..(1 << n) {
            let vol: u64 = (0..n).filter(|&v| mask & (1 << v) != 0).map(|v| g.degree(v) as u64).sum();
            if vol == 0 || 2 * vol > vol_total {
                continue;
            }
            let mut cut = 0u64;
            for u in 0..n {
                if mask & (1 << u) == 0 {
                    continue;
                }
                for &w in g.neighbors(u) {
                    if mask & (1 << w) == 0 {
                        cut += 1;
                    }
                }
            }
            let better = match best {
                None => true,
                Some((bc, bv)) => cut * bv < bc * vol,
            };
            if better {
                best = Some((cut, vol));
            }
        }
        let (c, v) = best.unwrap();
        let g = gcd_u64(c, v);
        (c / g, v / g)
    }

    #[test]
    fn conductance_matches_reference_on_random_graphs() {
        let mut r = rng(2024);
        for _ in 0..15 {
            let n = r.gen_range(2..=9u32);
            // Random spanning tree plus extra edges keeps it connected.
            let mut edges: Vec<(u32, u32)> = (1..n).map(|v| (r.gen_range(0..v), v)).collect();
            for _ in 0..r.gen_range(0..=n) {
                let u = r.gen_range(0..n);
                let v = r.gen_range(0..n);
                if u != v && !edges.contains(&(u.min(v), u.max(v))) {
                    edges.push((u.min(v), u.max(v)));
                }
            }
            let g = Graph::new(n, &edges).unwrap();
            assert_eq!(conductance(&g).unwrap(), conductance_reference(&g));
        }
    }

    #[test]
    fn combine_tuples_fixture() {
        // S1 = {1,4}, S2 = {4,7}, m = 10: the combined union keeps 1
        // leader-tagged (encoded 1), 4 in the intersection, and 7 tagged
        // with party 2 (encoded 27).
        let p = params(10, 2, 2, 0);
        let t1 = OwnerTuple::for_party(1, &BTreeSet::from([1, 4]), &p).unwrap();
        let t2 = OwnerTuple::for_party(2, &BTreeSet::from([4, 7]), &p).unwrap();
        let e = combine_tuples(&t1, &t2, &mut rng(1)).unwrap();
        assert_eq!(e.leader(), 1);
        assert_eq!(e.known(), &BTreeSet::from([1, 2]));
        assert_eq!(e.union(), &Sketch::of_encoded([1u64, 4, 27], &p, true).unwrap());
        assert_eq!(e.intersection(), &Sketch::of_encoded([4u64], &p, true).unwrap());

        // Order must not matter.
        let e2 = combine_tuples(&t2, &t1, &mut rng(2)).unwrap();
        assert_eq!(e, e2);

        // Decode from each party's perspective.
        assert_eq!(
            e.decode(&BTreeSet::from([1, 4]), &mut rng(3)).unwrap(),
            vec![OwnerElement { value: 7, owner: 2 }]
        );
        assert_eq!(
            e.decode(&BTreeSet::from([4, 7]), &mut rng(4)).unwrap(),
            vec![OwnerElement { value: 1, owner: 1 }]
        );
    }

    #[test]
    fn combine_tuples_idempotent_and_associative_enough() {
        let p = params(50, 3, 6, 2);
        let t1 = OwnerTuple::for_party(1, &BTreeSet::from([1, 2, 30]), &p).unwrap();
        let t2 = OwnerTuple::for_party(2, &BTreeSet::from([2, 30, 45]), &p).unwrap();
        let t3 = OwnerTuple::for_party(3, &BTreeSet::from([2, 7]), &p).unwrap();

        let twice = combine_tuples(&t1, &t1, &mut rng(5)).unwrap();
        assert_eq!(twice, t1);

        // ((1+2)+3) and (1+(2+3)) agree.
        let left = combine_tuples(&combine_tuples(&t1, &t2, &mut rng(6)).unwrap(), &t3, &mut rng(7)).unwrap();
        let right = combine_tuples(&t1, &combine_tuples(&t2, &t3, &mut rng(8)).unwrap(), &mut rng(9)).unwrap();
        assert_eq!(left, right);

        // Re-absorbing a singleton changes nothing.
        let again = combine_tuples(&left, &t2, &mut rng(10)).unwrap();
        assert_eq!(again, left);
    }

    #[test]
    fn owner_tags_resolve_to_smallest_holder() {
        let p = params(50, 3, 6, 2);
        let sets = [
            BTreeSet::from([1u64, 2, 30]),
            BTreeSet::from([2u64, 30, 45]),
            BTreeSet::from([2u64, 7]),
        ];
        let tuples: Vec<OwnerTuple> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| OwnerTuple::for_party(i as u32 + 1, s, &p).unwrap())
            .collect();
        let mut acc = tuples[0].clone();
        for t in &tuples[1..] {
            acc = combine_tuples(&acc, t, &mut rng(99)).unwrap();
        }
        // Party 3's view: missing 1, 30, 45; smallest holders 1, 1, 2.
        let got = acc.decode(&sets[2], &mut rng(100)).unwrap();
        assert_eq!(
            got,
            vec![
                OwnerElement { value: 1, owner: 1 },
                OwnerElement { value: 30, owner: 1 },
                OwnerElement { value: 45, owner: 2 },
            ]
        );
    }

    fn plain_config(seed: u64) -> SimConfig {
        SimConfig {
            graph: Graph::complete(4),
            params: params(1000, 1, 8, 2),
            mode: Mode::Plain,
            placement: BTreeMap::from([(0, 1), (1, 2), (3, 3)]),
            party_sets: vec![
                BTreeSet::from([1, 2, 3]),
                BTreeSet::from([2, 3, 500]),
                BTreeSet::from([3, 999]),
            ],
            seed,
            max_rounds: 64,
        }
    }

    #[test]
    fn plain_simulation_completes_and_decodes() {
        let cfg = plain_config(12345);
        let log = simulate(&cfg).unwrap();
        assert!(log.completion_round.is_some());
        assert_eq!(log.max_payload_sketches, 1);
        let union: BTreeSet<u64> = cfg.party_sets.iter().flatten().copied().collect();
        assert_eq!(log.recoveries.len(), 3);
        for report in &log.recoveries {
            let own = &cfg.party_sets[report.party as usize - 1];
            let want: BTreeSet<u64> = union.difference(own).copied().collect();
            assert_eq!(report.recovered, PartyRecovery::Plain(want));
        }
        // Row accounting: two sub-rounds per round, one row per vertex.
        assert_eq!(
            log.rows.len() as u32,
            log.rounds_run * 2 * cfg.graph.vertex_count()
        );
        let max_bytes = cfg.params.message_len() as u64;
        assert!(log.rows.iter().all(|r| r.bytes_sent <= max_bytes));
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate(&plain_config(7)).unwrap();
        let b = simulate(&plain_config(7)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.recoveries, b.recoveries);
        assert_eq!(a.completion_round, b.completion_round);
        assert_eq!(a.total_bytes, b.total_bytes);
    }

    #[test]
    fn owner_simulation_reports_true_holders() {
        let cfg = SimConfig {
            graph: Graph::cycle(6),
            params: params(200, 4, 8, 2),
            mode: Mode::Owner,
            placement: BTreeMap::from([(0, 2), (2, 1), (3, 4), (5, 3)]),
            party_sets: vec![
                BTreeSet::from([10, 20, 30]),
                BTreeSet::from([20, 30, 40]),
                BTreeSet::from([30, 111]),
                BTreeSet::from([30, 40, 199]),
            ],
            seed: 99,
            max_rounds: 64,
        };
        let log = simulate(&cfg).unwrap();
        assert!(log.completion_round.is_some());
        assert_eq!(log.max_payload_sketches, 2);
        let union: BTreeSet<u64> = cfg.party_sets.iter().flatten().copied().collect();
        for report in &log.recoveries {
            let own = &cfg.party_sets[report.party as usize - 1];
            let PartyRecovery::Owner(elems) = &report.recovered else {
                panic!("wrong mode");
            };
            let values: BTreeSet<u64> = elems.iter().map(|e| e.value).collect();
            assert_eq!(values, union.difference(own).copied().collect());
            for e in elems {
                // Owner is the smallest-labelled party actually holding it.
                let smallest = (1..=4)
                    .find(|&l| cfg.party_sets[l as usize - 1].contains(&e.value))
                    .unwrap();
                assert_eq!(e.owner, smallest, "value {}", e.value);
            }
        }
    }

    #[test]
    fn max_rounds_exhaustion_is_not_fatal() {
        let mut cfg = plain_config(3);
        cfg.max_rounds = 1;
        cfg.graph = Graph::path(8);
        cfg.placement = BTreeMap::from([(0, 1), (4, 2), (7, 3)]);
        let log = simulate(&cfg).unwrap();
        assert_eq!(log.completion_round, None);
        assert_eq!(log.rounds_run, 1);
        assert!(log.recoveries.is_empty());
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = plain_config(1);
        cfg.placement.insert(2, 3);
        assert_eq!(
            simulate(&cfg).unwrap_err(),
            GossipError::InvalidConfig("party placed twice")
        );

        let mut cfg = plain_config(1);
        cfg.placement.remove(&3);
        assert_eq!(
            simulate(&cfg).unwrap_err(),
            GossipError::InvalidConfig("every party needs a vertex")
        );

        let mut cfg = plain_config(1);
        cfg.graph = Graph::new(5, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(simulate(&cfg).unwrap_err(), GossipError::Disconnected);

        let mut cfg = plain_config(1);
        cfg.mode = Mode::Owner; // owner_count is 1 but there are 3 parties
        assert_eq!(
            simulate(&cfg).unwrap_err(),
            GossipError::InvalidConfig("owner_count does not match mode and party count")
        );
    }
}
