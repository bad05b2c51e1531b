//! Star-topology reconciliation through a central relay.
//!
//! Every party sends one sketch of its key set; the relay folds them into a
//! running union (and, in owner mode, a running intersection plus a ledger
//! of who contributed what) and finally broadcasts just enough for each
//! party to recover the keys it is missing.
//!
//! Party messages are value-level sketches in both modes; owner attribution
//! comes from the ingest envelope, not the sketch contents. In owner mode
//! the relay re-encodes union-minus-intersection elements as
//! `value + m * (party - 1)` before the final broadcast, so parties learn
//! not just the missing keys but who holds them.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::sketch::{self, OwnerElement, Sketch, SketchError, SketchParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelayError {
    #[error("party index {0} is not valid here")]
    InvalidParty(u32),
    #[error("party {0} has already been ingested")]
    DuplicateParty(u32),
    #[error("relay has no ingested sketches")]
    EmptyRelay,
    #[error("message parameters do not match the relay's")]
    ParamsMismatch,
    #[error("message encoding does not match the relay mode")]
    ModeMismatch,
    #[error("broadcast bundle does not fit the mode")]
    BadBroadcast,
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Whether reconciliation carries owner attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    Owner,
}

/// Decode-side protocol work, for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub interpolations: u64,
    pub factorizations: u64,
}

/// One participant: its key set and the sketch it sends.
#[derive(Debug, Clone)]
pub struct PartyState {
    index: u32,
    keys: BTreeSet<u64>,
    sketch: Sketch,
}

impl PartyState {
    /// `index` is 1-based; owner mode additionally requires it to fit the
    /// field's tag space.
    pub fn new<I>(index: u32, keys: I, params: &SketchParams, mode: Mode) -> Result<Self, RelayError>
    where
        I: IntoIterator<Item = u64>,
    {
        if index == 0 || (mode == Mode::Owner && index > params.owner_count()) {
            return Err(RelayError::InvalidParty(index));
        }
        let keys: BTreeSet<u64> = keys.into_iter().collect();
        if let Some(&key) = keys.iter().find(|&&k| k >= params.m()) {
            return Err(SketchError::KeyOutOfRange { key, bound: params.m() }.into());
        }
        let sketch = Sketch::of_encoded(keys.iter().copied(), params, mode == Mode::Owner)?;
        Ok(PartyState { index, keys, sketch })
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn keys(&self) -> &BTreeSet<u64> {
        &self.keys
    }

    pub fn sketch(&self) -> &Sketch {
        &self.sketch
    }

    /// The single message this party sends to the relay.
    pub fn encode(&self) -> Vec<u8> {
        self.sketch.to_bytes()
    }
}

/// What a party learns from the final broadcast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyRecovery {
    /// Missing keys.
    Plain(BTreeSet<u64>),
    /// Missing keys, each with the 1-based index of a party holding it.
    Owner(Vec<OwnerElement>),
}

/// The relay's accumulated view between `ingest` calls.
#[derive(Debug)]
pub struct RelayState {
    params: SketchParams,
    mode: Mode,
    union: Option<Sketch>,
    intersection: Option<Sketch>,
    /// Owner mode: union-minus-intersection value -> first party (in
    /// arrival order) that held it.
    ledger: BTreeMap<u64, u32>,
    arrival: Vec<u32>,
    counters: OpCounters,
    rng: ChaCha8Rng,
}

impl RelayState {
    pub fn new(params: SketchParams, mode: Mode, seed: u64) -> Self {
        RelayState {
            params,
            mode,
            union: None,
            intersection: None,
            ledger: BTreeMap::new(),
            arrival: Vec::new(),
            counters: OpCounters::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn arrival_order(&self) -> &[u32] {
        &self.arrival
    }

    /// Owner ledger so far; empty in plain mode.
    pub fn ledger(&self) -> &BTreeMap<u64, u32> {
        &self.ledger
    }

    /// Folds one party message into the running state.
    ///
    /// Plain mode keeps a union sketch. Owner mode keeps union and
    /// intersection sketches plus the ledger: elements new to the union are
    /// credited to the sender, elements evicted from the intersection are
    /// credited to the first arrival (which, being in the intersection so
    /// far, held them all along).
    pub fn ingest(&mut self, sender: u32, message: &[u8]) -> Result<(), RelayError> {
        if sender == 0 || (self.mode == Mode::Owner && sender > self.params.owner_count()) {
            return Err(RelayError::InvalidParty(sender));
        }
        if self.arrival.contains(&sender) {
            return Err(RelayError::DuplicateParty(sender));
        }
        let incoming = Sketch::from_bytes(message)?;
        if incoming.params() != &self.params {
            return Err(RelayError::ParamsMismatch);
        }
        if incoming.owner_encoded() != (self.mode == Mode::Owner) {
            return Err(RelayError::ModeMismatch);
        }
        match self.mode {
            Mode::Plain => {
                self.union = Some(match self.union.take() {
                    None => incoming,
                    Some(u) => {
                        self.counters.interpolations += 1;
                        self.counters.factorizations += 2;
                        sketch::combine_union(&u, &incoming, &mut self.rng)?
                    }
                });
            }
            Mode::Owner => {
                if self.union.is_none() {
                    self.union = Some(incoming.clone());
                    self.intersection = Some(incoming);
                } else {
                    let union = self.union.take().unwrap();
                    let intersection = self.intersection.take().unwrap();
                    self.counters.interpolations += 2;
                    self.counters.factorizations += 4;
                    let (_, fresh) = sketch::recover_difference(&union, &incoming, &mut self.rng)?;
                    let (evicted, _) =
                        sketch::recover_difference(&intersection, &incoming, &mut self.rng)?;
                    // Party messages are value-level; recovered elements
                    // beyond the key universe mean someone cheated.
                    if fresh.iter().chain(&evicted).any(|&v| v >= self.params.m()) {
                        return Err(SketchError::VerificationFailed.into());
                    }
                    let graft = Sketch::of_encoded(fresh.iter().copied(), &self.params, true)?;
                    let drop = Sketch::of_encoded(evicted.iter().copied(), &self.params, true)?;
                    self.union = Some(union.pointwise_mul(&graft)?);
                    self.intersection = Some(intersection.pointwise_div(&drop)?);
                    let first = self.arrival[0];
                    for v in fresh {
                        self.ledger.insert(v, sender);
                    }
                    for v in evicted {
                        self.ledger.insert(v, first);
                    }
                }
            }
        }
        self.arrival.push(sender);
        Ok(())
    }

    /// Builds the broadcast bundle: one union sketch in plain mode; the
    /// owner-re-encoded union followed by the intersection in owner mode.
    pub fn finalize(&self) -> Result<Vec<Vec<u8>>, RelayError> {
        let union = self.union.as_ref().ok_or(RelayError::EmptyRelay)?;
        match self.mode {
            Mode::Plain => Ok(vec![union.to_bytes()]),
            Mode::Owner => {
                let intersection = self.intersection.as_ref().unwrap();
                let encoded: Vec<u64> = self
                    .ledger
                    .iter()
                    .map(|(&value, &party)| self.params.encode_owner(value, party - 1))
                    .collect::<Result<_, _>>()?;
                let tagged = Sketch::of_encoded(encoded, &self.params, true)?;
                let omega_union = intersection.pointwise_mul(&tagged)?;
                Ok(vec![omega_union.to_bytes(), intersection.to_bytes()])
            }
        }
    }
}

/// Decodes the final broadcast from one party's point of view.
///
/// Plain mode: the union broadcast against the party's own sketch yields
/// exactly the keys it is missing. Owner mode: dividing the re-encoded
/// union by the intersection yields every union-minus-intersection element
/// with its 0-based owner tag; the party keeps the values it does not hold.
pub fn party_decode<R: Rng + ?Sized>(
    party: &PartyState,
    broadcasts: &[Vec<u8>],
    mode: Mode,
    rng: &mut R,
) -> Result<PartyRecovery, RelayError> {
    let params = *party.sketch().params();
    match mode {
        Mode::Plain => {
            let [union_bytes] = broadcasts else {
                return Err(RelayError::BadBroadcast);
            };
            let union = Sketch::from_bytes(union_bytes)?;
            if union.params() != &params || union.owner_encoded() {
                return Err(RelayError::BadBroadcast);
            }
            let missing = sketch::recover_missing(&union, party.sketch(), rng)?;
            Ok(PartyRecovery::Plain(missing))
        }
        Mode::Owner => {
            let [union_bytes, intersection_bytes] = broadcasts else {
                return Err(RelayError::BadBroadcast);
            };
            let omega_union = Sketch::from_bytes(union_bytes)?;
            let intersection = Sketch::from_bytes(intersection_bytes)?;
            if omega_union.params() != &params
                || intersection.params() != &params
                || !omega_union.owner_encoded()
                || !intersection.owner_encoded()
            {
                return Err(RelayError::BadBroadcast);
            }
            let tagged = sketch::recover_missing(&omega_union, &intersection, rng)?;
            let mut out = Vec::new();
            for encoded in tagged {
                let elem = params.decode_owner(encoded)?;
                if elem.owner + 1 > params.owner_count() {
                    return Err(SketchError::VerificationFailed.into());
                }
                if !party.keys().contains(&elem.value) {
                    out.push(OwnerElement { value: elem.value, owner: elem.owner + 1 });
                }
            }
            out.sort();
            Ok(PartyRecovery::Owner(out))
        }
    }
}

/// Pairwise union combining over a whole slice, halving each level, as a
/// relay with subordinate relays would. Equivalent to a left-to-right fold.
pub fn combine_tree<R: Rng + ?Sized>(
    sketches: &[Sketch],
    rng: &mut R,
) -> Result<Sketch, RelayError> {
    if sketches.is_empty() {
        return Err(RelayError::EmptyRelay);
    }
    let mut level: Vec<Sketch> = sketches.to_vec();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            match pair {
                [a, b] => next.push(sketch::combine_union(a, b, rng)?),
                [a] => next.push(a.clone()),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    Ok(level.pop().unwrap())
}
