//! Characteristic-polynomial set sketches.
//!
//! A set is summarized by the evaluations of `f_S(x) = prod_{a in S} (x - a)`
//! at the `d + c + 1` points `q-1, q-2, ...` at the top of the field, plus
//! the exact cardinality. The parameter bound `q >= bound + d + c + 1`
//! keeps the evaluation points disjoint from every encodable element, so
//! every stored evaluation is nonzero.
//!
//! Sketches of sets whose symmetric difference has at most `d` elements can
//! be divided pointwise and decoded back to both difference sides; `c` extra
//! points catch (with overwhelming probability) ratios whose true difference
//! exceeds the bound, turning them into errors instead of wrong answers.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldParams};
use crate::poly::{self, Poly};

pub const MESSAGE_MAGIC: [u8; 4] = *b"RCSK";
pub const MESSAGE_VERSION: u8 = 1;
/// Set when the sketched elements live in the owner-tagged domain
/// `[0, m * (owner_count + 1))` rather than plain `[0, m)`.
const FLAG_OWNER_ENCODED: u8 = 0b0000_0001;
/// Fixed-size message prefix: magic, version, flags, q, d, c, m,
/// owner_count, cardinality.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 4 + 4 + 8 + 4 + 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SketchError {
    #[error("key {key} outside universe [0, {bound})")]
    KeyOutOfRange { key: u64, bound: u64 },
    #[error("owner tag {owner} outside [0, {max}]")]
    OwnerOutOfRange { owner: u32, max: u32 },
    #[error("sketches built with different parameters or encodings")]
    ParamsMismatch,
    #[error("pointwise division would make cardinality negative")]
    CardinalityUnderflow,
    #[error("difference bound exceeded")]
    DifferenceBoundExceeded,
    #[error("recovered difference failed verification")]
    VerificationFailed,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("sketch message has a bad magic prefix")]
    BadMagic,
    #[error("unsupported sketch message version {0}")]
    BadVersion(u8),
    #[error("unknown sketch message flags {0:#04x}")]
    BadFlags(u8),
    #[error("sketch message length {got}, expected {expected}")]
    WireLength { expected: usize, got: usize },
    #[error("sketch message carries a zero or out-of-field evaluation")]
    BadEval,
    #[error("sketch message cardinality exceeds the encodable universe")]
    BadCardinality,
}

/// A key together with the index of the party holding it. Tag 0 is reserved
/// by the protocols for "owner elided"; real parties are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OwnerElement {
    pub value: u64,
    pub owner: u32,
}

/// Field parameters plus the derived evaluation-point layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct SketchParams {
    fp: FieldParams,
}

impl SketchParams {
    pub fn new(fp: FieldParams) -> Self {
        SketchParams { fp }
    }

    pub fn field_params(&self) -> &FieldParams {
        &self.fp
    }

    pub fn field(&self) -> Field {
        self.fp.field()
    }

    pub fn q(&self) -> u64 {
        self.fp.q
    }

    pub fn m(&self) -> u64 {
        self.fp.m
    }

    pub fn owner_count(&self) -> u32 {
        self.fp.owner_count
    }

    pub fn d(&self) -> u32 {
        self.fp.d
    }

    pub fn c(&self) -> u32 {
        self.fp.c
    }

    pub fn n_points(&self) -> usize {
        self.fp.n_points()
    }

    /// Evaluation point `j`, counting down from the top of the field.
    pub fn point(&self, j: usize) -> FieldElement {
        debug_assert!(j < self.n_points());
        self.fp.q - 1 - j as u64
    }

    pub fn points(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.n_points()).map(|j| self.point(j))
    }

    /// Serialized size of any sketch with these parameters.
    pub fn message_len(&self) -> usize {
        HEADER_LEN + 8 * self.n_points()
    }

    /// Embeds `(value, owner)` as `value + m * owner`.
    pub fn encode_owner(&self, value: u64, owner: u32) -> Result<u64, SketchError> {
        if value >= self.fp.m {
            return Err(SketchError::KeyOutOfRange { key: value, bound: self.fp.m });
        }
        let max = if self.fp.owner_count > 1 { self.fp.owner_count } else { 0 };
        if owner > max {
            return Err(SketchError::OwnerOutOfRange { owner, max });
        }
        Ok(value + self.fp.m * owner as u64)
    }

    /// Inverse of [`encode_owner`](Self::encode_owner).
    pub fn decode_owner(&self, encoded: u64) -> Result<OwnerElement, SketchError> {
        let bound = self.fp.encodable_bound();
        if encoded >= bound {
            return Err(SketchError::KeyOutOfRange { key: encoded, bound });
        }
        Ok(OwnerElement {
            value: encoded % self.fp.m,
            owner: (encoded / self.fp.m) as u32,
        })
    }
}

/// Evaluations of a set's characteristic polynomial plus its cardinality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    params: SketchParams,
    owner_encoded: bool,
    evals: Vec<FieldElement>,
    cardinality: u64,
}

impl Sketch {
    /// Sketches a plain key set. Duplicate keys collapse, as befits a set.
    pub fn of_set<I>(keys: I, params: &SketchParams) -> Result<Sketch, SketchError>
    where
        I: IntoIterator<Item = u64>,
    {
        Sketch::of_encoded(keys, params, false)
    }

    /// Sketches owner-tagged elements in the extended domain.
    pub fn of_owner_set(elems: &[OwnerElement], params: &SketchParams) -> Result<Sketch, SketchError> {
        let encoded: Vec<u64> = elems
            .iter()
            .map(|e| params.encode_owner(e.value, e.owner))
            .collect::<Result<_, _>>()?;
        Sketch::of_encoded(encoded, params, true)
    }

    /// Core constructor over already-encoded elements.
    pub(crate) fn of_encoded<I>(
        elems: I,
        params: &SketchParams,
        owner_encoded: bool,
    ) -> Result<Sketch, SketchError>
    where
        I: IntoIterator<Item = u64>,
    {
        let set: BTreeSet<u64> = elems.into_iter().collect();
        let bound = domain_bound(params, owner_encoded);
        if let Some(&key) = set.iter().find(|&&e| e >= bound) {
            return Err(SketchError::KeyOutOfRange { key, bound });
        }
        let f = params.field();
        let evals: Vec<FieldElement> = params
            .points()
            .map(|x| set.iter().fold(1, |acc, &e| f.mul(acc, f.sub(x, e))))
            .collect();
        // Points sit above every encodable element, so no factor vanishes.
        assert!(evals.iter().all(|&v| v != 0));
        Ok(Sketch {
            params: *params,
            owner_encoded,
            evals,
            cardinality: set.len() as u64,
        })
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn owner_encoded(&self) -> bool {
        self.owner_encoded
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn evals(&self) -> &[FieldElement] {
        &self.evals
    }

    fn check_compatible(&self, other: &Sketch) -> Result<(), SketchError> {
        if self.params != other.params || self.owner_encoded != other.owner_encoded {
            return Err(SketchError::ParamsMismatch);
        }
        Ok(())
    }

    /// Coordinate-wise product: the sketch of a disjoint union, with
    /// cardinalities added.
    pub fn pointwise_mul(&self, other: &Sketch) -> Result<Sketch, SketchError> {
        self.check_compatible(other)?;
        let f = self.params.field();
        let evals = self
            .evals
            .iter()
            .zip(&other.evals)
            .map(|(&a, &b)| f.mul(a, b))
            .collect();
        Ok(Sketch {
            params: self.params,
            owner_encoded: self.owner_encoded,
            evals,
            cardinality: self.cardinality + other.cardinality,
        })
    }

    /// Coordinate-wise quotient: the sketch of a set difference when `other`
    /// sketches a subset of `self`, with cardinalities subtracted.
    pub fn pointwise_div(&self, other: &Sketch) -> Result<Sketch, SketchError> {
        self.check_compatible(other)?;
        let cardinality = self
            .cardinality
            .checked_sub(other.cardinality)
            .ok_or(SketchError::CardinalityUnderflow)?;
        let f = self.params.field();
        let evals: Vec<FieldElement> = self
            .evals
            .iter()
            .zip(&other.evals)
            .map(|(&a, &b)| f.mul(a, f.inv_nz(b)))
            .collect();
        assert!(evals.iter().all(|&v| v != 0));
        Ok(Sketch {
            params: self.params,
            owner_encoded: self.owner_encoded,
            evals,
            cardinality,
        })
    }

    /// Serializes to the framed big-endian message format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.params.message_len());
        buf.extend_from_slice(&MESSAGE_MAGIC);
        buf.push(MESSAGE_VERSION);
        buf.push(if self.owner_encoded { FLAG_OWNER_ENCODED } else { 0 });
        let fp = self.params.field_params();
        buf.extend_from_slice(&fp.q.to_be_bytes());
        buf.extend_from_slice(&fp.d.to_be_bytes());
        buf.extend_from_slice(&fp.c.to_be_bytes());
        buf.extend_from_slice(&fp.m.to_be_bytes());
        buf.extend_from_slice(&fp.owner_count.to_be_bytes());
        buf.extend_from_slice(&self.cardinality.to_be_bytes());
        for &e in &self.evals {
            buf.extend_from_slice(&e.to_be_bytes());
        }
        debug_assert_eq!(buf.len(), self.params.message_len());
        buf
    }

    /// Parses and fully validates a serialized sketch. Anything a decoder
    /// would later rely on (prime modulus, parameter bound, nonzero in-field
    /// evaluations, plausible cardinality) is checked here.
    pub fn from_bytes(bytes: &[u8]) -> Result<Sketch, SketchError> {
        if bytes.len() < HEADER_LEN {
            return Err(SketchError::WireLength { expected: HEADER_LEN, got: bytes.len() });
        }
        if bytes[0..4] != MESSAGE_MAGIC {
            return Err(SketchError::BadMagic);
        }
        if bytes[4] != MESSAGE_VERSION {
            return Err(SketchError::BadVersion(bytes[4]));
        }
        let flags = bytes[5];
        if flags & !FLAG_OWNER_ENCODED != 0 {
            return Err(SketchError::BadFlags(flags));
        }
        let owner_encoded = flags & FLAG_OWNER_ENCODED != 0;
        let q = u64::from_be_bytes(bytes[6..14].try_into().unwrap());
        let d = u32::from_be_bytes(bytes[14..18].try_into().unwrap());
        let c = u32::from_be_bytes(bytes[18..22].try_into().unwrap());
        let m = u64::from_be_bytes(bytes[22..30].try_into().unwrap());
        let owner_count = u32::from_be_bytes(bytes[30..34].try_into().unwrap());
        let cardinality = u64::from_be_bytes(bytes[34..42].try_into().unwrap());
        let params = SketchParams::new(FieldParams::new(q, m, owner_count, d, c)?);
        let expected = params.message_len();
        if bytes.len() != expected {
            return Err(SketchError::WireLength { expected, got: bytes.len() });
        }
        if cardinality > domain_bound(&params, owner_encoded) {
            return Err(SketchError::BadCardinality);
        }
        let evals: Vec<FieldElement> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|ch| u64::from_be_bytes(ch.try_into().unwrap()))
            .collect();
        if evals.iter().any(|&e| e == 0 || e >= q) {
            return Err(SketchError::BadEval);
        }
        Ok(Sketch { params, owner_encoded, evals, cardinality })
    }
}

/// Exclusive upper bound on the elements a sketch may contain.
fn domain_bound(params: &SketchParams, owner_encoded: bool) -> u64 {
    if owner_encoded {
        params.field_params().encodable_bound()
    } else {
        params.m()
    }
}

/// Recovers both sides of the symmetric difference from two sketches whose
/// sets differ in at most `d` elements: `(self minus other, other minus
/// self)` as encoded elements.
///
/// The pointwise ratio samples the reduced rational function
/// `f_A / f_B = f_{A-B} / f_{B-A}`, which is pinned down by `d + 1` samples
/// and cross-checked on the remaining `c` before root extraction. Every
/// failure mode (unsatisfiable system, failed verification, a candidate that
/// does not split, out-of-universe roots) reports as
/// [`SketchError::DifferenceBoundExceeded`]: the sketches cannot prove a
/// difference within bounds.
pub fn recover_difference<R: Rng + ?Sized>(
    a: &Sketch,
    b: &Sketch,
    rng: &mut R,
) -> Result<(BTreeSet<u64>, BTreeSet<u64>), SketchError> {
    a.check_compatible(b)?;
    let params = a.params;
    let d = params.d() as usize;
    let delta = a.cardinality as i128 - b.cardinality as i128;
    if delta.unsigned_abs() > d as u128 {
        return Err(SketchError::DifferenceBoundExceeded);
    }
    let f = params.field();
    let samples: Vec<(FieldElement, FieldElement)> = params
        .points()
        .zip(a.evals.iter().zip(&b.evals))
        .map(|(x, (&ea, &eb))| (x, f.mul(ea, f.inv_nz(eb))))
        .collect();
    let rf = poly::rational_interpolate(&samples, delta as i64, d, &f)
        .map_err(|_| SketchError::DifferenceBoundExceeded)?;
    let a_minus_b = extract_elements(&rf.num, &params, a.owner_encoded, &f, rng)
        .ok_or(SketchError::DifferenceBoundExceeded)?;
    let b_minus_a = extract_elements(&rf.den, &params, a.owner_encoded, &f, rng)
        .ok_or(SketchError::DifferenceBoundExceeded)?;
    Ok((a_minus_b, b_minus_a))
}

/// Roots of a recovered factor, provided they all land inside the encodable
/// domain.
fn extract_elements<R: Rng + ?Sized>(
    p: &Poly,
    params: &SketchParams,
    owner_encoded: bool,
    f: &Field,
    rng: &mut R,
) -> Option<BTreeSet<u64>> {
    let rs = poly::roots(p, f, rng).ok()?;
    let bound = domain_bound(params, owner_encoded);
    if rs.iter().any(|&r| r >= bound) {
        return None;
    }
    Some(rs.into_iter().collect())
}

/// Sketch of the union of the two underlying sets, built by grafting
/// `other - self` onto `self`. Differences beyond `d` fail exactly as in
/// [`recover_difference`].
pub fn combine_union<R: Rng + ?Sized>(
    a: &Sketch,
    b: &Sketch,
    rng: &mut R,
) -> Result<Sketch, SketchError> {
    let (_, b_minus_a) = recover_difference(a, b, rng)?;
    let graft = Sketch::of_encoded(b_minus_a, &a.params, a.owner_encoded)?;
    a.pointwise_mul(&graft)
}

/// Elements of `union - own`, for `own` a subset of `union`.
///
/// The pointwise ratio is a polynomial of degree `k = |union| - |own|`, so
/// `k + 1` samples interpolate it and the remaining points verify it. The
/// candidate must be monic of degree exactly `k`, reproduce every spare
/// sample, split into distinct linear factors and stay inside the encodable
/// domain; otherwise the inputs were inconsistent.
pub fn recover_missing<R: Rng + ?Sized>(
    union: &Sketch,
    own: &Sketch,
    rng: &mut R,
) -> Result<BTreeSet<u64>, SketchError> {
    union.check_compatible(own)?;
    let params = union.params;
    let k = union
        .cardinality
        .checked_sub(own.cardinality)
        .ok_or(SketchError::DifferenceBoundExceeded)? as usize;
    if k > params.d() as usize {
        return Err(SketchError::DifferenceBoundExceeded);
    }
    let f = params.field();
    let ratios: Vec<FieldElement> = union
        .evals
        .iter()
        .zip(&own.evals)
        .map(|(&u, &o)| f.mul(u, f.inv_nz(o)))
        .collect();
    let head: Vec<(FieldElement, FieldElement)> = params
        .points()
        .zip(ratios.iter().copied())
        .take(k + 1)
        .collect();
    let candidate =
        poly::interpolate(&head, &f).map_err(|_| SketchError::VerificationFailed)?;
    if candidate.degree() != Some(k) || !candidate.is_monic() {
        return Err(SketchError::VerificationFailed);
    }
    for (x, &r) in params.points().zip(&ratios).skip(k + 1) {
        if candidate.eval(x, &f) != r {
            return Err(SketchError::VerificationFailed);
        }
    }
    extract_elements(&candidate, &params, union.owner_encoded, &f, rng)
        .ok_or(SketchError::VerificationFailed)
}
