//! Prime-field arithmetic and parameter selection.
//!
//! Elements are canonical residues stored as `u64`. The modulus is capped at
//! `2^61 - 1` so that sums stay below `2^62` and products fit in `u128`.

use serde::Serialize;
use thiserror::Error;

/// Canonical residue in `[0, q)`.
pub type FieldElement = u64;

/// Largest supported modulus.
pub const MAX_MODULUS: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("required modulus exceeds 2^61 - 1")]
    FieldTooLarge,
    #[error("invalid field parameters: {0}")]
    InvalidParams(&'static str),
}

#[inline]
fn mulmod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

fn powmod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base, q);
        }
        base = mulmod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin. The witness set below decides primality for
/// every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Arithmetic context for `F_q`, `q` prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    q: u64,
}

impl Field {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q > MAX_MODULUS {
            return Err(FieldError::FieldTooLarge);
        }
        if !is_prime(q) {
            return Err(FieldError::InvalidParams("modulus is not prime"));
        }
        Ok(Field { q })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> FieldElement {
        a % self.q
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a >= b {
            a - b
        } else {
            self.q - b + a
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        mulmod(a, b, self.q)
    }

    pub fn pow(&self, base: FieldElement, exp: u64) -> FieldElement {
        powmod(base, exp, self.q)
    }

    /// Inverse by Fermat: `a^(q-2)`.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a == 0 {
            Err(FieldError::ZeroInverse)
        } else {
            Ok(self.pow(a, self.q - 2))
        }
    }

    /// Inverse of a value known to be nonzero.
    #[inline]
    pub(crate) fn inv_nz(&self, a: FieldElement) -> FieldElement {
        debug_assert!(a != 0);
        self.pow(a, self.q - 2)
    }
}

/// Everything a sketch needs to know about the field and the key universe.
///
/// Keys live in `[0, m)`. With `owner_count > 1` parties, keys may carry an
/// owner tag and are embedded as `value + m * tag` with tags in
/// `[0, owner_count]`, so the modulus must leave room above the largest
/// encoding for the `d + c + 1` evaluation points at the top of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldParams {
    pub q: u64,
    pub m: u64,
    pub owner_count: u32,
    pub d: u32,
    pub c: u32,
}

impl FieldParams {
    pub fn new(q: u64, m: u64, owner_count: u32, d: u32, c: u32) -> Result<Self, FieldError> {
        let field = Field::new(q)?;
        if m == 0 {
            return Err(FieldError::InvalidParams("key universe is empty"));
        }
        if owner_count == 0 {
            return Err(FieldError::InvalidParams("owner_count must be at least 1"));
        }
        let params = FieldParams { q, m, owner_count, d, c };
        if field.modulus() < params.min_modulus()? {
            return Err(FieldError::InvalidParams(
                "modulus too small for universe plus evaluation points",
            ));
        }
        Ok(params)
    }

    /// Smallest modulus that fits every encodable element plus the
    /// evaluation points, before rounding up to a prime.
    fn min_modulus(&self) -> Result<u64, FieldError> {
        let points = self.d as u64 + self.c as u64 + 1;
        self.encodable_bound()
            .checked_add(points)
            .ok_or(FieldError::FieldTooLarge)
    }

    /// Exclusive upper bound on encoded elements: `m * (owner_count + 1)`
    /// when owner tags are in play, plain `m` otherwise.
    pub fn encodable_bound(&self) -> u64 {
        if self.owner_count > 1 {
            self.m.saturating_mul(self.owner_count as u64 + 1)
        } else {
            self.m
        }
    }

    /// Number of evaluation points, `d + c + 1`.
    pub fn n_points(&self) -> usize {
        self.d as usize + self.c as usize + 1
    }

    pub fn field(&self) -> Field {
        // Validated in `new` / `choose_field`.
        Field { q: self.q }
    }
}

/// Picks the smallest prime modulus that accommodates `m` keys,
/// `owner_count` owner tags (1 disables tagging), difference bound `d` and
/// `c` verification points.
pub fn choose_field(m: u64, owner_count: u32, d: u32, c: u32) -> Result<FieldParams, FieldError> {
    if m == 0 {
        return Err(FieldError::InvalidParams("key universe is empty"));
    }
    if owner_count == 0 {
        return Err(FieldError::InvalidParams("owner_count must be at least 1"));
    }
    let draft = FieldParams { q: 2, m, owner_count, d, c };
    let mut q = draft.min_modulus()?.max(2);
    loop {
        if q > MAX_MODULUS {
            return Err(FieldError::FieldTooLarge);
        }
        if is_prime(q) {
            return Ok(FieldParams { q, m, owner_count, d, c });
        }
        q += 1;
    }
}
