//! Dense univariate polynomial arithmetic over a prime field.
//!
//! Coefficients are stored little-endian (`coeffs[i]` multiplies `x^i`) with
//! no trailing zeros; the zero polynomial is the empty vector. All products
//! here are schoolbook: degrees stay small enough that quadratic arithmetic
//! is never the bottleneck.

use crate::field::{Field, FieldElement};
use rand::Rng;
use thiserror::Error;

/// Retries allowed per random splitting step before giving up.
const SPLIT_RETRY_LIMIT: u32 = 64;

/// Fields at most this large find roots by exhaustive scan instead of
/// random splitting.
const SCAN_MODULUS_LIMIT: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("gcd of two zero polynomials")]
    BothZero,
    #[error("duplicate interpolation point")]
    DuplicatePoint,
    #[error("no rational function of the requested degrees fits the samples")]
    NoSolution,
    #[error("interpolated candidate fails the verification samples")]
    VerificationFailed,
    #[error("polynomial does not split into distinct linear factors")]
    DoesNotSplit,
    #[error("random splitting exceeded its retry limit")]
    RetryLimitExceeded,
    #[error("the zero polynomial has no well-defined roots")]
    ZeroPolynomial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<FieldElement>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly { coeffs: vec![1] }
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly { coeffs: vec![0, 1] }
    }

    pub fn constant(c: FieldElement) -> Self {
        Poly::from_coeffs(vec![c])
    }

    /// Builds from little-endian coefficients, trimming trailing zeros.
    pub fn from_coeffs(mut coeffs: Vec<FieldElement>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    /// `prod (x - r)` over the given roots. Always monic; the empty product
    /// is the constant 1.
    pub fn from_roots(roots: &[FieldElement], f: &Field) -> Self {
        let mut coeffs: Vec<FieldElement> = Vec::with_capacity(roots.len() + 1);
        coeffs.push(1);
        for &r in roots {
            // Multiply by (x - r) in place, top coefficient first.
            let neg_r = f.neg(r);
            coeffs.push(0);
            for i in (0..coeffs.len()).rev() {
                let shifted = if i > 0 { coeffs[i - 1] } else { 0 };
                coeffs[i] = f.add(shifted, f.mul(neg_r, coeffs[i]));
            }
        }
        Poly { coeffs }
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs == [1]
    }

    pub fn coeff(&self, i: usize) -> FieldElement {
        self.coeffs.get(i).copied().unwrap_or(0)
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Leading coefficient; zero for the zero polynomial.
    pub fn leading(&self) -> FieldElement {
        self.coeffs.last().copied().unwrap_or(0)
    }

    pub fn is_monic(&self) -> bool {
        self.leading() == 1
    }

    /// Horner evaluation.
    pub fn eval(&self, x: FieldElement, f: &Field) -> FieldElement {
        let mut acc = 0;
        for &c in self.coeffs.iter().rev() {
            acc = f.add(f.mul(acc, x), c);
        }
        acc
    }

    pub fn add(&self, other: &Poly, f: &Field) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| f.add(self.coeff(i), other.coeff(i)))
            .collect();
        Poly::from_coeffs(coeffs)
    }

    pub fn sub(&self, other: &Poly, f: &Field) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| f.sub(self.coeff(i), other.coeff(i)))
            .collect();
        Poly::from_coeffs(coeffs)
    }

    pub fn scale(&self, k: FieldElement, f: &Field) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|&c| f.mul(c, k)).collect())
    }

    pub fn mul(&self, other: &Poly, f: &Field) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = f.add(coeffs[i + j], f.mul(a, b));
            }
        }
        Poly::from_coeffs(coeffs)
    }

    /// Long division: returns `(quotient, remainder)` with
    /// `deg remainder < deg divisor`.
    pub fn divmod(&self, divisor: &Poly, f: &Field) -> Result<(Poly, Poly), PolyError> {
        let Some(dd) = divisor.degree() else {
            return Err(PolyError::DivisionByZero);
        };
        let Some(nd) = self.degree() else {
            return Ok((Poly::zero(), Poly::zero()));
        };
        if nd < dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let lead_inv = f.inv_nz(divisor.leading());
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0; nd - dd + 1];
        for k in (dd..=nd).rev() {
            let coef = f.mul(rem[k], lead_inv);
            if coef == 0 {
                continue;
            }
            quot[k - dd] = coef;
            for j in 0..=dd {
                rem[k - dd + j] = f.sub(rem[k - dd + j], f.mul(coef, divisor.coeffs[j]));
            }
        }
        rem.truncate(dd);
        Ok((Poly::from_coeffs(quot), Poly::from_coeffs(rem)))
    }

    /// Division known to be exact; panics (debug) on a nonzero remainder.
    pub(crate) fn exact_div(&self, divisor: &Poly, f: &Field) -> Result<Poly, PolyError> {
        let (q, r) = self.divmod(divisor, f)?;
        debug_assert!(r.is_zero(), "exact_div with nonzero remainder");
        Ok(q)
    }

    /// Scales to leading coefficient 1. The zero polynomial is returned
    /// unchanged.
    pub fn monic(&self, f: &Field) -> Poly {
        match self.leading() {
            0 | 1 => self.clone(),
            lead => self.scale(f.inv_nz(lead), f),
        }
    }
}

/// Monic greatest common divisor by the Euclidean algorithm.
pub fn gcd(a: &Poly, b: &Poly, f: &Field) -> Result<Poly, PolyError> {
    if a.is_zero() && b.is_zero() {
        return Err(PolyError::BothZero);
    }
    let mut x = a.clone();
    let mut y = b.clone();
    while !y.is_zero() {
        let r = x.divmod(&y, f)?.1;
        x = y;
        y = r;
    }
    Ok(x.monic(f))
}

/// Lagrange interpolation through `points`; the unique polynomial of degree
/// below `points.len()`.
pub fn interpolate(points: &[(FieldElement, FieldElement)], f: &Field) -> Result<Poly, PolyError> {
    for (i, (xi, _)) in points.iter().enumerate() {
        if points[..i].iter().any(|(xj, _)| xj == xi) {
            return Err(PolyError::DuplicatePoint);
        }
    }
    let xs: Vec<FieldElement> = points.iter().map(|&(x, _)| x).collect();
    let master = Poly::from_roots(&xs, f);
    let mut acc = Poly::zero();
    for &(xi, yi) in points {
        if yi == 0 {
            continue;
        }
        // master / (x - xi) by synthetic division; exact since master(xi) = 0.
        let li = div_by_linear(&master, xi, f);
        let denom = li.eval(xi, f);
        acc = acc.add(&li.scale(f.mul(yi, f.inv_nz(denom)), f), f);
    }
    Ok(acc)
}

/// Synthetic division of `p` by `(x - r)`, assuming `p(r) = 0`.
fn div_by_linear(p: &Poly, r: FieldElement, f: &Field) -> Poly {
    let n = p.coeffs.len();
    debug_assert!(n >= 1);
    let mut out = vec![0; n - 1];
    let mut carry = 0;
    for k in (1..n).rev() {
        carry = f.add(p.coeffs[k], f.mul(carry, r));
        out[k - 1] = carry;
    }
    debug_assert_eq!(f.add(p.coeffs[0], f.mul(carry, r)), 0);
    Poly::from_coeffs(out)
}

/// A reduced ratio of monic polynomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalFunction {
    pub num: Poly,
    pub den: Poly,
}

/// Fits a monic rational function `P/Q` with `deg P - deg Q = delta` and
/// `deg P + deg Q <= d` to the samples, then checks it against every sample.
///
/// The first `d + 1` samples feed a linear system in the non-leading
/// coefficients (free variables pinned to zero); whatever solution comes out
/// is gcd-reduced and re-verified on all samples, so extra samples beyond
/// `d + 1` act as verification points. Samples must have pairwise distinct
/// abscissas and nonzero values.
pub fn rational_interpolate(
    samples: &[(FieldElement, FieldElement)],
    delta: i64,
    d: usize,
    f: &Field,
) -> Result<RationalFunction, PolyError> {
    assert!(samples.len() > d, "need at least d + 1 samples");
    if delta.unsigned_abs() > d as u64 {
        return Err(PolyError::NoSolution);
    }
    let m1 = ((d as i64 + delta) / 2) as usize;
    let m2 = (m1 as i64 - delta) as usize;

    // Row per sample: sum_j p_j x^j - r sum_j q_j x^j = r x^m2 - x^m1.
    let n_unknowns = m1 + m2;
    let mut rows = Vec::with_capacity(d + 1);
    for &(x, r) in &samples[..d + 1] {
        let mut row = Vec::with_capacity(n_unknowns + 1);
        let mut xp = 1;
        for _ in 0..m1 {
            row.push(xp);
            xp = f.mul(xp, x);
        }
        let x_m1 = xp;
        let mut xp = 1;
        for _ in 0..m2 {
            row.push(f.neg(f.mul(r, xp)));
            xp = f.mul(xp, x);
        }
        let x_m2 = xp;
        row.push(f.sub(f.mul(r, x_m2), x_m1));
        rows.push(row);
    }
    let sol = solve_linear(rows, n_unknowns, f).ok_or(PolyError::NoSolution)?;

    let mut p_coeffs = sol[..m1].to_vec();
    p_coeffs.push(1);
    let mut q_coeffs = sol[m1..].to_vec();
    q_coeffs.push(1);
    let p = Poly::from_coeffs(p_coeffs);
    let q = Poly::from_coeffs(q_coeffs);

    let g = gcd(&p, &q, f)?;
    let num = p.exact_div(&g, f)?;
    let den = q.exact_div(&g, f)?;

    for &(x, r) in samples {
        if num.eval(x, f) != f.mul(r, den.eval(x, f)) {
            return Err(PolyError::VerificationFailed);
        }
    }
    Ok(RationalFunction { num, den })
}

/// Gaussian elimination over the field. Rows are augmented with the
/// right-hand side. Returns `None` when inconsistent; free variables are
/// set to zero.
fn solve_linear(mut mat: Vec<Vec<FieldElement>>, n_unknowns: usize, f: &Field) -> Option<Vec<FieldElement>> {
    let n_rows = mat.len();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut next_row = 0;
    for col in 0..n_unknowns {
        if next_row == n_rows {
            break;
        }
        let Some(r) = (next_row..n_rows).find(|&r| mat[r][col] != 0) else {
            continue;
        };
        mat.swap(next_row, r);
        let inv = f.inv_nz(mat[next_row][col]);
        for j in col..=n_unknowns {
            mat[next_row][j] = f.mul(mat[next_row][j], inv);
        }
        for r2 in 0..n_rows {
            if r2 == next_row || mat[r2][col] == 0 {
                continue;
            }
            let factor = mat[r2][col];
            for j in col..=n_unknowns {
                let delta = f.mul(factor, mat[next_row][j]);
                mat[r2][j] = f.sub(mat[r2][j], delta);
            }
        }
        pivots.push((next_row, col));
        next_row += 1;
    }
    for row in &mat {
        if row[..n_unknowns].iter().all(|&v| v == 0) && row[n_unknowns] != 0 {
            return None;
        }
    }
    let mut sol = vec![0; n_unknowns];
    for (r, c) in pivots {
        sol[c] = mat[r][n_unknowns];
    }
    Some(sol)
}

/// `base^exp` modulo `modp` by repeated squaring.
fn powmod_poly(base: &Poly, mut exp: u64, modp: &Poly, f: &Field) -> Result<Poly, PolyError> {
    let mut acc = Poly::one();
    let mut b = base.divmod(modp, f)?.1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc.mul(&b, f).divmod(modp, f)?.1;
        }
        b = b.mul(&b, f).divmod(modp, f)?.1;
        exp >>= 1;
    }
    Ok(acc)
}

/// Square root in `F_q` by Tonelli-Shanks; `None` for non-residues.
fn sqrt_mod(n: FieldElement, f: &Field) -> Option<FieldElement> {
    let q = f.modulus();
    if n == 0 {
        return Some(0);
    }
    if q == 2 {
        return Some(n);
    }
    if f.pow(n, (q - 1) / 2) != 1 {
        return None;
    }
    if q % 4 == 3 {
        return Some(f.pow(n, (q + 1) / 4));
    }
    let mut s = q - 1;
    let mut e = 0u32;
    while s & 1 == 0 {
        s >>= 1;
        e += 1;
    }
    // Deterministic scan for a quadratic non-residue.
    let z = (2..q).find(|&z| f.pow(z, (q - 1) / 2) == q - 1).unwrap();
    let mut m = e;
    let mut c = f.pow(z, s);
    let mut t = f.pow(n, s);
    let mut r = f.pow(n, s.div_ceil(2));
    while t != 1 {
        let mut i = 0u32;
        let mut t2 = t;
        while t2 != 1 {
            t2 = f.mul(t2, t2);
            i += 1;
        }
        let b = f.pow(c, 1u64 << (m - i - 1));
        m = i;
        c = f.mul(b, b);
        t = f.mul(t, c);
        r = f.mul(r, b);
    }
    Some(r)
}

/// All roots of `p`, sorted ascending, provided `p` is a nonzero constant
/// multiple of a product of distinct linear factors.
///
/// Tiny fields are scanned exhaustively. Larger fields first strip `p` to
/// its distinct-linear part via `gcd(p, x^q - x)`, then split it with random
/// shifts: `gcd(p, (x + a)^((q-1)/2) - 1)` separates roots by quadratic
/// character. A final reconstruction check (`prod (x - r)` equals the monic
/// input) turns any leftover mismatch into `DoesNotSplit`.
pub fn roots<R: Rng + ?Sized>(p: &Poly, f: &Field, rng: &mut R) -> Result<Vec<FieldElement>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let p = p.monic(f);
    let mut out = Vec::new();
    if p.degree() == Some(0) {
        return Ok(out);
    }
    let q = f.modulus();
    if q <= SCAN_MODULUS_LIMIT {
        for x in 0..q {
            if p.eval(x, f) == 0 {
                out.push(x);
            }
        }
    } else {
        let xq = powmod_poly(&Poly::x(), q, &p, f)?;
        let split_part = gcd(&p, &xq.sub(&Poly::x(), f), f)?;
        split_linears(&split_part, f, rng, &mut out)?;
    }
    out.sort_unstable();
    if Poly::from_roots(&out, f) != p {
        return Err(PolyError::DoesNotSplit);
    }
    Ok(out)
}

/// Splits a monic product of distinct linear factors into its roots.
fn split_linears<R: Rng + ?Sized>(
    p: &Poly,
    f: &Field,
    rng: &mut R,
    out: &mut Vec<FieldElement>,
) -> Result<(), PolyError> {
    match p.degree() {
        None | Some(0) => Ok(()),
        Some(1) => {
            out.push(f.neg(p.coeff(0)));
            Ok(())
        }
        Some(2) => {
            // x^2 + bx + c with roots (-b +- sqrt(b^2 - 4c)) / 2.
            let b = p.coeff(1);
            let c = p.coeff(0);
            let disc = f.sub(f.mul(b, b), f.mul(4 % f.modulus(), c));
            let s = sqrt_mod(disc, f).ok_or(PolyError::DoesNotSplit)?;
            let half = f.inv_nz(2 % f.modulus());
            out.push(f.mul(f.sub(s, b), half));
            out.push(f.mul(f.sub(f.neg(b), s), half));
            Ok(())
        }
        Some(_) => {
            let q = f.modulus();
            for _ in 0..SPLIT_RETRY_LIMIT {
                let a = rng.gen_range(0..q);
                let shifted = Poly::from_coeffs(vec![a, 1]);
                let w = powmod_poly(&shifted, (q - 1) / 2, p, f)?;
                let h = w.sub(&Poly::one(), f);
                if h.is_zero() {
                    continue;
                }
                let g = gcd(p, &h, f)?;
                let gd = g.degree().unwrap_or(0);
                if gd == 0 || Some(gd) == p.degree() {
                    continue;
                }
                let rest = p.exact_div(&g, f)?;
                split_linears(&g, f, rng, out)?;
                split_linears(&rest, f, rng, out)?;
                return Ok(());
            }
            Err(PolyError::RetryLimitExceeded)
        }
    }
}
