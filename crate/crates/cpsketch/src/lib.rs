//! Set reconciliation with characteristic-polynomial sketches over prime fields.
//!
//! A set `S` of keys is summarized by evaluating its characteristic polynomial
//! `f_S(x) = prod_{a in S} (x - a)` at a small number of fixed points of `F_q`.
//! Two such summaries whose sets differ in at most `d` elements suffice to
//! recover both symmetric-difference sides exactly, by rational-function
//! interpolation followed by root finding.
//!
//! On top of the sketch core sit two multi-party protocols:
//!
//! * [`relay`]: every party sends one sketch to a central relay, which
//!   broadcasts enough for each party to recover the union (and, optionally,
//!   which party contributed each key it was missing).
//! * [`gossip`]: parties sit on the vertices of a connected graph and spread
//!   sketches with synchronous PUSH-PULL rounds until everyone can decode.

pub mod field;
pub mod gossip;
pub mod poly;
pub mod relay;
pub mod sketch;

pub use field::{choose_field, Field, FieldElement, FieldError, FieldParams};
pub use poly::{Poly, PolyError, RationalFunction};
pub use relay::{Mode, PartyState, RelayState};
pub use sketch::{OwnerElement, Sketch, SketchError, SketchParams};
