//! Exact-arithmetic engine for an odd-symplectic Batalin–Vilkovisky pipeline
//! over cyclic words.
//!
//! The crate is organized bottom-up:
//!
//! - [`scalar`]: exact rationals and factorial helpers.
//! - [`series`]: truncated power series in a single formal variable `h`.
//! - [`graded`]: ℤ/2-graded bases, Koszul signs, bilinear forms and their
//!   inverses, quadratic functions.
//! - [`cyclic`]: cyclic words over a graded symplectic vector space, the loop
//!   bracket and cobracket, and the master-equation differential.
//! - [`frobenius`]: differential graded Frobenius algebras and the surface
//!   tensors built from them.
//! - [`bv`]: polynomial functions on an odd symplectic space, the
//!   second-order operator, Gaussian expectation, and the pairing that
//!   produces `h`-series invariants.
//!
//! All arithmetic is exact (`num::BigRational`); nothing is floating point.

pub mod bv;
pub mod cyclic;
pub mod frobenius;
pub mod graded;
mod linalg;
pub mod scalar;
pub mod series;
