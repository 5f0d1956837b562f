//! Numerical core of the weighted Kähler lab: moment polytopes, symplectic
//! potentials and Legendre duality, weighted Monge–Ampère calculus, energy
//! functionals and blowup-family experiments on toric manifolds.
//!
//! `no_std` + `alloc`; the optional `parallel` feature fans node loops out
//! over rayon.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod energy;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod jet;
pub mod legendre;
pub mod linalg;
pub mod ma;
pub mod nodal;
pub mod par;
pub mod potential;
pub mod probes;
pub mod quadrature;
pub mod rng;
pub mod sample;
pub mod torus;

pub use error::{Error, Result};
