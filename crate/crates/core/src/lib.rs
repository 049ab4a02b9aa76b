//! Certification toolkit for contractive implicit networks.
//!
//! An implicit network outputs a fixed point `x* = T_psi(x*; d)` of a
//! parameterized contractive operator, optionally post-processed by a final
//! layer `P_phi`. This crate implements three operator families (a single
//! contractive layer, monotone equilibrium networks, and learned gradient
//! descent), a Banach solver with convergence certificates, empirical
//! estimation of the norm constants entering the generalization bound, and
//! the bound itself in closed and integral form.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature when building without `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("deqcert-core needs either the `std` or the `libm` feature for float math");

extern crate alloc;

pub mod bound;
pub mod constants;
pub mod fixed_point;
pub mod losses;
pub mod numerics;
pub mod operators;
