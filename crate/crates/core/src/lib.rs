//! Grey thermal radiative transfer on structured 2D grids.
//!
//! Three interchangeable time steppers share the same physics and grid:
//!
//! * classic discrete ordinates ([`transport_sn`]): upwind DG sweeps, source
//!   iteration, and a consistent diffusion synthetic acceleration,
//! * a collocation dynamic low-rank stepper ([`dlr_sn`]) that selects its
//!   transport directions from the evolving angular basis with DEIM and reuses
//!   the sweep machinery,
//! * a Galerkin dynamic low-rank stepper ([`dlr_pn`]) built on an even-parity
//!   K step, so every solve it performs is symmetric positive definite.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration and the CLI
//! live in the companion `trt` crate.
#![no_std]
#![allow(clippy::needless_range_loop)] // index loops read better in the kernels
#![allow(clippy::too_many_arguments)]

extern crate alloc;
#[cfg(any(feature = "parallel", test))]
extern crate std;

pub mod angular;
pub mod dense;
pub mod dlr_pn;
pub mod dlr_sn;
mod error;
pub mod lowrank;
pub mod mesh;
mod par;
pub mod physics;
pub mod problem;
pub mod solvers;
pub mod sparse;
pub mod transport_sn;

pub use error::{Error, Result};
