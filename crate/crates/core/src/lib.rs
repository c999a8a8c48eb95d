//! Steady-state mechanics, photon counting statistics and non-classical
//! mechanical states of a two-level system coupled to an oscillator and
//! driven on the first blue sideband.

pub mod cavity;
pub mod counting;
pub mod dressed;
pub mod error;
pub mod io;
pub mod krylov;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod phonon_noise;
pub mod reproduce;
pub mod steady;
pub mod sweep;
pub mod wigner;

pub use error::{Error, Result};
