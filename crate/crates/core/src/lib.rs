//! Phase-space kinetic toolkit: lattice Wigner transforms, Boltzmann
//! collision operators on density matrices, weighted norms, Duhamel/Picard
//! solvers and the integral checks behind the bilinear estimates.

pub mod collision;
pub mod error;
pub mod estimate;
pub mod evolve;
pub mod fft;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod norms;
pub mod trig;
pub mod wigner;

pub use error::{Error, Result};
pub use grid::{make_grid, DensityMatrix, GridSpec, LazyTensorState, PhaseField, SpectralField};
pub use num_complex::Complex64 as C64;
