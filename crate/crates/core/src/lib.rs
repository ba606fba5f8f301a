//! Cell-average based neural network (CANN) solver for parabolic PDEs.
//!
//! A small residual network learns the one-step map from a stencil of cell
//! averages at `t_n` to the center cell average at `t_{n+1}` from a single pair of
//! time levels, and is then marched forward like an explicit finite volume scheme.

pub mod bench;
pub mod checkpoint;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod network;
pub mod problems;
pub mod quadrature;
pub mod stencil;
pub mod training;

pub use error::{Error, Result};
