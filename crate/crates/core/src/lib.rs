//! Three-level atom optics: coherent transport and splitting of a single
//! atom among three tunnel-coupled traps.
//!
//! * [`model`]: units, trap-distance schedules, protocols and presets.
//! * [`three_mode`]: reduced three-level model driven by the tunnelling
//!   frequency of each trap pair.
//! * [`grid`]: split-step Fourier solver of the 1D/2D Schrodinger equation.
//! * [`analysis`]: trap populations, dark-state projection, coherence.
//! * [`harness`]: sweeps, convergence studies and file export.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod harness;
pub mod model;
pub mod three_mode;
pub mod timeline;

pub use error::{Error, Result};
