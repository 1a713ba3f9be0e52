//! Full-waveform inversion and matched-source waveform inversion for 2D
//! acoustic transmission data.

pub mod error;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod scenarios;
pub mod sgf;
pub mod verify;
pub mod wave_sim;
pub mod wavelet;

pub use error::{Error, Result};
pub use model::{Acquisition, DataVolume, FilterField, GridGeometry, ModelGrid, TimeAxis};
pub use wave_sim::{FdConfig, Simulator};
