//! Spike-train velocity decoder: temporal convolutions compress a 1024-bin
//! window to a few keypoints, a recurrent unit (GRU, LIF or spiking GRU)
//! walks the keypoints, a linear readout produces 2-D velocities and linear
//! interpolation restores the full sequence length.

pub mod bench;
pub mod cells;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod stream;
pub mod train;

pub use error::{CheckpointError, Error, ParseError, Result};
