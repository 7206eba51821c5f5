//! Respiratory signal extraction from multi-slice real-time cardiac cine.
//!
//! Pipeline, per slice: temporal low-pass filter, mean-centered PCA over
//! frames, leading eigenvector as the raw respiratory signal and its eigen
//! image. Across slices: sign propagation through adjacent eigen-image
//! correlations, then a single global sign chosen by consensus with each
//! slice's zeroth-moment-center curve. The resolved signals drive
//! peak-expiration / peak-inspiration heartbeat selection.
//!
//! [`phantom`] renders synthetic stacks with known ground truth, and
//! [`eval`] scores extracted signals against it.

pub mod direction;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod filter;
pub mod heartbeat;
pub mod io;
pub mod pca;
pub mod phantom;
pub mod stack;

pub use direction::{resolve, Resolution, ResolveOptions, SignLedger};
pub use error::{Error, Result};
pub use filter::{design_lowpass, LowpassKernel};
pub use stack::{
    CineStack, EigenImage, HeartbeatWindow, PhantomTruth, RespSignal, SignState, SliceSeries,
    ZmcCurve,
};
