//! Frequency-domain multivariate forecaster.
//!
//! Look-back windows are mixed across variates by a single attention block,
//! instance-normalized, moved to the frequency domain with a real FFT,
//! low-pass filtered and interpolated onto a longer grid by one complex-valued
//! linear layer. A small MLP trained with conditional flow matching models the
//! residual spectrum that the interpolation head misses, and is integrated with
//! an explicit Euler ODE sampler at inference.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! anything else that touches the operating system live in the `freqflow`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;

pub mod array;
pub mod data;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod param;
pub mod rng;
pub mod spectral;
pub mod train;

pub use array::{Complex, ComplexArray, RealArray};
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use model::{Model, ModelConfig, Preset, Task};
pub use param::{ParamId, ParamStore, ParamValue, Parameter};
pub use spectral::{LpfConfig, Spectrum};
pub use train::{LossBreakdown, TrainConfig};
