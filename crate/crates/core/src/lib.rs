//! Continuous-level image denoising with filter transition networks.
//!
//! A small residual CNN is trained on one noise level; a per-layer
//! [`FtnLayer`] then learns to map its filters to a second level while the
//! main network stays frozen. Any level in between is reached by blending the
//! two filter banks with a coefficient α, globally or per pixel.
//!
//! ```
//! use cll_core::{build_network, FtnConfig, Level, Network, NetworkSpec, ProviderConfig, Tensor};
//!
//! let mut net: Network<f32> = build_network(NetworkSpec::default(), 0).unwrap();
//! net.attach_providers(ProviderConfig::ftn(FtnConfig::default())).unwrap();
//! let x = Tensor::full([1, 1, 8, 8], 0.5f32);
//! let y = net.forward(&x, Level::Global(0.3)).unwrap();
//! assert_eq!(y.dims(), x.dims());
//! ```

use std::sync::atomic::{AtomicBool, Ordering};

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod ftn;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod pipeline;
pub mod store;
pub mod tape;
pub mod tensor;
pub mod train;

pub use baselines::{adafm_effective_filters, dni_interpolate, dni_network, AdaFmLayer, DniPair};
pub use config::{Mode, RunConfig};
pub use data::{demo_image, NoiseLevel, SyntheticDataset, ValidationSet};
pub use error::{CheckpointError, Error, ImageError, Result};
pub use ftn::{effective_filters, ftn_forward, AlphaPolicy, FtnConfig, FtnLayer, LevelMap};
pub use model::{
    build_network, FilterBank, Level, Network, NetworkSpec, ParamRole, Phase, ProviderConfig, ProviderKind,
    Trainable,
};
pub use store::ParamStore;
pub use tape::{MacCounter, Tape, Var};
pub use tensor::{Dims, Precision, Scalar, Tensor};
pub use train::{TrainConfig, TrainOutcome};

static SINGLE_THREADED: AtomicBool = AtomicBool::new(false);

/// Force [`worker_threads`] to 1.
pub fn set_single_threaded(on: bool) {
    SINGLE_THREADED.store(on, Ordering::Relaxed);
}

/// Worker count for parallel evaluation: the machine's parallelism, capped
/// by `CLL_THREADS` when set.
pub fn worker_threads() -> usize {
    if SINGLE_THREADED.load(Ordering::Relaxed) {
        return 1;
    }
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("CLL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n.min(avail),
        _ => avail,
    }
}
