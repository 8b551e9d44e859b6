//! Depth-agnostic anti-aliasing network for EPI reconstruction.
//!
//! A sparse EPI is sheared by each of a fixed set of amounts, passed through
//! a shared reconstruction net that upsamples the angular axis, unsheared,
//! and fused into one dense EPI by a small encoder/decoder. Everything runs
//! on the CPU with hand-written reverse-mode gradients, which is enough for
//! desk-scale training on synthetic EPIs.
//!
//! ```
//! use lfaa_danet::{forward, NetworkConfig, NetworkParams};
//! use lfaa_core::{Epi, Grid2};
//!
//! let cfg = NetworkConfig { alpha_s: 3, shears: vec![0.0], ..NetworkConfig::default() };
//! let params = NetworkParams::<f32>::init(cfg, 7).unwrap();
//! let epi = Epi::synthetic(Grid2::<f32>::filled(6, 72, 0.5));
//! assert_eq!(forward(&params, &epi).unwrap().samples.shape(), (16, 72));
//! ```

pub mod checkpoint;
pub mod exec;
pub mod gradcheck;
pub mod graph;
pub mod network;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod train;

pub use exec::{Executor, Mode, Tape};
pub use graph::{build_fusion_net, build_reconstruction_net, Graph, LayerKind, LayerSpec, ShearCenter, TableRow};
pub use network::{build_network, forward, Network, NetworkConfig, NetworkParams};
pub use ops::loss_l1;
pub use params::{init_prefilter_layer, Params};
pub use tensor::{Real, Tensor};
pub use train::{evaluate, smooth, train, train_from, TrainConfig, TrainError, TrainOutcome};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type NetworkParams32 = NetworkParams<f32>;
pub type NetworkParams64 = NetworkParams<f64>;
