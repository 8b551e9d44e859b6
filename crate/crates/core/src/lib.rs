//! Anti-aliased light field reconstruction.
//!
//! Light fields are stored as [`LightField4D`] and processed one epipolar
//! plane image ([`Epi`]) at a time. The classical pipeline in [`recon`]
//! shears each EPI, splits it into a Laplacian pyramid, prefilters every
//! level against the aliases predicted by [`spectral`], upsamples the views
//! and undoes the shear.

pub mod container;
pub mod error;
pub mod grid;
pub mod lightfield;
pub mod metrics;
pub mod pyramid;
pub mod recon;
pub mod scalar;
pub mod shear;
pub mod spectral;
pub mod synth;

pub use error::{LfError, Result};
pub use grid::{Grid2, Grid3};
pub use lightfield::{reconstruct_4d, DisparityRange, Epi, LightField4D, Provenance};
pub use scalar::Scalar;

pub type Grid2f = Grid2<f32>;
pub type Grid2d = Grid2<f64>;
pub type Epi32 = Epi<f32>;
pub type Epi64 = Epi<f64>;
pub type LightField32 = LightField4D<f32>;
pub type LightField64 = LightField4D<f64>;
