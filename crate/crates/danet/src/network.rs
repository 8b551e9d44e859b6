//! The full network: per-shear reconstruction, unshear and fusion.

use lfaa_core::lightfield::upsampled_views;
use lfaa_core::{Epi, Grid2, LfError, Result};
use serde::{Deserialize, Serialize};

use crate::exec::{Executor, Mode, Tape};
use crate::graph::{build_fusion_net, build_reconstruction_net, Graph, LayerKind, LayerSpec, ShearCenter, INPUT, LEAKY_SLOPE};
use crate::params::{prefilter_sigma, Params};
use crate::tensor::{Real, Tensor};

/// Spatial extents must be multiples of this (two stride-2 stages in the fusion net, stride 4 in the reconstruction net).
pub const WIDTH_MULTIPLE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub alpha_s: usize,
    /// Shear amounts `alpha_h`, one reconstruction branch each.
    pub shears: Vec<f64>,
    pub leaky_slope: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { alpha_s: 3, shears: vec![-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0], leaky_slope: LEAKY_SLOPE }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_s < 1 {
            return Err(LfError::Invalid("alpha_s must be >= 1".into()));
        }
        if self.shears.is_empty() || self.shears.iter().any(|a| !a.is_finite()) {
            return Err(LfError::Invalid(format!("shears {:?}", self.shears)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(LfError::Invalid("leaky slope".into()));
        }
        Ok(())
    }
}

/// Name of the reconstruction branch for shear `h`.
pub fn branch(h: usize) -> String {
    format!("shear{h}")
}

/// Input shear, shared-weight reconstruction net and unshear per branch,
/// then the fusion net over the concatenated features.
pub fn build_network(cfg: &NetworkConfig) -> Result<Graph> {
    cfg.validate()?;
    let recon = build_reconstruction_net(cfg.alpha_s)?.with_leaky_slope(cfg.leaky_slope);
    let fusion = build_fusion_net(cfg.shears.len())?.with_leaky_slope(cfg.leaky_slope);
    let mut g = Graph { layers: vec![LayerSpec::input(1)], output: String::new() };
    let mut features = Vec::with_capacity(cfg.shears.len());
    for (h, &alpha) in cfg.shears.iter().enumerate() {
        let b = branch(h);
        let sheared = format!("{b}/in");
        g.layers.push(LayerSpec::shear(&sheared, alpha, ShearCenter::Middle, 1, INPUT));
        let out = g.embed(&recon, &b, "recon", &sheared);
        let back = format!("{b}/out");
        let ch = recon.out_channels();
        g.layers.push(LayerSpec::shear(&back, -alpha / cfg.alpha_s as f64, ShearCenter::Upsampled(cfg.alpha_s), ch, &out));
        features.push(back);
    }
    let refs: Vec<&str> = features.iter().map(String::as_str).collect();
    g.layers.push(LayerSpec::concat("features", recon.out_channels() * features.len(), &refs));
    g.output = g.embed(&fusion, "fusion", "fusion", "features");
    g.validate()?;
    Ok(g)
}

/// Trained or initial weights together with the network they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub config: NetworkConfig,
    pub params: Params<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let graph = build_network(&config)?;
        let params = Params::init(&graph, seed)?;
        Ok(Self { config, params })
    }

    /// Reconstruction-net tensors.
    pub fn theta_r(&self) -> impl Iterator<Item = &crate::params::ParamTensor<T>> {
        self.params.tensors().iter().filter(|t| t.name.starts_with("recon/"))
    }

    /// Fusion-net tensors.
    pub fn theta_f(&self) -> impl Iterator<Item = &crate::params::ParamTensor<T>> {
        self.params.tensors().iter().filter(|t| t.name.starts_with("fusion/"))
    }

    /// Initial per-channel widths of every prefilter layer.
    pub fn prefilter_sigmas(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let graph = build_reconstruction_net(self.config.alpha_s)?;
        Ok(graph
            .layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Prefilter1d { sigma_max } => Some((
                    l.name.clone(),
                    (0..l.channels.1).map(|c| prefilter_sigma(sigma_max, c, l.channels.1)).collect(),
                )),
                _ => None,
            })
            .collect())
    }

    pub fn cast<S: Real>(&self) -> NetworkParams<S> {
        NetworkParams { config: self.config.clone(), params: self.params.cast() }
    }
}

/// A built network ready to run with a compatible parameter store.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub exec: Executor,
}

impl Network {
    pub fn new<T: Real>(np: &NetworkParams<T>) -> Result<Self> {
        let graph = build_network(&np.config)?;
        Ok(Self { config: np.config.clone(), exec: Executor::new(graph, &np.params)? })
    }

    pub fn output_views(&self, views: usize) -> usize {
        upsampled_views(views, self.config.alpha_s)
    }

    /// Batched pass over `[N, 1, S, U]` with `U` a multiple of [`WIDTH_MULTIPLE`].
    pub fn run<T: Real>(&self, params: &Params<T>, x: Tensor<T>, mode: Mode) -> Result<Tape<T>> {
        if x.channels() != 1 || x.height() < 2 || x.width() == 0 || !x.width().is_multiple_of(WIDTH_MULTIPLE) {
            return Err(LfError::Dimension(format!(
                "network input {:?}: one channel, at least 2 views, width a multiple of {WIDTH_MULTIPLE}",
                x.shape()
            )));
        }
        self.exec.forward(params, x, mode)
    }

    /// Reconstructs one EPI with `alpha_s * S - (alpha_s - 1)` views.
    ///
    /// The width is padded to a multiple of [`WIDTH_MULTIPLE`] by repeating
    /// the last column and cropped back afterwards.
    pub fn forward<T: Real>(&self, params: &Params<T>, epi: &Epi<T>) -> Result<Epi<T>> {
        let (s, u) = epi.samples.shape();
        let padded = u.div_ceil(WIDTH_MULTIPLE) * WIDTH_MULTIPLE;
        let g = if padded == u {
            epi.samples.clone()
        } else {
            Grid2::from_fn(s, padded, |r, c| epi.samples.get(r, c.min(u - 1)))
        };
        let tape = self.run(params, Tensor::from_grid(&g), Mode::Eval)?;
        let out = self.exec.output(&tape).to_grid(0, 0);
        let out = if padded == u { out } else { out.crop_cols(0, u) };
        Ok(epi.with_samples(out))
    }
}

/// Convenience wrapper: build the network for `params` and reconstruct `epi`.
pub fn forward<T: Real>(params: &NetworkParams<T>, epi: &Epi<T>) -> Result<Epi<T>> {
    Network::new(params)?.forward(&params.params, epi)
}
