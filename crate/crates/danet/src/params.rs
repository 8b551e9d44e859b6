//! Named parameter tensors and their initialisation.

use std::collections::HashMap;

use lfaa_core::spectral::gaussian_kernel;
use lfaa_core::{LfError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{Graph, LayerKind};
use crate::tensor::Real;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
    Prefilter,
    Scale,
    Shift,
    RunningMean,
    RunningVar,
}

impl Role {
    pub fn trainable(self) -> bool {
        !matches!(self, Role::RunningMean | Role::RunningVar)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub role: Role,
}

/// Ordered parameter store; the order is the checkpoint order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T = f32> {
    tensors: Vec<ParamTensor<T>>,
    index: HashMap<String, usize>,
}

/// One gradient buffer per parameter tensor.
pub type Grads<T> = Vec<Vec<T>>;

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self { tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<T>, role: Role) -> Result<usize> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(LfError::Dimension(format!("{name}: {} values for shape {shape:?}", data.len())));
        }
        if self.index.contains_key(&name) {
            return Err(LfError::Invalid(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push(ParamTensor { name, shape, data, role });
        Ok(self.tensors.len() - 1)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.position(name).map(move |i| &mut self.tensors[i])
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.role.trainable()).map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<S: Real>(&self) -> Params<S> {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| S::of(v.to_f64_lossy())).collect(),
                    role: t.role,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Parameters for every weighted layer of `graph`: Gaussian weights with
    /// std [`INIT_STD`], zero biases, Gaussian prefilters, unit norm scales.
    /// Layers sharing a `param_key` get one set of tensors.
    pub fn init(graph: &Graph, seed: u64) -> Result<Self> {
        Self::init_with_std(graph, seed, INIT_STD)
    }

    pub fn init_with_std(graph: &Graph, seed: u64, std: f64) -> Result<Self> {
        graph.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).map_err(|e| LfError::Invalid(format!("init std {std}: {e}")))?;
        let mut p = Self::new();
        for l in &graph.layers {
            if !l.kind.has_weights() || p.position(&format!("{}.{}", l.param_key, suffix(&l.kind))).is_some() {
                continue;
            }
            let key = &l.param_key;
            let (cin, cout) = l.channels;
            let (kw, kh) = l.kernel;
            let mut gauss = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(normal.sample(&mut rng))).collect() };
            match l.kind {
                LayerKind::Conv2d => {
                    p.push(format!("{key}.weight"), vec![cout, cin, kh, kw], gauss(cout * cin * kh * kw), Role::Weight)?;
                    p.push(format!("{key}.bias"), vec![cout], vec![T::zero(); cout], Role::Bias)?;
                }
                LayerKind::Deconv2d => {
                    p.push(format!("{key}.weight"), vec![cin, cout, kh, kw], gauss(cout * cin * kh * kw), Role::Weight)?;
                    p.push(format!("{key}.bias"), vec![cout], vec![T::zero(); cout], Role::Bias)?;
                }
                LayerKind::Prefilter1d { sigma_max } => {
                    let taps = init_prefilter_layer(sigma_max, cout, kw)?;
                    let data = taps.into_iter().flatten().map(T::of).collect();
                    p.push(format!("{key}.weight"), vec![cout, kw], data, Role::Prefilter)?;
                }
                LayerKind::Norm => {
                    p.push(format!("{key}.gamma"), vec![cout], vec![T::one(); cout], Role::Scale)?;
                    p.push(format!("{key}.beta"), vec![cout], vec![T::zero(); cout], Role::Shift)?;
                    p.push(format!("{key}.running_mean"), vec![cout], vec![T::zero(); cout], Role::RunningMean)?;
                    p.push(format!("{key}.running_var"), vec![cout], vec![T::one(); cout], Role::RunningVar)?;
                }
                _ => unreachable!("has_weights"),
            }
        }
        Ok(p)
    }
}

fn suffix(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Norm => "gamma",
        _ => "weight",
    }
}

/// Normalised Gaussian taps per channel, `sigma(c) = sigma_max * c / (channels - 1)`.
///
/// Channel 0 (and the only channel when `channels == 1`) is the unit impulse.
pub fn init_prefilter_layer(sigma_max: f64, channels: usize, length: usize) -> Result<Vec<Vec<f64>>> {
    if channels < 1 || length.is_multiple_of(2) || !(sigma_max >= 0.0) || !sigma_max.is_finite() {
        return Err(LfError::Invalid(format!(
            "prefilter init: channels {channels}, length {length}, sigma_max {sigma_max}"
        )));
    }
    Ok((0..channels).map(|c| gaussian_kernel(prefilter_sigma(sigma_max, c, channels), length / 2)).collect())
}

/// Initial width of prefilter channel `c`.
pub fn prefilter_sigma(sigma_max: f64, c: usize, channels: usize) -> f64 {
    if channels <= 1 {
        0.0
    } else {
        sigma_max * c as f64 / (channels - 1) as f64
    }
}
