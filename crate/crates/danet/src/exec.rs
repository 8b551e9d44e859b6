//! Forward and reverse passes over a [`Graph`].

use lfaa_core::{LfError, Result};

use crate::graph::{deconv_angular, Graph, LayerKind};
use crate::ops::{self, ConvGeom, NormCache};
use crate::params::{Grads, Params};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalisation layers.
    Train,
    /// Running statistics; the pass is a deterministic function of the input.
    Eval,
}

/// Parameter slots a layer reads.
#[derive(Clone, Copy, Debug, Default)]
struct Slots {
    weight: Option<usize>,
    bias: Option<usize>,
    gamma: Option<usize>,
    beta: Option<usize>,
    mean: Option<usize>,
    var: Option<usize>,
}

/// Activations and caches of one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    pub outputs: Vec<Tensor<T>>,
    norms: Vec<Option<NormCache<T>>>,
    mode: Mode,
}

impl<T: Real> Tape<T> {
    pub fn output(&self, exec: &Executor, name: &str) -> Option<&Tensor<T>> {
        exec.graph.find(name).map(|i| &self.outputs[i])
    }
}

/// A graph bound to the layout of a parameter store.
#[derive(Clone, Debug)]
pub struct Executor {
    pub graph: Graph,
    wiring: Vec<Vec<usize>>,
    slots: Vec<Slots>,
    out: usize,
}

impl Executor {
    pub fn new<T: Real>(graph: Graph, params: &Params<T>) -> Result<Self> {
        graph.validate()?;
        let wiring = graph.wiring()?;
        let lookup = |key: &str, field: &str| -> Result<Option<usize>> {
            params
                .position(&format!("{key}.{field}"))
                .map(Some)
                .ok_or_else(|| LfError::Invalid(format!("missing parameter {key}.{field}")))
        };
        let mut slots = Vec::with_capacity(graph.layers.len());
        for l in &graph.layers {
            let k = &l.param_key;
            let s = match l.kind {
                LayerKind::Conv2d | LayerKind::Deconv2d => Slots {
                    weight: lookup(k, "weight")?,
                    bias: lookup(k, "bias")?,
                    ..Slots::default()
                },
                LayerKind::Prefilter1d { .. } => Slots { weight: lookup(k, "weight")?, ..Slots::default() },
                LayerKind::Norm => Slots {
                    gamma: lookup(k, "gamma")?,
                    beta: lookup(k, "beta")?,
                    mean: lookup(k, "running_mean")?,
                    var: lookup(k, "running_var")?,
                    ..Slots::default()
                },
                _ => Slots::default(),
            };
            if let Some(w) = s.weight {
                let expect = l.channels.0 * l.channels.1 * l.kernel.0 * l.kernel.1;
                let expect = match l.kind {
                    LayerKind::Prefilter1d { .. } => l.channels.1 * l.kernel.0,
                    _ => expect,
                };
                if params.tensors()[w].data.len() != expect {
                    return Err(LfError::Dimension(format!("parameter {k}.weight does not fit layer {}", l.name)));
                }
            }
            slots.push(s);
        }
        let out = graph.find(&graph.output).expect("validated");
        Ok(Self { graph, wiring, slots, out })
    }

    fn conv_geom(&self, i: usize, big: (usize, usize), small: (usize, usize), channels: usize) -> ConvGeom {
        let l = &self.graph.layers[i];
        ConvGeom { channels, kh: l.kernel.1, kw: l.kernel.0, sh: l.stride.1, sw: l.stride.0, big, small }
    }

    /// Runs the graph. Non-finite activations abort with the layer name.
    pub fn forward<T: Real>(&self, params: &Params<T>, input: Tensor<T>, mode: Mode) -> Result<Tape<T>> {
        let g = &self.graph;
        if input.channels() != g.in_channels() {
            return Err(LfError::Dimension(format!("graph takes {} channels, got {}", g.in_channels(), input.channels())));
        }
        let p = params.tensors();
        let n = g.layers.len();
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        let mut input = Some(input);
        for (i, l) in g.layers.iter().enumerate() {
            let ins = &self.wiring[i];
            let s = self.slots[i];
            let mut norm_cache = None;
            let y = match l.kind {
                LayerKind::Input => input.take().expect("single input node"),
                LayerKind::Conv2d => {
                    let x = &outputs[ins[0]];
                    let big = (x.height(), x.width());
                    let small = (big.0.div_ceil(l.stride.1), big.1.div_ceil(l.stride.0));
                    let geom = self.conv_geom(i, big, small, l.channels.0);
                    ops::conv_forward(x, &p[s.weight.unwrap()].data, &p[s.bias.unwrap()].data, &geom, l.channels.1)
                }
                LayerKind::Deconv2d => {
                    let x = &outputs[ins[0]];
                    let small = (x.height(), x.width());
                    let big = (deconv_angular(small.0, l.stride.1), small.1 * l.stride.0);
                    let geom = self.conv_geom(i, big, small, l.channels.1);
                    ops::deconv_forward(x, &p[s.weight.unwrap()].data, &p[s.bias.unwrap()].data, &geom, l.channels.0)
                }
                LayerKind::Prefilter1d { .. } => {
                    ops::prefilter_forward(&outputs[ins[0]], &p[s.weight.unwrap()].data, l.channels.1, l.kernel.0)
                }
                LayerKind::Shear { alpha, center } => {
                    let x = &outputs[ins[0]];
                    ops::shear_forward(x, alpha, center.resolve(x.height()))
                }
                LayerKind::Concat => {
                    let parts: Vec<&Tensor<T>> = ins.iter().map(|&j| &outputs[j]).collect();
                    Tensor::concat(&parts)?
                }
                LayerKind::Subtract => {
                    let (a, b) = (&outputs[ins[0]], &outputs[ins[1]]);
                    if !a.same_shape(b) {
                        return Err(LfError::Dimension(format!("layer {}: {:?} minus {:?}", l.name, a.shape(), b.shape())));
                    }
                    let mut y = a.clone();
                    y.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(v, &w)| *v = *v - w);
                    y
                }
                LayerKind::LeakyRelu { slope } => ops::leaky_forward(&outputs[ins[0]], slope),
                LayerKind::Norm => {
                    let running = match mode {
                        Mode::Eval => Some((&p[s.mean.unwrap()].data[..], &p[s.var.unwrap()].data[..])),
                        Mode::Train => None,
                    };
                    let (y, cache) = ops::norm_forward(&outputs[ins[0]], &p[s.gamma.unwrap()].data, &p[s.beta.unwrap()].data, running);
                    norm_cache = Some(cache);
                    y
                }
            };
            if !y.is_finite() {
                return Err(LfError::NonFinite(format!("activation of layer {}", l.name)));
            }
            outputs.push(y);
            norms.push(norm_cache);
        }
        Ok(Tape { outputs, norms, mode })
    }

    pub fn output<'a, T: Real>(&self, tape: &'a Tape<T>) -> &'a Tensor<T> {
        &tape.outputs[self.out]
    }

    /// Back-propagates `dout` from the graph output. Parameter gradients
    /// accumulate into `grads`; the input gradient is returned.
    pub fn backward<T: Real>(&self, params: &Params<T>, tape: &Tape<T>, dout: Tensor<T>, grads: &mut Grads<T>) -> Tensor<T> {
        let g = &self.graph;
        let p = params.tensors();
        let mut dys: Vec<Option<Tensor<T>>> = vec![None; g.layers.len()];
        dys[self.out] = Some(dout);
        let accumulate = |dys: &mut Vec<Option<Tensor<T>>>, j: usize, d: Tensor<T>| match &mut dys[j] {
            Some(t) => t.add_assign(&d),
            slot => *slot = Some(d),
        };
        for i in (0..g.layers.len()).rev() {
            let l = &g.layers[i];
            let Some(dy) = dys[i].take() else { continue };
            let ins = &self.wiring[i];
            let s = self.slots[i];
            match l.kind {
                LayerKind::Input => {
                    dys[i] = Some(dy);
                    break;
                }
                LayerKind::Conv2d => {
                    let x = &tape.outputs[ins[0]];
                    let big = (x.height(), x.width());
                    let geom = self.conv_geom(i, big, (dy.height(), dy.width()), l.channels.0);
                    let (w, b) = (s.weight.unwrap(), s.bias.unwrap());
                    let mut db = std::mem::take(&mut grads[b]);
                    let dx = ops::conv_backward(x, &dy, &p[w].data, &geom, l.channels.1, &mut grads[w], &mut db);
                    grads[b] = db;
                    accumulate(&mut dys, ins[0], dx);
                }
                LayerKind::Deconv2d => {
                    let x = &tape.outputs[ins[0]];
                    let geom = self.conv_geom(i, (dy.height(), dy.width()), (x.height(), x.width()), l.channels.1);
                    let (w, b) = (s.weight.unwrap(), s.bias.unwrap());
                    let mut db = std::mem::take(&mut grads[b]);
                    let dx = ops::deconv_backward(x, &dy, &p[w].data, &geom, l.channels.0, &mut grads[w], &mut db);
                    grads[b] = db;
                    accumulate(&mut dys, ins[0], dx);
                }
                LayerKind::Prefilter1d { .. } => {
                    let w = s.weight.unwrap();
                    let dx = ops::prefilter_backward(&tape.outputs[ins[0]], &dy, &p[w].data, l.kernel.0, &mut grads[w]);
                    accumulate(&mut dys, ins[0], dx);
                }
                LayerKind::Shear { alpha, center } => {
                    let dx = ops::shear_backward(&dy, alpha, center.resolve(dy.height()));
                    accumulate(&mut dys, ins[0], dx);
                }
                LayerKind::Concat => {
                    let mut start = 0;
                    for &j in ins {
                        let c = tape.outputs[j].channels();
                        accumulate(&mut dys, j, dy.channel_range(start, c));
                        start += c;
                    }
                }
                LayerKind::Subtract => {
                    let mut neg = dy.clone();
                    neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                    accumulate(&mut dys, ins[0], dy);
                    accumulate(&mut dys, ins[1], neg);
                }
                LayerKind::LeakyRelu { slope } => {
                    let dx = ops::leaky_backward(&tape.outputs[ins[0]], &dy, slope);
                    accumulate(&mut dys, ins[0], dx);
                }
                LayerKind::Norm => {
                    let cache = tape.norms[i].as_ref().expect("norm cache");
                    let (gi, bi) = (s.gamma.unwrap(), s.beta.unwrap());
                    let mut dgamma = std::mem::take(&mut grads[gi]);
                    let mut dbeta = std::mem::take(&mut grads[bi]);
                    let dx = ops::norm_backward(&dy, cache, &p[gi].data, &mut dgamma, &mut dbeta);
                    grads[gi] = dgamma;
                    grads[bi] = dbeta;
                    accumulate(&mut dys, ins[0], dx);
                }
            }
        }
        let input = g.layers.iter().position(|l| l.kind == LayerKind::Input).expect("input node");
        dys[input].take().unwrap_or_else(|| {
            let x = &tape.outputs[input];
            Tensor::zeros(x.batch(), x.channels(), x.height(), x.width())
        })
    }

    /// Folds the batch statistics of a training pass into the running
    /// estimates: `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running_stats<T: Real>(&self, params: &mut Params<T>, tape: &Tape<T>, momentum: f64) {
        if tape.mode != Mode::Train {
            return;
        }
        let m = T::of(momentum);
        let keep = T::one() - m;
        for (i, cache) in tape.norms.iter().enumerate() {
            let Some((mean, var)) = cache.as_ref().and_then(|c| c.batch_stats.as_ref()) else { continue };
            let s = self.slots[i];
            let t = params.tensors_mut();
            for (r, &b) in t[s.mean.unwrap()].data.iter_mut().zip(mean) {
                *r = m * *r + keep * b;
            }
            for (r, &b) in t[s.var.unwrap()].data.iter_mut().zip(var) {
                *r = m * *r + keep * b;
            }
        }
    }
}
