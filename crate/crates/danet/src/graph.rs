//! Layer graphs for the reconstruction and fusion nets.
//!
//! Kernel and stride pairs are `(spatial, angular)`. Activations and the
//! normalisation are explicit nodes, so a table row such as "conv4 (with
//! norm)" becomes `conv4 -> conv4/norm -> conv4/act`. [`Graph::table`]
//! folds them back for comparison with the published architecture.

use std::collections::HashMap;

use lfaa_core::{LfError, Result};

/// Slope of every leaky ReLU unless overridden.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Name of the graph input node.
pub const INPUT: &str = "input";

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Input,
    Conv2d,
    Deconv2d,
    /// Grouped 1D filter along `u`; `channels.1 / channels.0` outputs per input.
    Prefilter1d { sigma_max: f64 },
    /// Shift of row `s` by `(s - center) * alpha`.
    Shear { alpha: f64, center: ShearCenter },
    Concat,
    /// `inputs[0] - inputs[1]`.
    Subtract,
    LeakyRelu { slope: f64 },
    Norm,
}

impl LayerKind {
    pub fn has_weights(&self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Deconv2d | LayerKind::Prefilter1d { .. } | LayerKind::Norm)
    }
}

/// Where a shear layer pivots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShearCenter {
    /// `S / 2` of the layer's input.
    Middle,
    /// Image of the coarse grid's `S / 2` after angular upsampling by the
    /// factor, so coarse rows keep their columns.
    Upsampled(usize),
    At(f64),
}

impl ShearCenter {
    pub fn resolve(self, rows: usize) -> f64 {
        match self {
            ShearCenter::Middle => rows as f64 / 2.0,
            ShearCenter::Upsampled(a) => {
                let a = a.max(1);
                let coarse = rows.div_ceil(a);
                coarse as f64 / 2.0 * a as f64
            }
            ShearCenter::At(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub channels: (usize, usize),
    pub inputs: Vec<String>,
    /// Parameter tensor prefix. Layers sharing a key share weights.
    pub param_key: String,
}

impl LayerSpec {
    fn new(name: &str, kind: LayerKind, kernel: (usize, usize), stride: (usize, usize), channels: (usize, usize), inputs: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind,
            kernel,
            stride,
            channels,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            param_key: name.to_string(),
        }
    }

    pub fn input(channels: usize) -> Self {
        Self::new(INPUT, LayerKind::Input, (1, 1), (1, 1), (channels, channels), &[])
    }

    pub fn conv(name: &str, kernel: (usize, usize), stride: (usize, usize), channels: (usize, usize), input: &str) -> Self {
        Self::new(name, LayerKind::Conv2d, kernel, stride, channels, &[input])
    }

    pub fn deconv(name: &str, kernel: (usize, usize), stride: (usize, usize), channels: (usize, usize), input: &str) -> Self {
        Self::new(name, LayerKind::Deconv2d, kernel, stride, channels, &[input])
    }

    pub fn prefilter(name: &str, length: usize, channels: (usize, usize), sigma_max: f64, input: &str) -> Self {
        Self::new(name, LayerKind::Prefilter1d { sigma_max }, (length, 1), (1, 1), channels, &[input])
    }

    pub fn shear(name: &str, alpha: f64, center: ShearCenter, channels: usize, input: &str) -> Self {
        Self::new(name, LayerKind::Shear { alpha, center }, (1, 1), (1, 1), (channels, channels), &[input])
    }

    pub fn leaky(name: &str, slope: f64, channels: usize, input: &str) -> Self {
        Self::new(name, LayerKind::LeakyRelu { slope }, (1, 1), (1, 1), (channels, channels), &[input])
    }

    pub fn norm(name: &str, channels: usize, input: &str) -> Self {
        Self::new(name, LayerKind::Norm, (1, 1), (1, 1), (channels, channels), &[input])
    }

    pub fn subtract(name: &str, channels: usize, a: &str, b: &str) -> Self {
        Self::new(name, LayerKind::Subtract, (1, 1), (1, 1), (2 * channels, channels), &[a, b])
    }

    pub fn concat(name: &str, channels: usize, inputs: &[&str]) -> Self {
        Self::new(name, LayerKind::Concat, (1, 1), (1, 1), (channels, channels), inputs)
    }
}

/// One row of an architecture table: a layer with trainable kernels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub name: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub channels: (usize, usize),
    /// Upstream layers, `a ⊖ b` for a difference and `a; b` for a concatenation.
    pub input: String,
    pub norm: bool,
    pub activation: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub layers: Vec<LayerSpec>,
    pub output: String,
}

impl Graph {
    pub fn find(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.find(name).map(|i| &self.layers[i])
    }

    /// Output channels of the final node.
    pub fn out_channels(&self) -> usize {
        self.layer(&self.output).map_or(0, |l| l.channels.1)
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.channels.1)
    }

    /// Indices of each layer's inputs; layers must be topologically ordered.
    pub fn wiring(&self) -> Result<Vec<Vec<usize>>> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let mut ins = Vec::with_capacity(l.inputs.len());
            for name in &l.inputs {
                match seen.get(name.as_str()) {
                    Some(&j) => ins.push(j),
                    None => return Err(LfError::Invalid(format!("layer {} reads {name} before it is defined", l.name))),
                }
            }
            if seen.insert(&l.name, i).is_some() {
                return Err(LfError::Invalid(format!("duplicate layer name {}", l.name)));
            }
            out.push(ins);
        }
        Ok(out)
    }

    /// Checks ordering, arity and channel arithmetic.
    pub fn validate(&self) -> Result<()> {
        let wiring = self.wiring()?;
        let bad = |l: &LayerSpec, why: &str| Err(LfError::Invalid(format!("layer {}: {why}", l.name)));
        for (l, ins) in self.layers.iter().zip(&wiring) {
            let ch: Vec<usize> = ins.iter().map(|&j| self.layers[j].channels.1).collect();
            let arity = match l.kind {
                LayerKind::Input => 0,
                LayerKind::Subtract => 2,
                LayerKind::Concat => usize::MAX,
                _ => 1,
            };
            if arity != usize::MAX && ins.len() != arity {
                return bad(l, "wrong number of inputs");
            }
            if l.kernel.0 == 0 || l.kernel.1 == 0 || l.stride.0 == 0 || l.stride.1 == 0 {
                return bad(l, "zero kernel or stride");
            }
            match l.kind {
                LayerKind::Input => {
                    if l.channels.0 != l.channels.1 || l.channels.1 == 0 {
                        return bad(l, "input channels");
                    }
                }
                LayerKind::Conv2d | LayerKind::Deconv2d => {
                    if ch[0] != l.channels.0 || l.channels.1 == 0 {
                        return bad(l, &format!("expects {} channels, gets {}", l.channels.0, ch[0]));
                    }
                }
                LayerKind::Prefilter1d { sigma_max } => {
                    if ch[0] != l.channels.0 || l.channels.1 % l.channels.0 != 0 || l.kernel.1 != 1 || l.stride != (1, 1) {
                        return bad(l, "prefilter channels must be a multiple of its input");
                    }
                    if l.kernel.0 % 2 == 0 || !(sigma_max >= 0.0) {
                        return bad(l, "prefilter length must be odd and sigma_max non-negative");
                    }
                }
                LayerKind::Shear { alpha, center } => {
                    if !alpha.is_finite() || matches!(center, ShearCenter::At(c) if !c.is_finite()) {
                        return bad(l, "non-finite shear");
                    }
                    if ch[0] != l.channels.1 {
                        return bad(l, "shear changes channels");
                    }
                }
                LayerKind::LeakyRelu { .. } | LayerKind::Norm => {
                    if ch[0] != l.channels.1 {
                        return bad(l, "channel count changes");
                    }
                }
                LayerKind::Subtract => {
                    if ch[0] != ch[1] || ch[0] != l.channels.1 {
                        return bad(l, "operands differ in channels");
                    }
                }
                LayerKind::Concat => {
                    if ins.is_empty() || ch.iter().sum::<usize>() != l.channels.1 {
                        return bad(l, &format!("channels {:?} do not sum to {}", ch, l.channels.1));
                    }
                }
            }
        }
        if self.find(&self.output).is_none() {
            return Err(LfError::Invalid(format!("output {} is not a layer", self.output)));
        }
        Ok(())
    }

    /// Output `(channels, S, U)` of every layer for an input of `S x U`.
    pub fn infer_shapes(&self, views: usize, cols: usize) -> Result<Vec<(usize, usize, usize)>> {
        let wiring = self.wiring()?;
        let mut shapes: Vec<(usize, usize, usize)> = Vec::with_capacity(self.layers.len());
        for (l, ins) in self.layers.iter().zip(&wiring) {
            let shape = match l.kind {
                LayerKind::Input => (l.channels.1, views, cols),
                LayerKind::Conv2d => {
                    let (_, s, u) = shapes[ins[0]];
                    (l.channels.1, s.div_ceil(l.stride.1), u.div_ceil(l.stride.0))
                }
                LayerKind::Deconv2d => {
                    let (_, s, u) = shapes[ins[0]];
                    (l.channels.1, deconv_angular(s, l.stride.1), u * l.stride.0)
                }
                LayerKind::Subtract | LayerKind::Concat => {
                    let first = shapes[ins[0]];
                    if ins.iter().any(|&j| (shapes[j].1, shapes[j].2) != (first.1, first.2)) {
                        return Err(LfError::Dimension(format!(
                            "layer {} joins {:?}",
                            l.name,
                            ins.iter().map(|&j| shapes[j]).collect::<Vec<_>>()
                        )));
                    }
                    (l.channels.1, first.1, first.2)
                }
                _ => {
                    let (_, s, u) = shapes[ins[0]];
                    (l.channels.1, s, u)
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Trainable layers with their logical inputs, activation and norm folded in.
    pub fn table(&self) -> Vec<TableRow> {
        let consumers = |name: &str| -> Vec<&LayerSpec> { self.layers.iter().filter(|l| l.inputs.iter().any(|i| i == name)).collect() };
        let mut rows = Vec::new();
        for l in &self.layers {
            if !matches!(l.kind, LayerKind::Conv2d | LayerKind::Deconv2d | LayerKind::Prefilter1d { .. }) {
                continue;
            }
            let mut norm = false;
            let mut activation = false;
            let mut tip = l.name.as_str();
            loop {
                let next = consumers(tip);
                match next.as_slice() {
                    [n] if n.kind == LayerKind::Norm => norm = true,
                    [n] if matches!(n.kind, LayerKind::LeakyRelu { .. }) => activation = true,
                    _ => break,
                }
                tip = &next[0].name;
            }
            rows.push(TableRow {
                name: l.name.clone(),
                kernel: l.kernel,
                stride: l.stride,
                channels: l.channels,
                input: self.describe(&l.inputs[0]),
                norm,
                activation,
            });
        }
        rows
    }

    fn describe(&self, name: &str) -> String {
        let Some(l) = self.layer(name) else { return name.to_string() };
        match l.kind {
            LayerKind::LeakyRelu { .. } | LayerKind::Norm => self.describe(&l.inputs[0]),
            LayerKind::Subtract => format!("{} ⊖ {}", self.describe(&l.inputs[0]), self.describe(&l.inputs[1])),
            LayerKind::Concat => l.inputs.iter().map(|i| self.describe(i)).collect::<Vec<_>>().join("; "),
            _ => l.name.clone(),
        }
    }

    /// Copies `sub` into this graph with prefixed names, feeding its input
    /// node from `source`. Returns the name of the embedded output.
    pub fn embed(&mut self, sub: &Graph, prefix: &str, param_prefix: &str, source: &str) -> String {
        let rename = |n: &str| if n == INPUT { source.to_string() } else { format!("{prefix}/{n}") };
        for l in sub.layers.iter().filter(|l| l.kind != LayerKind::Input) {
            let mut l = l.clone();
            l.param_key = format!("{param_prefix}/{}", l.param_key);
            l.name = rename(&l.name);
            l.inputs = l.inputs.iter().map(|i| rename(i)).collect();
            self.layers.push(l);
        }
        rename(&sub.output)
    }

    /// Replaces the slope of every leaky ReLU.
    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        for l in &mut self.layers {
            if let LayerKind::LeakyRelu { slope: s } = &mut l.kind {
                *s = slope;
            }
        }
        self
    }
}

/// Angular output length of a transposed convolution: input rows land on
/// every `stride`-th output row and the output ends on the last of them.
pub fn deconv_angular(rows: usize, stride: usize) -> usize {
    if rows == 0 {
        0
    } else {
        stride * (rows - 1) + 1
    }
}

/// Builder that appends a layer and, optionally, its activation.
struct Builder {
    layers: Vec<LayerSpec>,
    slope: f64,
}

impl Builder {
    fn new(in_channels: usize) -> Self {
        Self { layers: vec![LayerSpec::input(in_channels)], slope: LEAKY_SLOPE }
    }

    /// Adds `spec`; returns the name downstream layers should read.
    fn push(&mut self, spec: LayerSpec, norm: bool, act: bool) -> String {
        let mut tip = spec.name.clone();
        let ch = spec.channels.1;
        self.layers.push(spec);
        if norm {
            let name = format!("{tip}/norm");
            self.layers.push(LayerSpec::norm(&name, ch, &tip));
            tip = name;
        }
        if act {
            let name = format!("{}/act", tip.split('/').next().unwrap_or(&tip));
            self.layers.push(LayerSpec::leaky(&name, self.slope, ch, &tip));
            tip = name;
        }
        tip
    }

    fn finish(self, output: String) -> Result<Graph> {
        let g = Graph { layers: self.layers, output };
        g.validate()?;
        Ok(g)
    }
}

/// Initial prefilter `sigma_max` for a layer working at spatial factor `alpha_u`.
///
/// 1.8 at full resolution keeps the 21-tap truncated Gaussian's response
/// monotone on `[0, pi]`; coarser scales get proportionally narrower kernels.
pub fn prefilter_sigma_max(alpha_u: usize) -> f64 {
    1.8 / alpha_u as f64
}

/// The reconstruction net: sheared input EPI to `27` feature channels on
/// `alpha_s * S - (alpha_s - 1)` views.
pub fn build_reconstruction_net(alpha_s: usize) -> Result<Graph> {
    if alpha_s < 1 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    let mut b = Builder::new(1);
    let c11 = b.push(LayerSpec::conv("conv1_1", (5, 5), (4, 1), (1, 10), INPUT), false, true);
    let c12 = b.push(LayerSpec::conv("conv1_2", (5, 5), (2, 1), (1, 10), INPUT), false, true);
    let c13 = b.push(LayerSpec::conv("conv1_3", (5, 5), (1, 1), (1, 10), INPUT), false, true);
    let d21 = b.push(LayerSpec::deconv("deconv2_1", (3, 3), (2, 1), (10, 10), &c11), false, true);
    let d22 = b.push(LayerSpec::deconv("deconv2_2", (5, 5), (2, 1), (10, 10), &c12), false, true);
    b.layers.push(LayerSpec::subtract("band2", 10, &c12, &d21));
    b.layers.push(LayerSpec::subtract("band3", 10, &c13, &d22));
    let p1 = b.push(LayerSpec::prefilter("conv2_1", 5, (10, 20), prefilter_sigma_max(4), &c11), false, false);
    let p2 = b.push(LayerSpec::prefilter("conv2_2", 11, (10, 20), prefilter_sigma_max(2), "band2"), false, false);
    let p3 = b.push(LayerSpec::prefilter("conv2_3", 21, (10, 20), prefilter_sigma_max(1), "band3"), false, false);
    let c31 = b.push(LayerSpec::conv("conv3_1", (3, 3), (1, 1), (20, 27), &p1), false, true);
    let c32 = b.push(LayerSpec::conv("conv3_2", (3, 3), (1, 1), (20, 27), &p2), false, true);
    let c33 = b.push(LayerSpec::conv("conv3_3", (3, 3), (1, 1), (20, 27), &p3), false, true);
    let d41 = b.push(LayerSpec::deconv("deconv4_1", (5, 5), (4, 1), (27, 27), &c31), false, true);
    let d42 = b.push(LayerSpec::deconv("deconv4_2", (5, 5), (2, 1), (27, 27), &c32), false, true);
    b.layers.push(LayerSpec::concat("merge4", 81, &[&d41, &d42, &c33]));
    let c4 = b.push(LayerSpec::conv("conv4", (3, 3), (1, 1), (81, 81), "merge4"), true, true);
    let out = b.push(LayerSpec::deconv("deconv5", (9, 9), (1, alpha_s), (81, 27), &c4), false, false);
    b.finish(out)
}

/// The fusion net over `27 * num_shears` concatenated feature channels.
pub fn build_fusion_net(num_shears: usize) -> Result<Graph> {
    if num_shears < 1 {
        return Err(LfError::Invalid("fusion needs at least one shear".into()));
    }
    let mut b = Builder::new(27 * num_shears);
    let c11 = b.push(LayerSpec::conv("conv1_1", (1, 1), (1, 1), (27 * num_shears, 27), INPUT), false, true);
    let c12 = b.push(LayerSpec::conv("conv1_2", (3, 3), (2, 1), (27, 54), &c11), false, true);
    let c21 = b.push(LayerSpec::conv("conv2_1", (3, 3), (1, 1), (54, 54), &c12), false, true);
    let c22 = b.push(LayerSpec::conv("conv2_2", (3, 3), (2, 1), (54, 54), &c21), false, true);
    let c31 = b.push(LayerSpec::conv("conv3_1", (3, 3), (1, 1), (54, 54), &c22), false, true);
    let c4 = b.push(LayerSpec::conv("conv4", (3, 3), (1, 1), (54, 54), &c31), false, true);
    let d51 = b.push(LayerSpec::deconv("deconv5_1", (5, 5), (2, 1), (54, 54), &c4), false, true);
    b.layers.push(LayerSpec::concat("skip5", 108, &[&d51, &c21]));
    let c52 = b.push(LayerSpec::conv("conv5_2", (1, 1), (1, 1), (108, 54), "skip5"), false, true);
    let d61 = b.push(LayerSpec::deconv("deconv6_1", (5, 5), (2, 1), (54, 27), &c52), false, true);
    b.layers.push(LayerSpec::concat("skip6", 54, &[&d61, &c11]));
    let c62 = b.push(LayerSpec::conv("conv6_2", (1, 1), (1, 1), (54, 27), "skip6"), false, true);
    let out = b.push(LayerSpec::conv("conv7", (9, 9), (1, 1), (27, 1), &c62), false, false);
    b.finish(out)
}
