//! Central-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use lfaa_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{Executor, Mode, Tape};
use crate::graph::{Graph, LayerKind, LayerSpec, ShearCenter, INPUT};
use crate::params::Params;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
/// Gradient magnitudes below this are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-4;

/// A small graph with every layer kind: shears about both centre rules,
/// strided and plain convolutions, spatial and angular transposed
/// convolutions, a grouped prefilter, subtraction, concatenation,
/// normalisation and leaky ReLUs.
pub fn toy_graph() -> Graph {
    let layers = vec![
        LayerSpec::input(1),
        LayerSpec::shear("shear", 0.6, ShearCenter::Middle, 1, INPUT),
        LayerSpec::conv("conv_a", (3, 3), (2, 1), (1, 3), "shear"),
        LayerSpec::leaky("act_a", 0.2, 3, "conv_a"),
        LayerSpec::prefilter("prefilter", 5, (3, 6), 0.8, "act_a"),
        LayerSpec::deconv("deconv_a", (3, 3), (2, 1), (6, 3), "prefilter"),
        LayerSpec::conv("conv_b", (3, 3), (1, 1), (1, 3), "shear"),
        LayerSpec::subtract("diff", 3, "conv_b", "deconv_a"),
        LayerSpec::concat("cat", 6, &["diff", "conv_b"]),
        LayerSpec::norm("norm", 6, "cat"),
        LayerSpec::leaky("act_b", 0.2, 6, "norm"),
        LayerSpec::deconv("deconv_b", (3, 5), (1, 3), (6, 2), "act_b"),
        LayerSpec::shear("unshear", -0.4, ShearCenter::Upsampled(3), 2, "deconv_b"),
        LayerSpec::conv("conv_c", (1, 1), (1, 1), (2, 1), "unshear"),
    ];
    Graph { layers, output: "conv_c".into() }
}

/// Kind label used in reports.
pub fn kind_name(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Input => "input",
        LayerKind::Conv2d => "conv",
        LayerKind::Deconv2d => "deconv",
        LayerKind::Prefilter1d { .. } => "prefilter",
        LayerKind::Shear { .. } => "shear",
        LayerKind::Concat => "concat",
        LayerKind::Subtract => "subtract",
        LayerKind::LeakyRelu { .. } => "leaky",
        LayerKind::Norm => "norm",
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    /// Worst relative error per layer kind, over the parameters of that kind
    /// and the gradient flowing into its input.
    pub max_rel_error: BTreeMap<&'static str, f64>,
    pub checked: usize,
    /// Entries whose perturbation moved a leaky ReLU input across zero.
    pub skipped: usize,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.values().copied().fold(0.0, f64::max)
    }

    fn record(&mut self, kind: &'static str, err: f64) {
        let e = self.max_rel_error.entry(kind).or_insert(0.0);
        *e = e.max(err);
        self.checked += 1;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor<f64> {
    let data = (0..shape.iter().product()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape[0], shape[1], shape[2], shape[3], data).expect("shape")
}

/// Signs of every leaky ReLU input, to detect kink crossings.
fn kink_pattern(exec: &Executor, tape: &Tape<f64>) -> Vec<bool> {
    let wiring = exec.graph.wiring().expect("validated");
    exec.graph
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l.kind, LayerKind::LeakyRelu { .. }))
        .flat_map(|(i, _)| tape.outputs[wiring[i][0]].as_slice().iter().map(|&v| v < 0.0).collect::<Vec<_>>())
        .collect()
}

/// Compares analytic gradients of `sum(r * graph(x))` for a random
/// projection `r` against central differences, for every parameter and every
/// input sample. Normalisation layers run in training mode.
pub fn check_graph(graph: &Graph, batch: usize, views: usize, cols: usize, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::init_with_std(graph, seed, 0.4)?;
    for t in params.tensors_mut() {
        if t.role != crate::params::Role::Weight && t.role != crate::params::Role::Prefilter {
            t.data.iter_mut().for_each(|v| *v += 0.2 * rng.random_range(-1.0..1.0));
        }
        if t.role == crate::params::Role::Prefilter {
            t.data.iter_mut().for_each(|v| *v += 0.05 * rng.random_range(-1.0..1.0));
        }
    }
    let exec = Executor::new(graph.clone(), &params)?;
    let x = random_tensor(&mut rng, [batch, graph.in_channels(), views, cols], 1.0);
    let tape = exec.forward(&params, x.clone(), Mode::Train)?;
    let y = exec.output(&tape);
    let r = random_tensor(&mut rng, y.shape(), 1.0);
    let mut grads = params.zero_grads();
    let dx = exec.backward(&params, &tape, r.clone(), &mut grads);

    let objective = |p: &Params<f64>, x: &Tensor<f64>| -> Result<(f64, Vec<bool>)> {
        let t = exec.forward(p, x.clone(), Mode::Train)?;
        let v = exec.output(&t).as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum();
        Ok((v, kink_pattern(&exec, &t)))
    };

    let mut report = GradReport::default();
    // Parameters, attributed to the kind of the layer that owns them.
    let owner: BTreeMap<String, &'static str> = graph
        .layers
        .iter()
        .filter(|l| l.kind.has_weights())
        .map(|l| (l.param_key.clone(), kind_name(&l.kind)))
        .collect();
    for ti in 0..params.len() {
        let t = &params.tensors()[ti];
        if !t.role.trainable() {
            continue;
        }
        let key = t.name.rsplit_once('.').map_or(t.name.as_str(), |(k, _)| k).to_string();
        let kind = owner.get(&key).copied().unwrap_or("other");
        for j in 0..t.data.len() {
            let mut p = params.clone();
            let base = p.tensors()[ti].data[j];
            p.tensors_mut()[ti].data[j] = base + STEP;
            let (plus, kp) = objective(&p, &x)?;
            p.tensors_mut()[ti].data[j] = base - STEP;
            let (minus, km) = objective(&p, &x)?;
            if kp != km {
                report.skipped += 1;
                continue;
            }
            report.record(kind, relative_error(grads[ti][j], (plus - minus) / (2.0 * STEP)));
        }
    }
    // Input gradient: exercises the data path through every layer.
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[j] += STEP;
        let (plus, kp) = objective(&params, &xp)?;
        xp.as_mut_slice()[j] -= 2.0 * STEP;
        let (minus, km) = objective(&params, &xp)?;
        if kp != km {
            report.skipped += 1;
            continue;
        }
        report.record("input", relative_error(dx.as_slice()[j], (plus - minus) / (2.0 * STEP)));
    }
    Ok(report)
}

/// Single-layer graphs, one per layer kind, for isolated checks.
pub fn single_layer_graphs() -> Vec<(&'static str, Graph)> {
    let one = |spec: LayerSpec| Graph { output: spec.name.clone(), layers: vec![LayerSpec::input(2), spec] };
    vec![
        ("conv", one(LayerSpec::conv("l", (3, 5), (2, 2), (2, 3), INPUT))),
        ("deconv", one(LayerSpec::deconv("l", (5, 3), (2, 3), (2, 3), INPUT))),
        ("prefilter", one(LayerSpec::prefilter("l", 7, (2, 4), 1.0, INPUT))),
        ("shear", one(LayerSpec::shear("l", 1.3, ShearCenter::Middle, 2, INPUT))),
        ("norm", one(LayerSpec::norm("l", 2, INPUT))),
        ("leaky", one(LayerSpec::leaky("l", 0.2, 2, INPUT))),
    ]
}
