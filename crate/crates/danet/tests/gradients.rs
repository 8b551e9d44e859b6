use lfaa_danet::exec::{Executor, Mode};
use lfaa_danet::gradcheck::{check_graph, relative_error, single_layer_graphs, toy_graph};
use lfaa_danet::graph::{LayerSpec, ShearCenter, INPUT};
use lfaa_danet::params::Params;
use lfaa_danet::{Graph, Tensor};

#[test]
fn toy_graph_covers_every_kind() {
    let g = toy_graph();
    g.validate().unwrap();
    let report = check_graph(&g, 2, 6, 24, 3).unwrap();
    for kind in ["conv", "deconv", "prefilter", "norm", "input"] {
        assert!(report.max_rel_error.contains_key(kind), "{kind} not checked: {report:?}");
    }
    assert!(report.worst() <= 1e-4, "{report:?}");
    assert!(report.skipped * 20 < report.checked, "{report:?}");
}

#[test]
fn isolated_layers() {
    for (kind, g) in single_layer_graphs() {
        let report = check_graph(&g, 2, 6, 24, 11).unwrap();
        assert!(report.worst() <= 1e-4, "{kind}: {report:?}");
        assert!(report.checked > 0);
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(1.0, 1.0), 0.0);
    assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    // Below the floor the difference is measured against 1e-4.
    assert!((relative_error(1e-8, 0.0) - 1e-4).abs() < 1e-12);
}

fn shear_only(alpha: f64) -> Graph {
    Graph {
        layers: vec![LayerSpec::input(1), LayerSpec::shear("s", alpha, ShearCenter::Middle, 1, INPUT)],
        output: "s".into(),
    }
}

#[test]
fn integer_shear_gradient_is_a_permutation() {
    let g = shear_only(2.0);
    let p = Params::<f64>::new();
    let exec = Executor::new(g, &p).unwrap();
    let (rows, cols) = (4, 12);
    let x = Tensor::zeros(1, 1, rows, cols);
    let tape = exec.forward(&p, x, Mode::Eval).unwrap();
    let dy = Tensor::from_vec(1, 1, rows, cols, (0..rows * cols).map(|i| i as f64 + 1.0).collect()).unwrap();
    let dx = exec.backward(&p, &tape, dy.clone(), &mut p.zero_grads());
    // Row s moves by 2 * (s - 2); each upstream value lands on one input
    // position or leaves the grid.
    for s in 0..rows {
        for u in 0..cols {
            let src = u as isize + 2 * (s as isize - 2);
            if (0..cols as isize).contains(&src) {
                assert_eq!(dx.get(0, 0, s, src as usize), dy.get(0, 0, s, u));
            }
        }
    }
    let mut seen: Vec<f64> = dx.as_slice().iter().copied().filter(|&v| v != 0.0).collect();
    seen.sort_by(f64::total_cmp);
    seen.dedup();
    assert_eq!(seen.len(), dx.as_slice().iter().filter(|&&v| v != 0.0).count());
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let g = toy_graph();
    let p = Params::<f64>::init_with_std(&g, 1, 0.3).unwrap();
    let exec = Executor::new(g, &p).unwrap();
    let x = Tensor::from_vec(1, 1, 6, 24, (0..144).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let tape = exec.forward(&p, x, Mode::Train).unwrap();
    let y = exec.output(&tape);
    let mut grads = p.zero_grads();
    let dx = exec.backward(&p, &tape, Tensor::zeros(y.batch(), y.channels(), y.height(), y.width()), &mut grads);
    assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    assert!(grads.iter().flatten().all(|&v| v == 0.0));
}
