//! Published layer tables, shared by the structure and acceptance tests.

#![allow(dead_code)]

use lfaa_danet::TableRow;

pub type Row = (&'static str, [usize; 2], [usize; 2], [usize; 2], &'static str);

// Transcribed from the published reconstruction-net table; the sheared
// input f_h(E_LR) is the graph input.
pub const RECONSTRUCTION: [Row; 14] = [
    ("conv1_1", [5, 5], [4, 1], [1, 10], "input"),
    ("conv1_2", [5, 5], [2, 1], [1, 10], "input"),
    ("conv1_3", [5, 5], [1, 1], [1, 10], "input"),
    ("deconv2_1", [3, 3], [2, 1], [10, 10], "conv1_1"),
    ("deconv2_2", [5, 5], [2, 1], [10, 10], "conv1_2"),
    ("conv2_1", [5, 1], [1, 1], [10, 20], "conv1_1"),
    ("conv2_2", [11, 1], [1, 1], [10, 20], "conv1_2 ⊖ deconv2_1"),
    ("conv2_3", [21, 1], [1, 1], [10, 20], "conv1_3 ⊖ deconv2_2"),
    ("conv3_1", [3, 3], [1, 1], [20, 27], "conv2_1"),
    ("conv3_2", [3, 3], [1, 1], [20, 27], "conv2_2"),
    ("conv3_3", [3, 3], [1, 1], [20, 27], "conv2_3"),
    ("deconv4_1", [5, 5], [4, 1], [27, 27], "conv3_1"),
    ("deconv4_2", [5, 5], [2, 1], [27, 27], "conv3_2"),
    ("conv4", [3, 3], [1, 1], [81, 81], "deconv4_1; deconv4_2; conv3_3"),
];

pub const FUSION: [Row; 11] = [
    ("conv1_1", [1, 1], [1, 1], [189, 27], "input"),
    ("conv1_2", [3, 3], [2, 1], [27, 54], "conv1_1"),
    ("conv2_1", [3, 3], [1, 1], [54, 54], "conv1_2"),
    ("conv2_2", [3, 3], [2, 1], [54, 54], "conv2_1"),
    ("conv3_1", [3, 3], [1, 1], [54, 54], "conv2_2"),
    ("conv4", [3, 3], [1, 1], [54, 54], "conv3_1"),
    ("deconv5_1", [5, 5], [2, 1], [54, 54], "conv4"),
    ("conv5_2", [1, 1], [1, 1], [108, 54], "deconv5_1; conv2_1"),
    ("deconv6_1", [5, 5], [2, 1], [54, 27], "conv5_2"),
    ("conv6_2", [1, 1], [1, 1], [54, 27], "deconv6_1; conv1_1"),
    ("conv7", [9, 9], [1, 1], [27, 1], "conv6_2"),
];

pub fn row(r: &Row, norm: bool, activation: bool) -> TableRow {
    TableRow {
        name: r.0.into(),
        kernel: (r.1[0], r.1[1]),
        stride: (r.2[0], r.2[1]),
        channels: (r.3[0], r.3[1]),
        input: r.4.into(),
        norm,
        activation,
    }
}

/// Every reconstruction-net row, including the final `deconv5` whose angular
/// stride is `alpha_s`.
pub fn reconstruction_rows(alpha_s: usize) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = RECONSTRUCTION
        .iter()
        .map(|r| row(r, r.0 == "conv4", !r.0.starts_with("conv2_")))
        .collect();
    rows.push(row(&("deconv5", [9, 9], [1, alpha_s], [81, 27], "conv4"), false, false));
    rows
}

pub fn fusion_rows() -> Vec<TableRow> {
    FUSION.iter().map(|r| row(r, false, r.0 != "conv7")).collect()
}
