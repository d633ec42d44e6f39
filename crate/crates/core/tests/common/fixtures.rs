// Daily log-return correlations of 15 NYSE stocks over calendar year 2020.
#![allow(dead_code)]

pub const LABELS_15: [&str; 15] = ["MSFT", "AMZN", "CRM", "FB", "AAPL", "VZ", "GOOG", "V", "GM", "GS", "KO", "BA", "JPM", "INTC", "CSCO"];

pub const LABELS_8: [&str; 8] = ["MSFT", "AMZN", "CRM", "FB", "AAPL", "KO", "BA", "JPM"];

pub const LABELS_5: [&str; 5] = ["MSFT", "AMZN", "CRM", "FB", "AAPL"];

pub const CORR_5: [[f64; 5]; 5] = [
    [1.0, 0.7712, 0.7690, 0.6855, 0.6914],
    [0.7712, 1.0, 0.8435, 0.7028, 0.6458],
    [0.7690, 0.8435, 1.0, 0.7413, 0.7508],
    [0.6855, 0.7028, 0.7413, 1.0, 0.6121],
    [0.6914, 0.6458, 0.7508, 0.6121, 1.0],
];

pub const CORR_8: [[f64; 8]; 8] = [
    [1.0, 0.7712, 0.7690, 0.6855, 0.6914, 0.4038, 0.4834, 0.4387],
    [0.7712, 1.0, 0.8435, 0.7028, 0.6458, 0.4810, 0.5412, 0.5580],
    [0.7690, 0.8435, 1.0, 0.7413, 0.7508, 0.4798, 0.5912, 0.5838],
    [0.6855, 0.7028, 0.7413, 1.0, 0.6121, 0.2451, 0.2697, 0.3162],
    [0.6914, 0.6458, 0.7508, 0.6121, 1.0, 0.3995, 0.4562, 0.4472],
    [0.4038, 0.4810, 0.4798, 0.2451, 0.3995, 1.0, 0.7211, 0.6461],
    [0.4834, 0.5412, 0.5912, 0.2697, 0.4562, 0.7211, 1.0, 0.7304],
    [0.4387, 0.5580, 0.5838, 0.3162, 0.4472, 0.6461, 0.7304, 1.0],
];

pub const CORR_15: [[f64; 15]; 15] = [
    [1.0, 0.7712, 0.7690, 0.6855, 0.6914, 0.8067, 0.4671, 0.5619, 0.6656, 0.4566, 0.4038, 0.4834, 0.4387, 0.5493, 0.5777],
    [0.7712, 1.0, 0.8435, 0.7028, 0.6458, 0.7581, 0.4539, 0.6225, 0.7123, 0.5523, 0.4810, 0.5412, 0.5580, 0.6333, 0.6596],
    [0.7690, 0.8435, 1.0, 0.7413, 0.7508, 0.8558, 0.4849, 0.6484, 0.7830, 0.6080, 0.4798, 0.5912, 0.5838, 0.7187, 0.7171],
    [0.6855, 0.7028, 0.7413, 1.0, 0.6121, 0.6837, 0.2288, 0.3825, 0.4519, 0.3955, 0.2451, 0.2697, 0.3162, 0.5065, 0.4991],
    [0.6914, 0.6458, 0.7508, 0.6121, 1.0, 0.6846, 0.4191, 0.5118, 0.6353, 0.4143, 0.3995, 0.4562, 0.4472, 0.5170, 0.5358],
    [0.8067, 0.7581, 0.8558, 0.6837, 0.6846, 1.0, 0.5379, 0.6644, 0.7903, 0.5877, 0.5163, 0.6020, 0.6172, 0.6535, 0.6838],
    [0.4671, 0.4539, 0.4849, 0.2288, 0.4191, 0.5379, 1.0, 0.7488, 0.7014, 0.4135, 0.6972, 0.7590, 0.5881, 0.4913, 0.5131],
    [0.5619, 0.6225, 0.6484, 0.3825, 0.5118, 0.6644, 0.7488, 1.0, 0.7604, 0.5899, 0.6963, 0.8907, 0.7001, 0.5981, 0.6526],
    [0.6656, 0.7123, 0.7830, 0.4519, 0.6353, 0.7903, 0.7014, 0.7604, 1.0, 0.6280, 0.6541, 0.7773, 0.7363, 0.6404, 0.7295],
    [0.4566, 0.5523, 0.6080, 0.3955, 0.4143, 0.5877, 0.4135, 0.5899, 0.6280, 1.0, 0.4366, 0.5975, 0.7133, 0.5698, 0.6544],
    [0.4038, 0.4810, 0.4798, 0.2451, 0.3995, 0.5163, 0.6972, 0.6963, 0.6541, 0.4366, 1.0, 0.7211, 0.6461, 0.4908, 0.5061],
    [0.4834, 0.5412, 0.5912, 0.2697, 0.4562, 0.6020, 0.7590, 0.8907, 0.7773, 0.5975, 0.7211, 1.0, 0.7304, 0.5663, 0.6145],
    [0.4387, 0.5580, 0.5838, 0.3162, 0.4472, 0.6172, 0.5881, 0.7001, 0.7363, 0.7133, 0.6461, 0.7304, 1.0, 0.5542, 0.5984],
    [0.5493, 0.6333, 0.7187, 0.5065, 0.5170, 0.6535, 0.4913, 0.5981, 0.6404, 0.5698, 0.4908, 0.5663, 0.5542, 1.0, 0.6700],
    [0.5777, 0.6596, 0.7171, 0.4991, 0.5358, 0.6838, 0.5131, 0.6526, 0.7295, 0.6544, 0.5061, 0.6145, 0.5984, 0.6700, 1.0],
];

pub fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn matrix<const N: usize>(rows: &[[f64; N]; N]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(N, N, |i, j| rows[i][j])
}
