//! Fixed workloads shared by the benchmarks.

use mgarch_core::bekk::bekk_simulate;
use mgarch_core::{BekkParams, DMatrix, ReturnPanel, SymMatrix};

/// A stationary diagonal BEKK with `n` assets and mild cross-correlation.
pub fn bekk_params(n: usize) -> BekkParams {
    let c = DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 0.1,
        std::cmp::Ordering::Greater => 0.03,
        std::cmp::Ordering::Less => 0.0,
    });
    BekkParams::new(c, vec![0.3; n], vec![0.9; n]).expect("valid parameters")
}

pub fn bekk_panel(n: usize, t_len: usize, seed: u64) -> ReturnPanel {
    let p = bekk_params(n);
    let h1 = p.unconditional_cov();
    let labels = (0..n).map(|i| format!("A{i}")).collect();
    bekk_simulate(&p, &vec![0.0; n], t_len, seed, &h1, labels).expect("simulation")
}

/// Deterministic symmetric positive definite matrix M Mᵀ + n I.
pub fn spd(n: usize, seed: u64) -> SymMatrix {
    let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64 + seed as f64).sin());
    SymMatrix::symmetrize(&m * m.transpose() + DMatrix::identity(n, n) * n as f64)
}
