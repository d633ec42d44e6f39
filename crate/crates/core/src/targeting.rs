//! Thresholded long-run targets: the correlation target Ẑ(δ) and its
//! covariance counterpart Σ̂ = Γ Ẑ Γ.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nearest_pd_flagged, SymMatrix, DEFAULT_PD_FLOOR};
use crate::market_data::SampleMoments;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub delta: f64,
    /// Thresholded correlation matrix, before any PD repair.
    pub z_hat: DMatrix<f64>,
    /// Positive definite correlation target actually used in penalties.
    /// Equal to `z_hat` unless `pd_adjusted`.
    pub z_target: SymMatrix,
    pub sigma_hat: SymMatrix,
    pub pd_adjusted: bool,
}

/// Compact record of a target, as embedded in parameter files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub delta: f64,
    pub pd_adjusted: bool,
}

impl TargetSpec {
    pub fn info(&self) -> TargetInfo {
        TargetInfo {
            delta: self.delta,
            pd_adjusted: self.pd_adjusted,
        }
    }

    pub fn dim(&self) -> usize {
        self.z_hat.nrows()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("threshold {delta} is outside [0, 1)")));
    }
    Ok(())
}

/// Keeps off-diagonal correlations with |ρ| > δ, zeroes the rest, and puts
/// ones on the diagonal.
pub fn threshold_correlation(corr: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    check_delta(delta)?;
    if !corr.is_square() {
        return Err(Error::shape("correlation matrix is not square"));
    }
    Ok(DMatrix::from_fn(corr.nrows(), corr.ncols(), |i, j| {
        if i == j {
            1.0
        } else if corr[(i, j)].abs() > delta {
            corr[(i, j)]
        } else {
            0.0
        }
    }))
}

/// Builds Ẑ(δ) and Σ̂. A non-PD Ẑ has its eigenvalues clipped at the default
/// floor and is rescaled back to unit diagonal before forming Σ̂.
pub fn build_target(moments: &SampleMoments, delta: f64) -> Result<TargetSpec> {
    let z_hat = threshold_correlation(&moments.corr, delta)?;
    let (z_target, pd_adjusted) = repair(&z_hat)?;
    let g = &moments.gamma;
    let sigma_hat = SymMatrix::symmetrize(g * z_target.as_matrix() * g);
    Ok(TargetSpec {
        delta,
        z_hat,
        z_target,
        sigma_hat,
        pd_adjusted,
    })
}

fn repair(z_hat: &DMatrix<f64>) -> Result<(SymMatrix, bool)> {
    let z = SymMatrix::new(z_hat.clone())?;
    let (clipped, adjusted) = nearest_pd_flagged(&z, DEFAULT_PD_FLOOR);
    if !adjusted {
        return Ok((z, false));
    }
    let m = clipped.as_matrix();
    let n = m.nrows();
    let scale: Vec<f64> = (0..n).map(|i| m[(i, i)].sqrt().recip()).collect();
    let unit = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] * scale[i] * scale[j]
        }
    });
    Ok((SymMatrix::symmetrize(unit), true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use nalgebra::DVector;

    use crate::fixtures;

    fn moments_from_corr(corr: DMatrix<f64>, sd: &[f64]) -> SampleMoments {
        let gamma = DMatrix::from_diagonal(&DVector::from_row_slice(sd));
        let cov = &gamma * &corr * &gamma;
        SampleMoments { corr, cov, gamma }
    }

    fn nonzero_pairs(z: &DMatrix<f64>) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..z.nrows() {
            for j in (i + 1)..z.ncols() {
                if z[(i, j)] != 0.0 {
                    out.push((i + 1, j + 1));
                }
            }
        }
        out
    }

    #[test]
    fn five_asset_table_thresholds() {
        let r = fixtures::matrix(&fixtures::CORR_5);
        assert_eq!(threshold_correlation(&r, 0.5).unwrap(), r);
        let z = threshold_correlation(&r, 0.71).unwrap();
        assert_eq!(nonzero_pairs(&z), vec![(1, 2), (1, 3), (2, 3), (3, 4), (3, 5)]);
        assert_eq!(threshold_correlation(&r, 0.0).unwrap(), r);
    }

    #[test]
    fn ties_are_zeroed() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(threshold_correlation(&r, 0.5).unwrap()[(0, 1)], 0.0);
    }

    #[test]
    fn delta_out_of_range() {
        let r = DMatrix::identity(2, 2);
        assert!(matches!(threshold_correlation(&r, 1.0), Err(Error::Domain(_))));
        assert!(matches!(threshold_correlation(&r, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_delta_recovers_sample_covariance() {
        let m = moments_from_corr(fixtures::matrix(&fixtures::CORR_5), &[0.02, 0.03, 0.025, 0.04, 0.01]);
        let t = build_target(&m, 0.0).unwrap();
        assert!(!t.pd_adjusted);
        assert!((t.sigma_hat.as_matrix() - &m.cov).amax() < 1e-10);
    }

    #[test]
    fn identity_target_gives_variances() {
        let sd = [0.5, 2.0, 1.5];
        let m = moments_from_corr(DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 1.0, 0.3, 0.1, 0.3, 1.0]), &sd);
        let t = build_target(&m, 0.9).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.25, 4.0, 2.25]));
        assert!((t.sigma_hat.as_matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn eight_asset_target_is_positive_definite() {
        let m = moments_from_corr(fixtures::matrix(&fixtures::CORR_8), &[0.02; 8]);
        let t = build_target(&m, 0.5).unwrap();
        assert!(cholesky(&t.sigma_hat).is_ok());
        assert!(cholesky(&t.z_target).is_ok());
        assert!(t.z_target.as_matrix().diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn non_pd_threshold_is_repaired() {
        // Zeroing the (2,3) entry leaves an indefinite matrix.
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.9, 0.9, 1.0, 0.45, 0.9, 0.45, 1.0]);
        let m = moments_from_corr(r, &[1.0, 1.0, 1.0]);
        let t = build_target(&m, 0.5).unwrap();
        assert!(t.pd_adjusted);
        assert!(cholesky(&t.sigma_hat).is_ok());
        assert_eq!(t.z_hat[(1, 2)], 0.0);
    }

    #[test]
    fn sigma_hat_unscales_to_z_hat() {
        let sd = [0.02, 0.03, 0.025, 0.04, 0.01];
        let m = moments_from_corr(fixtures::matrix(&fixtures::CORR_5), &sd);
        let t = build_target(&m, 0.71).unwrap();
        if !t.pd_adjusted {
            let back = DMatrix::from_fn(5, 5, |i, j| t.sigma_hat.as_matrix()[(i, j)] / (sd[i] * sd[j]));
            assert!((back - &t.z_hat).amax() < 1e-10);
        }
    }

    #[test]
    fn pattern_is_monotone_in_delta() {
        let r = fixtures::matrix(&fixtures::CORR_15);
        let deltas = [0.0, 0.3, 0.5, 0.6, 0.65, 0.71, 0.8, 0.9];
        for w in deltas.windows(2) {
            let lo = threshold_correlation(&r, w[0]).unwrap();
            let hi = threshold_correlation(&r, w[1]).unwrap();
            for (a, b) in lo.iter().zip(hi.iter()) {
                assert!(*b == 0.0 || *a != 0.0);
            }
        }
    }
}
