//! Dense symmetric-matrix kernels.
//!
//! Determinants and quadratic forms all go through a Cholesky factor; nothing
//! in the likelihood code forms an explicit inverse.

use std::borrow::Borrow;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DEFAULT_PD_FLOOR: f64 = 1e-8;

/// Symmetric real matrix. Construction symmetrizes as (M + Mᵀ)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry (to 1e-12, relative to
    /// the largest entry when that exceeds one).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("matrix has non-finite entries"));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::domain(format!("matrix is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self::symmetrize(m))
    }

    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Borrow<DMatrix<f64>> for SymMatrix {
    fn borrow(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Lower Cholesky factor with its log-determinant.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: DMatrix<f64>,
    logdet: f64,
}

impl CholFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// xᵀ M⁻¹ x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        forward_solve_in_place(&self.lower, &mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// Solves M y = x.
    pub fn solve(&self, x: &[f64]) -> DVector<f64> {
        let mut y = x.to_vec();
        forward_solve_in_place(&self.lower, &mut y);
        backward_solve_transposed_in_place(&self.lower, &mut y);
        DVector::from_vec(y)
    }

    /// Tr(M⁻¹ K Kᵀ) for a given factor K, computed as ‖L⁻¹K‖²_F.
    pub fn trace_inv_gram(&self, k: &DMatrix<f64>) -> f64 {
        trace_inv_gram(&self.lower, k, &mut vec![0.0; self.dim()])
    }
}

/// Factors `a` in place: the lower triangle receives L and the strict upper
/// triangle is zeroed. Returns log|A|.
pub(crate) fn cholesky_in_place(a: &mut DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        a[(j, j)] = ljj;
        logdet += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / ljj;
        }
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(logdet)
}

pub(crate) fn forward_solve_in_place(l: &DMatrix<f64>, y: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
}

fn backward_solve_transposed_in_place(l: &DMatrix<f64>, y: &mut [f64]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
}

pub(crate) fn trace_inv_gram(l: &DMatrix<f64>, k: &DMatrix<f64>, col: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..k.ncols() {
        col.copy_from_slice(k.column(c).as_slice());
        forward_solve_in_place(l, col);
        total += col.iter().map(|v| v * v).sum::<f64>();
    }
    total
}

pub fn cholesky(m: &SymMatrix) -> Result<CholFactor> {
    let mut lower = m.as_matrix().clone();
    let logdet = cholesky_in_place(&mut lower)?;
    Ok(CholFactor { lower, logdet })
}

/// Lower-triangular L with L·Lᵀ = m.
pub fn chol_sqrt(m: &SymMatrix) -> Result<DMatrix<f64>> {
    Ok(cholesky(m)?.lower)
}

/// Clips eigenvalues below `floor` up to `floor`. The second element reports
/// whether anything was clipped; when nothing was, the input is returned as is.
pub fn nearest_pd_flagged(m: &SymMatrix, floor: f64) -> (SymMatrix, bool) {
    assert!(floor > 0.0, "floor must be positive");
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    if eig.eigenvalues.min() >= floor {
        return (m.clone(), false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (SymMatrix::symmetrize(rebuilt), true)
}

pub fn nearest_pd(m: &SymMatrix, floor: f64) -> SymMatrix {
    nearest_pd_flagged(m, floor).0
}

/// KL(P, Q) = ½[log(|Q|/|P|) + Tr(Q⁻¹P) − N].
pub fn kl_divergence(p: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::shape(format!("KL arguments are {}x{0} and {}x{1}", p.dim(), q.dim())));
    }
    let fp = cholesky(p)?;
    let fq = cholesky(q)?;
    Ok(kl_from_factors(&fp, &fq))
}

pub(crate) fn kl_from_factors(p: &CholFactor, q: &CholFactor) -> f64 {
    let n = p.dim() as f64;
    0.5 * (q.logdet - p.logdet + q.trace_inv_gram(&p.lower) - n)
}

/// sqrt(Σ_t ‖H_t − target‖²_F).
pub fn frobenius_path_loss<M: Borrow<DMatrix<f64>>>(path: &[M], target: &SymMatrix) -> Result<f64> {
    let n = target.dim();
    let mut total = 0.0;
    for (t, h) in path.iter().enumerate() {
        let h: &DMatrix<f64> = h.borrow();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::shape(format!(
                "H_{} is {}x{} but target is {n}x{n}",
                t + 1,
                h.nrows(),
                h.ncols()
            )));
        }
        total += (h - target.as_matrix()).norm_squared();
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(rows: usize, data: &[f64]) -> SymMatrix {
        SymMatrix::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    fn random_pd(n: usize, vals: &[f64]) -> SymMatrix {
        let a = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
        SymMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(n, n) * 0.5)
    }

    #[test]
    fn identity_factor() {
        let f = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &DMatrix::identity(3, 3));
        assert_eq!(f.logdet(), 0.0);
    }

    #[test]
    fn diagonal_factor() {
        let f = cholesky(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(f.lower(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!((f.logdet() - 36f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let err = cholesky(&sym(2, &[1.0, 2.0, 2.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
    }

    #[test]
    fn hand_square_root() {
        let l = chol_sqrt(&sym(2, &[4.0, 2.0, 2.0, 5.0])).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2.0]));
        assert_eq!(chol_sqrt(&SymMatrix::from_diagonal(&[4.0])).unwrap()[(0, 0)], 2.0);
        assert_eq!(chol_sqrt(&SymMatrix::identity(4)).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn nearest_pd_cases() {
        let id = SymMatrix::identity(5);
        let (out, adjusted) = nearest_pd_flagged(&id, DEFAULT_PD_FLOOR);
        assert_eq!(out, id);
        assert!(!adjusted);

        let m = SymMatrix::from_diagonal(&[1.0, -0.1]);
        let (out, adjusted) = nearest_pd_flagged(&m, 1e-6);
        assert!(adjusted);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-6]);
        assert!((out.as_matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn kl_closed_forms() {
        let i2 = SymMatrix::identity(2);
        let two = SymMatrix::from_diagonal(&[2.0, 2.0]);
        assert_eq!(kl_divergence(&SymMatrix::identity(3), &SymMatrix::identity(3)).unwrap(), 0.0);
        let forward = kl_divergence(&i2, &two).unwrap();
        let backward = kl_divergence(&two, &i2).unwrap();
        assert!((forward - 0.5 * (4f64.ln() - 1.0)).abs() < 1e-12);
        assert!((backward - 0.5 * (2.0 - 4f64.ln())).abs() < 1e-12);
        assert!((forward - backward).abs() > 0.1);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let err = kl_divergence(&SymMatrix::identity(2), &SymMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn frobenius_hand_values() {
        let target = SymMatrix::identity(2);
        let same = vec![DMatrix::identity(2, 2); 3];
        assert_eq!(frobenius_path_loss(&same, &target).unwrap(), 0.0);
        let one = vec![DMatrix::identity(2, 2) * 2.0];
        assert!((frobenius_path_loss(&one, &target).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let two = vec![DMatrix::identity(2, 2) * 2.0; 2];
        assert!((frobenius_path_loss(&two, &target).unwrap() - 2.0).abs() < 1e-15);
        let bad = vec![DMatrix::identity(3, 3)];
        assert!(frobenius_path_loss(&bad, &target).is_err());
    }

    #[test]
    fn solve_and_quad_form_agree() {
        let m = sym(3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = cholesky(&m).unwrap();
        let x = [1.0, -2.0, 0.5];
        let y = f.solve(&x);
        let back = m.as_matrix() * &y;
        assert!((back - DVector::from_row_slice(&x)).amax() < 1e-12);
        let q: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        assert!((q - f.quad_form(&x)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_diagonal(vals in prop::collection::vec(-1.0f64..1.0, 18)) {
            let p = random_pd(3, &vals[..9]);
            let q = random_pd(3, &vals[9..]);
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-10);
        }

        #[test]
        fn kl_permutation_invariant(vals in prop::collection::vec(-1.0f64..1.0, 32), shift in 1usize..4) {
            let p = random_pd(4, &vals[..16]);
            let q = random_pd(4, &vals[16..]);
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let permute = |m: &SymMatrix| SymMatrix::symmetrize(DMatrix::from_fn(4, 4, |i, j| m.as_matrix()[(perm[i], perm[j])]));
            let a = kl_divergence(&p, &q).unwrap();
            let b = kl_divergence(&permute(&p), &permute(&q)).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn cholesky_reconstructs(vals in prop::collection::vec(-1.0f64..1.0, 16)) {
            let m = random_pd(4, &vals);
            let l = chol_sqrt(&m).unwrap();
            prop_assert!((&l * l.transpose() - m.as_matrix()).amax() < 1e-10);
            prop_assert!(l.diagonal().iter().all(|&d| d > 0.0));
        }

        #[test]
        fn nearest_pd_idempotent(vals in prop::collection::vec(-1.0f64..1.0, 16)) {
            let m = SymMatrix::symmetrize(DMatrix::from_fn(4, 4, |i, j| vals[i * 4 + j]));
            let once = nearest_pd(&m, DEFAULT_PD_FLOOR);
            let twice = nearest_pd(&once, DEFAULT_PD_FLOOR);
            prop_assert!((once.as_matrix() - twice.as_matrix()).amax() < 1e-10);
            prop_assert!(cholesky(&once).is_ok());
        }

        #[test]
        fn frobenius_matches_double_sum(vals in prop::collection::vec(-2.0f64..2.0, 27)) {
            let target = SymMatrix::symmetrize(DMatrix::from_fn(3, 3, |i, j| vals[i * 3 + j]));
            let path: Vec<DMatrix<f64>> = (1..3)
                .map(|t| DMatrix::from_fn(3, 3, |i, j| vals[t * 9 + i * 3 + j]))
                .collect();
            let mut brute = 0.0;
            for h in &path {
                for i in 0..3 {
                    for j in 0..3 {
                        let d = h[(i, j)] - target.as_matrix()[(i, j)];
                        brute += d * d;
                    }
                }
            }
            prop_assert!((frobenius_path_loss(&path, &target).unwrap() - brute.sqrt()).abs() < 1e-12);
        }
    }
}
