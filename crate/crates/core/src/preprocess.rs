//! Linear front ends applied before rotation learning: PCA with an energy
//! threshold and ridge-regularised CCA over paired views.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::DataMatrix;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Pca,
    CcaLeft,
    CcaRight,
    Lsh,
    Identity,
}

impl ProjectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionKind::Pca => "pca",
            ProjectionKind::CcaLeft => "cca-left",
            ProjectionKind::CcaRight => "cca-right",
            ProjectionKind::Lsh => "lsh",
            ProjectionKind::Identity => "identity",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ProjectionKind::Pca => 0,
            ProjectionKind::CcaLeft => 1,
            ProjectionKind::CcaRight => 2,
            ProjectionKind::Lsh => 3,
            ProjectionKind::Identity => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => ProjectionKind::Pca,
            1 => ProjectionKind::CcaLeft,
            2 => ProjectionKind::CcaRight,
            3 => ProjectionKind::Lsh,
            4 => ProjectionKind::Identity,
            _ => return None,
        })
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ProjectionKind::Pca,
            ProjectionKind::CcaLeft,
            ProjectionKind::CcaRight,
            ProjectionKind::Lsh,
            ProjectionKind::Identity,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown projection kind `{s}`")))
    }
}

/// A `d_in x d_out` linear map applied as `X · matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    matrix: DMatrix<f64>,
    kind: ProjectionKind,
}

impl LinearProjection {
    pub fn new(matrix: DMatrix<f64>, kind: ProjectionKind) -> Result<Self> {
        ensure!(
            matrix.ncols() >= 1 && matrix.ncols() <= matrix.nrows(),
            Dimension,
            "projection must satisfy 1 <= d_out <= d_in, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        );
        ensure!(
            matrix.iter().all(|v| v.is_finite()),
            Numerical,
            "projection contains non-finite values"
        );
        if kind == ProjectionKind::Pca {
            let err = crate::linalg::orthonormality_error(&matrix);
            ensure!(err <= 1e-8, Numerical, "PCA projection is not orthonormal ({err:e})");
        }
        Ok(LinearProjection { matrix, kind })
    }

    pub fn identity(d: usize) -> Self {
        LinearProjection {
            matrix: DMatrix::identity(d, d),
            kind: ProjectionKind::Identity,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn d_in(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Applies `proj` to every row of `x`.
pub fn project(x: &DataMatrix, proj: &LinearProjection) -> Result<DataMatrix> {
    ensure!(
        x.cols() == proj.d_in(),
        Dimension,
        "projection expects {} input columns, got {}",
        proj.d_in(),
        x.cols()
    );
    if proj.kind == ProjectionKind::Identity {
        return Ok(x.clone());
    }
    DataMatrix::new(x.values() * &proj.matrix)
}

/// Covariance `XᵀX / n` (divisor `n`).
fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x / x.nrows() as f64
}

/// Eigenpairs of a symmetric matrix, eigenvalue-descending.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Flips each column so that its first component that is not numerically
/// zero is positive.
fn fix_first_nonzero_positive(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let scale = col.amax();
        if let Some(v) = col.iter().copied().find(|v| v.abs() > 1e-12 * scale.max(1e-300)) {
            if v < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Principal components of centered `x` capturing at least `energy` of the
/// total variance.
pub fn pca_fit(x: &DataMatrix, energy: f64) -> Result<LinearProjection> {
    ensure!(
        energy > 0.0 && energy <= 1.0,
        InvalidArgument,
        "energy must lie in (0, 1], got {energy}"
    );
    let (values, mut vectors) = sorted_eigen(covariance(x.values()));
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    ensure!(
        total > 0.0 && values[0] > 1e-12 * total.max(f64::MIN_POSITIVE),
        Numerical,
        "PCA input has rank zero"
    );
    let mut kept = values.len();
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v.max(0.0);
        if acc / total >= energy - 1e-12 {
            kept = k + 1;
            break;
        }
    }
    vectors = vectors.columns(0, kept).clone_owned();
    fix_first_nonzero_positive(&mut vectors);
    LinearProjection::new(vectors, ProjectionKind::Pca)
}

/// Principal components with an explicit output dimension.
pub fn pca_fit_dims(x: &DataMatrix, dims: usize) -> Result<LinearProjection> {
    ensure!(
        dims >= 1 && dims <= x.cols(),
        Dimension,
        "cannot keep {dims} of {} principal components",
        x.cols()
    );
    let (values, vectors) = sorted_eigen(covariance(x.values()));
    ensure!(values[0] > 0.0, Numerical, "PCA input has rank zero");
    let mut vectors = vectors.columns(0, dims).clone_owned();
    fix_first_nonzero_positive(&mut vectors);
    LinearProjection::new(vectors, ProjectionKind::Pca)
}

/// Result of [`cca_fit`].
#[derive(Debug, Clone)]
pub struct CcaFit {
    pub left: LinearProjection,
    pub right: LinearProjection,
    /// Canonical correlations, descending.
    pub correlations: Vec<f64>,
}

/// Ridge used when none is supplied: `1e-6 · tr(C) / d` per view.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

/// Ridge choice for [`cca_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `DEFAULT_RIDGE_SCALE · tr(C) / d`, computed per view.
    Auto,
    Fixed(f64),
}

/// Top-`c` canonical directions of two centered, row-paired views.
///
/// Each autocovariance gets `εI` added, then the whitened cross-covariance
/// `C_aa^{-1/2} C_ab C_bb^{-1/2}` is decomposed by SVD.
pub fn cca_fit(xa: &DataMatrix, xb: &DataMatrix, c: usize, ridge: Ridge) -> Result<CcaFit> {
    ensure!(
        xa.rows() == xb.rows(),
        Dimension,
        "views have {} and {} rows",
        xa.rows(),
        xb.rows()
    );
    let (da, db) = (xa.cols(), xb.cols());
    ensure!(
        c >= 1 && c <= da.min(db),
        Dimension,
        "c = {c} exceeds the CCA rank bound min({da}, {db})"
    );
    let n = xa.rows() as f64;
    let regularised = |x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut cov = covariance(x);
        let d = cov.nrows() as f64;
        let eps = match ridge {
            Ridge::Auto => DEFAULT_RIDGE_SCALE * cov.trace() / d,
            Ridge::Fixed(e) => {
                ensure!(e >= 0.0 && e.is_finite(), InvalidArgument, "ridge must be >= 0, got {e}");
                e
            }
        };
        for i in 0..cov.nrows() {
            cov[(i, i)] += eps;
        }
        Ok(cov)
    };
    let caa = regularised(xa.values())?;
    let cbb = regularised(xb.values())?;
    let cab = xa.values().transpose() * xb.values() / n;

    let wa = inverse_sqrt(caa)?;
    let wb = inverse_sqrt(cbb)?;
    let whitened = &wa * cab * &wb;
    let (u, sigma, v) = sorted_svd(whitened)?;

    let mut left = &wa * u.columns(0, c);
    let mut right = &wb * v.columns(0, c);

    // Sign: make the first clearly nonzero entry of the summed canonical
    // variates positive. The rule is symmetric in the two views.
    let variates = xa.values() * &left + xb.values() * &right;
    for k in 0..c {
        let col = variates.column(k);
        let scale = col.amax();
        if let Some(v) = col.iter().copied().find(|v| v.abs() > 1e-9 * scale) {
            if v < 0.0 {
                left.column_mut(k).neg_mut();
                right.column_mut(k).neg_mut();
            }
        }
    }

    Ok(CcaFit {
        left: LinearProjection::new(left, ProjectionKind::CcaLeft)?,
        right: LinearProjection::new(right, ProjectionKind::CcaRight)?,
        correlations: sigma[..c].to_vec(),
    })
}

fn inverse_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.max();
    ensure!(
        max > 0.0 && eig.eigenvalues.min() > 1e-12 * max,
        Numerical,
        "singular covariance in CCA (add a ridge)"
    );
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| 1.0 / v.sqrt()),
    );
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&scaled) * eig.eigenvectors.transpose())
}

/// Thin SVD with singular values sorted descending, returning `(U, σ, V)`.
fn sorted_svd(m: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = v_t.transpose();
    Ok((u.select_columns(&order), sigma, v.select_columns(&order)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::zero_center;
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
        zero_center(&DataMatrix::new(m).unwrap()).unwrap().0
    }

    #[test]
    fn pca_on_a_line() {
        let x = DataMatrix::from_rows(&[vec![-1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let p = pca_fit(&x, 0.9).unwrap();
        assert_eq!(p.d_out(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.matrix()[(0, 0)] - h).abs() < 1e-12);
        assert!((p.matrix()[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn pca_energy_threshold() {
        // Axis-aligned data with covariance eigenvalues 9 and 1.
        let x = DataMatrix::from_rows(&[
            vec![3.0, 1.0],
            vec![-3.0, -1.0],
            vec![3.0, -1.0],
            vec![-3.0, 1.0],
        ])
        .unwrap();
        assert_eq!(pca_fit(&x, 0.6).unwrap().d_out(), 1);
        assert_eq!(pca_fit(&x, 0.9).unwrap().d_out(), 1);
        assert_eq!(pca_fit(&x, 0.95).unwrap().d_out(), 2);
    }

    #[test]
    fn full_energy_preserves_geometry() {
        let x = gaussian(100, 6, 3);
        let p = pca_fit(&x, 1.0).unwrap();
        assert_eq!(p.d_out(), 6);
        assert!(crate::linalg::orthonormality_error(p.matrix()) < 1e-8);
        let y = project(&x, &p).unwrap();
        let gx = x.values() * x.values().transpose();
        let gy = y.values() * y.values().transpose();
        assert!((gx - gy).amax() < 1e-8);
    }

    #[test]
    fn pca_output_is_decorrelated_and_keeps_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mix = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let raw = gaussian(200, 5, 9).into_inner() * mix;
        let x = zero_center(&DataMatrix::new(raw).unwrap()).unwrap().0;
        let p = pca_fit(&x, 0.8).unwrap();
        let y = project(&x, &p).unwrap();
        let cov = covariance(y.values());
        for i in 0..cov.nrows() {
            for j in 0..cov.ncols() {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-6);
                }
            }
        }
        let (values, _) = sorted_eigen(covariance(x.values()));
        let retained: f64 = values[..p.d_out()].iter().sum();
        assert!((cov.trace() - retained).abs() / retained < 1e-6);
    }

    #[test]
    fn pca_rejects_zero_input_and_bad_energy() {
        let z = DataMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        assert!(matches!(pca_fit(&z, 0.5), Err(Error::Numerical(_))));
        let x = gaussian(10, 3, 1);
        assert!(pca_fit(&x, 0.0).is_err());
        assert!(pca_fit(&x, 1.1).is_err());
    }

    #[test]
    fn identity_and_selection_projection() {
        let x = DataMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(project(&x, &LinearProjection::identity(2)).unwrap(), x);
        let sel = LinearProjection::new(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), ProjectionKind::Lsh)
            .unwrap();
        assert_eq!(project(&x, &sel).unwrap().values()[(0, 0)], 3.0);
        assert!(project(&x, &LinearProjection::identity(3)).is_err());
    }

    #[test]
    fn cca_identical_views() {
        let x = gaussian(200, 4, 2);
        let fit = cca_fit(&x, &x, 1, Ridge::Fixed(1e-6)).unwrap();
        assert!((fit.correlations[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cca_independent_views_against_permutation_null() {
        let a = gaussian(500, 3, 10);
        let b = gaussian(500, 3, 11);
        let observed = cca_fit(&a, &b, 1, Ridge::Auto).unwrap().correlations[0];
        assert!(observed < 0.3, "first correlation {observed}");
        // The null distribution from row permutations should contain the
        // observed value comfortably.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut order: Vec<usize> = (0..500).collect();
        let mut null = Vec::new();
        for _ in 0..20 {
            order.shuffle(&mut rng);
            let shuffled = b.select_rows(&order).unwrap();
            null.push(cca_fit(&a, &shuffled, 1, Ridge::Auto).unwrap().correlations[0]);
        }
        let max_null = null.iter().cloned().fold(0.0, f64::max);
        assert!(observed < 2.0 * max_null, "observed {observed}, null max {max_null}");
    }

    #[test]
    fn cca_recovers_shared_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 400;
        let mut a = DMatrix::zeros(n, 2);
        let mut b = DMatrix::zeros(n, 2);
        for i in 0..n {
            let shared: f64 = StandardNormal.sample(&mut rng);
            a[(i, 0)] = shared;
            a[(i, 1)] = StandardNormal.sample(&mut rng);
            b[(i, 0)] = StandardNormal.sample(&mut rng);
            b[(i, 1)] = shared;
        }
        let a = zero_center(&DataMatrix::new(a).unwrap()).unwrap().0;
        let b = zero_center(&DataMatrix::new(b).unwrap()).unwrap().0;
        let fit = cca_fit(&a, &b, 1, Ridge::Auto).unwrap();
        let cosine = |v: nalgebra::DVectorView<f64>, axis: usize| v[axis].abs() / v.norm();
        assert!(cosine(fit.left.matrix().column(0), 0) >= 0.99);
        assert!(cosine(fit.right.matrix().column(0), 1) >= 0.99);
    }

    #[test]
    fn cca_is_symmetric_in_its_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(150, 4, 40);
        let mix = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let noise = gaussian(150, 3, 41).into_inner();
        let b = zero_center(&DataMatrix::new(a.values() * mix + noise).unwrap()).unwrap().0;
        let ab = cca_fit(&a, &b, 3, Ridge::Auto).unwrap();
        let ba = cca_fit(&b, &a, 3, Ridge::Auto).unwrap();
        for (x, y) in ab.correlations.iter().zip(&ba.correlations) {
            assert!((x - y).abs() < 1e-8);
        }
        assert!((ab.left.matrix() - ba.right.matrix()).amax() < 1e-6);
        assert!((ab.right.matrix() - ba.left.matrix()).amax() < 1e-6);
    }

    #[test]
    fn cca_errors() {
        let a = gaussian(20, 3, 1);
        let b = gaussian(20, 2, 2);
        assert!(matches!(cca_fit(&a, &b, 3, Ridge::Auto), Err(Error::Dimension(_))));
        assert!(cca_fit(&a, &gaussian(19, 2, 2), 1, Ridge::Auto).is_err());
        // Duplicate column makes the unregularised covariance singular.
        let dup = DMatrix::from_fn(20, 2, |i, _| a.values()[(i, 0)]);
        let dup = DataMatrix::new(dup).unwrap();
        assert!(matches!(cca_fit(&dup, &b, 1, Ridge::Fixed(0.0)), Err(Error::Numerical(_))));
        assert!(cca_fit(&dup, &b, 1, Ridge::Auto).is_ok());
    }
}
