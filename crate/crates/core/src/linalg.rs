//! Orthonormal matrices, the orthogonal Procrustes solver and seeded random
//! rotations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};

/// Tolerance used when validating `QᵀQ = I`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A `d x c` matrix with orthonormal columns (`c <= d`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalMatrix(DMatrix<f64>);

impl OrthonormalMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        ensure!(
            values.ncols() <= values.nrows() && values.ncols() >= 1,
            Dimension,
            "orthonormal matrix needs 1 <= c <= d, got {}x{}",
            values.nrows(),
            values.ncols()
        );
        let err = orthonormality_error(&values);
        ensure!(
            err <= ORTHONORMAL_TOL,
            Numerical,
            "columns are not orthonormal (||QᵀQ - I||_F = {err:e})"
        );
        Ok(OrthonormalMatrix(values))
    }

    /// The first `c` columns of the `d x d` identity.
    pub fn identity(d: usize, c: usize) -> Result<Self> {
        ensure!(c >= 1 && c <= d, Dimension, "identity needs 1 <= c <= d");
        Ok(OrthonormalMatrix(DMatrix::identity(d, c)))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn c(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Frobenius norm of `QᵀQ - I`.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    (gram - DMatrix::<f64>::identity(q.ncols(), q.ncols())).norm()
}

/// Solves `min ||X R - A||_F` over `d x c` matrices with `RᵀR = I`.
///
/// Starts from the closed form `R = U Vᵀ` of the thin SVD `XᵀA = U Σ Vᵀ`,
/// which is exact when `c == d`. For `c < d` the term `||X R||²` depends on
/// `R`, so the closed form is refined by majorisation-minimisation:
/// `R ← polar(XᵀA + (αI - XᵀX) R)` with `α = λ_max(XᵀX)`, each step of
/// which cannot increase the objective.
pub fn procrustes(a: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<OrthonormalMatrix> {
    solve_procrustes(a, x, None)
}

/// [`procrustes`] that additionally considers `warm` as a starting point.
/// The result never has a larger objective than `warm`. Refinement is capped
/// at [`MM_WARM_STEPS`]: inside an alternating solver the next call resumes
/// from this result, so progress carries over between calls.
pub fn procrustes_warm(
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    warm: &OrthonormalMatrix,
) -> Result<OrthonormalMatrix> {
    solve_procrustes(a, x, Some(warm))
}

const MM_MAX_STEPS: usize = 2000;
pub const MM_WARM_STEPS: usize = 100;
const MM_REL_TOL: f64 = 1e-10;

fn solve_procrustes(
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    warm: Option<&OrthonormalMatrix>,
) -> Result<OrthonormalMatrix> {
    let (n, c) = a.shape();
    let d = x.ncols();
    ensure!(n >= 1, Dimension, "procrustes needs at least one row");
    ensure!(
        x.nrows() == n,
        Dimension,
        "target has {n} rows but data has {}",
        x.nrows()
    );
    ensure!(c <= d, Dimension, "code length {c} exceeds data dimension {d}");
    if let Some(w) = warm {
        ensure!(
            w.d() == d && w.c() == c,
            Dimension,
            "warm start is {}x{}, expected {d}x{c}",
            w.d(),
            w.c()
        );
    }
    ensure!(
        a.iter().chain(x.iter()).all(|v| v.is_finite()),
        Numerical,
        "procrustes inputs contain non-finite values"
    );
    let cross = x.transpose() * a;
    let closed = polar_factor(cross.clone())?;
    if c == d {
        return Ok(closed);
    }

    let gram = x.transpose() * x;
    let alpha = nalgebra::SymmetricEigen::new(gram.clone()).eigenvalues.max().max(0.0);
    let shift = DMatrix::<f64>::identity(d, d) * alpha - &gram;
    let objective = |r: &DMatrix<f64>| procrustes_objective(x, r, a);
    // Same objective through the d x d Gram matrix, so refinement steps
    // cost nothing in n: ||XR||² - 2<XᵀA, R> + ||A||².
    let a_sq = a.norm_squared();
    let gram_objective = |r: &DMatrix<f64>| (&gram * r).dot(r) - 2.0 * cross.dot(r) + a_sq;

    let mut best = closed.0;
    if let Some(w) = warm {
        if objective(w.values()) < objective(&best) {
            best = w.0.clone();
        }
    }
    let mut best_f = gram_objective(&best);
    let steps = if warm.is_some() { MM_WARM_STEPS } else { MM_MAX_STEPS };
    for _ in 0..steps {
        let next = polar_factor(&cross + &shift * &best)?.0;
        let f = gram_objective(&next);
        if f > best_f {
            break;
        }
        let gain = best_f - f;
        best = next;
        best_f = f;
        if gain <= MM_REL_TOL * best_f.max(1.0) {
            break;
        }
    }
    Ok(OrthonormalMatrix(best))
}

/// Orthonormal polar factor `U Vᵀ` of a `d x c` matrix with `c <= d`.
pub(crate) fn polar_factor(m: DMatrix<f64>) -> Result<OrthonormalMatrix> {
    let svd = m.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let r = u * v_t;
    ensure!(
        r.iter().all(|v| v.is_finite()),
        Numerical,
        "SVD produced non-finite factors"
    );
    Ok(OrthonormalMatrix(r))
}

/// `||X R - A||_F²`.
pub fn procrustes_objective(x: &DMatrix<f64>, r: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (x * r - a).norm_squared()
}

/// Seeded Gram-Schmidt orthonormalisation of a standard Gaussian `d x c`
/// matrix.
pub fn random_orthonormal(d: usize, c: usize, seed: u64) -> Result<OrthonormalMatrix> {
    ensure!(c >= 1 && c <= d, Dimension, "random rotation needs 1 <= c <= d, got c={c}, d={d}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = DMatrix::from_fn(d, c, |_, _| StandardNormal.sample(&mut rng));
        if let Some(q) = gram_schmidt(g) {
            return Ok(OrthonormalMatrix(q));
        }
    }
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass. `None` when the
/// columns are numerically dependent.
fn gram_schmidt(mut m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    for j in 0..m.ncols() {
        for _ in 0..2 {
            for k in 0..j {
                let proj = m.column(k).dot(&m.column(j));
                let qk = m.column(k).clone_owned();
                m.column_mut(j).axpy(-proj, &qk, 1.0);
            }
        }
        let norm = m.column(j).norm();
        if norm < 1e-10 {
            return None;
        }
        m.column_mut(j).unscale_mut(norm);
    }
    Some(m)
}
