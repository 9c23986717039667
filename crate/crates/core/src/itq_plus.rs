//! ITQ+: quantization with a slack function learned from privileged
//! source-domain features.
//!
//! The trainer minimises
//!
//! ```text
//! J(B, R, P) = ½‖E‖²_F + λ1‖E − X_SC P‖²_F,   E = B − X_T R
//! ```
//!
//! over balanced codes `B` and orthonormal `R`, `P`, updating one block at a
//! time in the order B, R, P. Every block update is an exact minimiser of
//! `J` with the other two blocks fixed, so the recorded objective never
//! increases.

use nalgebra::DMatrix;

use crate::codes::{sgn, BinaryCodeMatrix};
use crate::data::{CenteringInfo, DataMatrix};
use crate::error::{ensure, Error, Result};
use crate::itq::{should_stop, DEFAULT_ITERS, DEFAULT_TOLERANCE};
use crate::lap_itq_plus::{relaxed_solve, LaplacianMatrix};
use crate::linalg::{procrustes_warm, random_orthonormal, OrthonormalMatrix};
use crate::model::{HashModel, Hyperparams, Method};
use crate::preprocess::LinearProjection;

/// Default slack weight.
pub const DEFAULT_LAMBDA1: f64 = 0.01;
/// Cross-validation grid for `λ1` and `λ2`.
pub const LAMBDA_GRID: [f64; 9] = [0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0];

/// Salt mixed into the seed for the initial `P`, so `R⁰` matches plain ITQ
/// under the same seed.
const P_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Result of an ITQ+ or LapITQ+ run.
#[derive(Debug, Clone)]
pub struct ItqPlusState {
    pub codes: BinaryCodeMatrix,
    pub rotation: OrthonormalMatrix,
    pub privileged: OrthonormalMatrix,
    pub lambda1: f64,
    /// Objective after each full B, R, P sweep.
    pub objective_trace: Vec<f64>,
}

/// `½‖E‖²_F + λ1‖E − X_SC P‖²_F` with `E = B − X_T R`.
pub fn itq_plus_objective(
    b: &BinaryCodeMatrix,
    r: &OrthonormalMatrix,
    p: &OrthonormalMatrix,
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    lambda1: f64,
) -> Result<f64> {
    check_shapes(x_t, x_sc, b.bits())?;
    ensure!(
        b.rows() == x_t.rows() && r.d() == x_t.cols() && p.d() == x_sc.cols(),
        Dimension,
        "codes, rotations and data do not agree"
    );
    ensure!(r.c() == b.bits() && p.c() == b.bits(), Dimension, "code length mismatch");
    Ok(objective_raw(
        &b.to_matrix(),
        x_t.values(),
        r.values(),
        x_sc.values(),
        p.values(),
        lambda1,
    ))
}

fn objective_raw(
    b: &DMatrix<f64>,
    x_t: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x_sc: &DMatrix<f64>,
    p: &DMatrix<f64>,
    lambda1: f64,
) -> f64 {
    let e = b - x_t * r;
    let quant = 0.5 * e.norm_squared();
    if lambda1 == 0.0 {
        return quant;
    }
    quant + lambda1 * (e - x_sc * p).norm_squared()
}

/// Per-entry code scores `S = (1 + 2λ1) X_T R + 2λ1 X_SC P`.
///
/// For codes in {−1, +1}, `J = const − tr(Bᵀ S)`, so maximising the score
/// agreement minimises the objective.
pub fn code_scores(
    x_t: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x_sc: &DMatrix<f64>,
    p: &DMatrix<f64>,
    lambda1: f64,
) -> DMatrix<f64> {
    let mut s = x_t * r * (1.0 + 2.0 * lambda1);
    if lambda1 != 0.0 {
        s += x_sc * p * (2.0 * lambda1);
    }
    s
}

/// Balanced binary codes maximising `Σ B_ik S_ik`: per column the `⌈n/2⌉`
/// highest scores get `+1`, ties broken by ascending row index.
pub fn update_b_balanced(scores: &DMatrix<f64>) -> BinaryCodeMatrix {
    let (n, c) = scores.shape();
    let positives = n.div_ceil(2);
    let mut signs = vec![-1i8; n * c];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for k in 0..c {
        let col = scores.column(k);
        order.clear();
        order.extend(0..n);
        // Stable sort keeps ascending index among equal scores.
        order.sort_by(|&a, &b| col[b].total_cmp(&col[a]));
        for &i in &order[..positives] {
            signs[i * c + k] = 1;
        }
    }
    BinaryCodeMatrix::from_signs(n, c, signs).expect("balanced codes are well formed")
}

/// Rotation update with `B` and `P` fixed: the Procrustes problem with target
/// `A = B − (2λ1 / (1 + 2λ1)) X_SC P`.
pub fn update_r(
    b: &BinaryCodeMatrix,
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    p: &OrthonormalMatrix,
    lambda1: f64,
    warm: &OrthonormalMatrix,
) -> Result<OrthonormalMatrix> {
    ensure!(lambda1 >= 0.0, InvalidArgument, "lambda1 must be >= 0");
    ensure!(
        b.rows() == x_t.rows() && x_sc.rows() == x_t.rows() && p.d() == x_sc.cols(),
        Dimension,
        "R-step shapes do not agree"
    );
    update_r_raw(&b.to_matrix(), x_t.values(), x_sc.values(), p.values(), lambda1, warm)
}

fn update_r_raw(
    b: &DMatrix<f64>,
    x_t: &DMatrix<f64>,
    x_sc: &DMatrix<f64>,
    p: &DMatrix<f64>,
    lambda1: f64,
    warm: &OrthonormalMatrix,
) -> Result<OrthonormalMatrix> {
    if lambda1 == 0.0 {
        return procrustes_warm(b, x_t, warm);
    }
    let w = 2.0 * lambda1 / (1.0 + 2.0 * lambda1);
    let target = b - x_sc * p * w;
    procrustes_warm(&target, x_t, warm)
}

/// Slack rotation update with `B` and `R` fixed: Procrustes fit of
/// `E = B − X_T R` by `X_SC P`.
///
/// Fails with [`Error::Numerical`] when `E` or `X_SC` is numerically zero.
pub fn update_p(
    b: &BinaryCodeMatrix,
    x_t: &DataMatrix,
    r: &OrthonormalMatrix,
    x_sc: &DataMatrix,
    warm: &OrthonormalMatrix,
) -> Result<OrthonormalMatrix> {
    ensure!(
        x_sc.cols() >= b.bits(),
        Dimension,
        "source dimension {} is smaller than the code length {}",
        x_sc.cols(),
        b.bits()
    );
    ensure!(
        b.rows() == x_t.rows() && x_sc.rows() == x_t.rows() && r.d() == x_t.cols(),
        Dimension,
        "P-step shapes do not agree"
    );
    let e = b.to_matrix() - x_t.values() * r.values();
    ensure!(
        !p_step_degenerate(&e, x_sc.values()),
        Numerical,
        "slack target or privileged data is numerically zero"
    );
    procrustes_warm(&e, x_sc.values(), warm)
}

fn p_step_degenerate(e: &DMatrix<f64>, x_sc: &DMatrix<f64>) -> bool {
    e.norm() <= 1e-12 || x_sc.norm() <= 1e-12
}

/// Code update used inside the alternating loop.
#[derive(Debug, Clone, Copy)]
pub enum BStep<'a> {
    /// Sorting-based balanced codes (ITQ+).
    Balanced,
    /// Unconstrained `sgn(S)`.
    Sign,
    /// Box-relaxed Laplacian-regularised quadratic program (LapITQ+).
    Relaxed(RelaxedStep<'a>),
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxedStep<'a> {
    pub laplacian: &'a LaplacianMatrix,
    pub lambda2: f64,
    pub inner_iters: usize,
    /// Binarise the relaxed solution with the balanced rule instead of sgn.
    pub rebalance: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub iters: usize,
    pub tolerance: Option<f64>,
    /// Reject a relaxed B-step whose binarised codes raise the full
    /// objective; the previous codes are kept instead.
    pub monotone_guard: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iters: DEFAULT_ITERS,
            tolerance: Some(DEFAULT_TOLERANCE),
            monotone_guard: true,
        }
    }
}

fn check_shapes(x_t: &DataMatrix, x_sc: &DataMatrix, bits: usize) -> Result<()> {
    ensure!(
        x_t.rows() == x_sc.rows(),
        Dimension,
        "target has {} rows but privileged data has {}",
        x_t.rows(),
        x_sc.rows()
    );
    ensure!(
        bits >= 1 && bits <= x_t.cols().min(x_sc.cols()),
        Dimension,
        "{bits} bits exceed min(d_T = {}, d_S = {})",
        x_t.cols(),
        x_sc.cols()
    );
    Ok(())
}

/// Runs the B, R, P alternation for `opts.iters` sweeps or until the
/// relative objective change drops below `opts.tolerance`.
pub fn alternate(
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    bits: usize,
    lambda1: f64,
    seed: u64,
    b_step: BStep<'_>,
    opts: &TrainOptions,
) -> Result<ItqPlusState> {
    check_shapes(x_t, x_sc, bits)?;
    ensure!(x_t.rows() >= 2, InvalidArgument, "need at least two training rows");
    ensure!(
        lambda1 >= 0.0 && lambda1.is_finite(),
        InvalidArgument,
        "lambda1 must be finite and >= 0, got {lambda1}"
    );
    ensure!(opts.iters >= 1, InvalidArgument, "iters must be at least 1");
    if let BStep::Relaxed(step) = &b_step {
        ensure!(
            step.laplacian.n() == x_t.rows(),
            Dimension,
            "Laplacian is {0}x{0} but there are {1} training rows",
            step.laplacian.n(),
            x_t.rows()
        );
        ensure!(
            step.lambda2 >= 0.0 && step.lambda2.is_finite(),
            InvalidArgument,
            "lambda2 must be finite and >= 0"
        );
    }

    let (xt, xs) = (x_t.values(), x_sc.values());
    let mut r = random_orthonormal(x_t.cols(), bits, seed)?;
    let mut p = random_orthonormal(x_sc.cols(), bits, seed ^ P_SEED_SALT)?;
    let graph_term = |b: &DMatrix<f64>| match &b_step {
        BStep::Relaxed(step) if step.lambda2 != 0.0 => step.lambda2 * step.laplacian.quadratic_form(b),
        _ => 0.0,
    };

    let mut codes: Option<BinaryCodeMatrix> = None;
    let mut trace: Vec<f64> = Vec::with_capacity(opts.iters);
    for _ in 0..opts.iters {
        let scores = code_scores(xt, r.values(), xs, p.values(), lambda1);
        let candidate = match &b_step {
            BStep::Balanced => update_b_balanced(&scores),
            BStep::Sign => sgn(&scores),
            BStep::Relaxed(step) => {
                let relaxed = relaxed_solve(&scores, step.laplacian, step.lambda2, step.inner_iters)?;
                if step.rebalance {
                    update_b_balanced(&relaxed.solution)
                } else {
                    sgn(&relaxed.solution)
                }
            }
        };
        let b = match (&b_step, codes.take()) {
            (BStep::Relaxed(step), Some(previous)) if opts.monotone_guard && step.lambda2 != 0.0 => {
                let full = |b: &BinaryCodeMatrix| {
                    let m = b.to_matrix();
                    objective_raw(&m, xt, r.values(), xs, p.values(), lambda1) + graph_term(&m)
                };
                if full(&candidate) <= full(&previous) {
                    candidate
                } else {
                    previous
                }
            }
            _ => candidate,
        };
        let bm = b.to_matrix();
        r = update_r_raw(&bm, xt, xs, p.values(), lambda1, &r)?;
        let e = &bm - xt * r.values();
        if !p_step_degenerate(&e, xs) {
            p = procrustes_warm(&e, xs, &p)?;
        }
        let objective = objective_raw(&bm, xt, r.values(), xs, p.values(), lambda1) + graph_term(&bm);
        if !objective.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }
        let stop = should_stop(trace.last().copied(), objective, opts.tolerance);
        trace.push(objective);
        codes = Some(b);
        if stop {
            break;
        }
    }
    Ok(ItqPlusState {
        codes: codes.expect("at least one sweep ran"),
        rotation: r,
        privileged: p,
        lambda1,
        objective_trace: trace,
    })
}

/// Wraps a trained rotation in a model over already-centered,
/// already-projected target features.
pub(crate) fn bare_model(method: Method, rotation: &OrthonormalMatrix, hyper: Hyperparams) -> Result<HashModel> {
    HashModel::new(
        method,
        CenteringInfo::zeros(rotation.d()),
        LinearProjection::identity(rotation.d()),
        rotation.values().clone(),
        hyper,
    )
}

/// Trains ITQ+ on centered target data `x_t` and its privileged
/// counterpart `x_sc`.
pub fn itq_plus_train(
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    bits: usize,
    lambda1: f64,
    iters: usize,
    seed: u64,
) -> Result<(HashModel, ItqPlusState)> {
    let opts = TrainOptions {
        iters,
        ..TrainOptions::default()
    };
    itq_plus_train_with(x_t, x_sc, bits, lambda1, seed, &opts)
}

pub fn itq_plus_train_with(
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    bits: usize,
    lambda1: f64,
    seed: u64,
    opts: &TrainOptions,
) -> Result<(HashModel, ItqPlusState)> {
    let state = alternate(x_t, x_sc, bits, lambda1, seed, BStep::Balanced, opts)?;
    let model = bare_model(
        Method::ItqPlus,
        &state.rotation,
        Hyperparams {
            lambda1,
            lambda2: 0.0,
            k_graph: 0,
            iters: opts.iters as u32,
            seed,
        },
    )?;
    Ok((model, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::zero_center;
    use crate::itq::{itq_train_with, quantization_loss, CodeStep, ItqOptions};
    use crate::linalg::procrustes_objective;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
        zero_center(&DataMatrix::new(m).unwrap()).unwrap().0
    }

    /// Exhaustive maximiser of `Σ B_ik S_ik` over balanced sign vectors of
    /// one column. Ties resolved towards the lexicographically smallest
    /// set of positive indices.
    fn brute_force_column(scores: &[f64]) -> Vec<i8> {
        let n = scores.len();
        let positives = n.div_ceil(2);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != positives {
                continue;
            }
            let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let value: f64 = (0..n)
                .map(|i| if mask & (1 << i) != 0 { scores[i] } else { -scores[i] })
                .sum();
            let better = match &best {
                None => true,
                Some((v, s)) => value > *v || (value == *v && set < *s),
            };
            if better {
                best = Some((value, set));
            }
        }
        let set = best.unwrap().1;
        (0..n).map(|i| if set.contains(&i) { 1 } else { -1 }).collect()
    }

    #[test]
    fn balanced_examples() {
        let b = update_b_balanced(&DMatrix::from_column_slice(4, 1, &[3.0, -1.0, 2.0, -5.0]));
        assert_eq!(b.to_matrix().as_slice(), &[1.0, -1.0, 1.0, -1.0]);
        let b = update_b_balanced(&DMatrix::from_column_slice(2, 1, &[0.0, 0.0]));
        assert_eq!(b.to_matrix().as_slice(), &[1.0, -1.0]);
        let b = update_b_balanced(&DMatrix::from_column_slice(3, 1, &[5.0, 4.0, -9.0]));
        assert_eq!(b.to_matrix().as_slice(), &[1.0, 1.0, -1.0]);
        assert_eq!(b.column_sums(), vec![1]);
        // Matches enumeration on the same instances.
        assert_eq!(brute_force_column(&[3.0, -1.0, 2.0, -5.0]), vec![1, -1, 1, -1]);
        assert_eq!(brute_force_column(&[5.0, 4.0, -9.0]), vec![1, 1, -1]);
    }

    proptest! {
        #[test]
        fn balanced_matches_exhaustive_search(
            n in 2usize..=8,
            c in 1usize..=2,
            seed in any::<u64>(),
            quantised in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores = DMatrix::from_fn(n, c, |_, _| {
                if quantised { f64::from(rng.gen_range(-2i32..=2)) } else { rng.gen_range(-1.0..1.0) }
            });
            let b = update_b_balanced(&scores);
            for k in 0..c {
                let col: Vec<f64> = scores.column(k).iter().copied().collect();
                let expected = brute_force_column(&col);
                let got: Vec<i8> = (0..n).map(|i| b.sign(i, k)).collect();
                prop_assert_eq!(got, expected);
            }
            for s in b.column_sums() {
                prop_assert!(s.unsigned_abs() as usize <= n % 2);
            }
        }
    }

    #[test]
    fn objective_reductions() {
        let x_t = gaussian(12, 5, 1);
        let x_sc = gaussian(12, 4, 2);
        let r = random_orthonormal(5, 3, 3).unwrap();
        let p = random_orthonormal(4, 3, 4).unwrap();
        let b = sgn(&gaussian(12, 3, 5).into_inner());
        let q = quantization_loss(&b, &x_t, &r).unwrap();
        assert_eq!(itq_plus_objective(&b, &r, &p, &x_t, &x_sc, 0.0).unwrap(), q / 2.0);

        // Square R: X_T = (B − X_SC P) Rᵀ makes E equal X_SC P exactly.
        let e = x_sc.values() * p.values();
        let r_sq = random_orthonormal(3, 3, 6).unwrap();
        let x_t_sq = DataMatrix::new((b.to_matrix() - &e) * r_sq.values().transpose()).unwrap();
        let obj = itq_plus_objective(&b, &r_sq, &p, &x_t_sq, &x_sc, 7.5).unwrap();
        assert!((obj - 0.5 * e.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn objective_matches_direct_summation() {
        let x_t = gaussian(7, 4, 11);
        let x_sc = gaussian(7, 3, 12);
        let r = random_orthonormal(4, 2, 13).unwrap();
        let p = random_orthonormal(3, 2, 14).unwrap();
        let b = sgn(&gaussian(7, 2, 15).into_inner());
        let lambda1 = 0.37;
        let mut expected = 0.0;
        for i in 0..7 {
            for k in 0..2 {
                let xr: f64 = (0..4).map(|j| x_t.values()[(i, j)] * r.values()[(j, k)]).sum();
                let sp: f64 = (0..3).map(|j| x_sc.values()[(i, j)] * p.values()[(j, k)]).sum();
                let e = f64::from(b.sign(i, k)) - xr;
                expected += 0.5 * e * e + lambda1 * (e - sp) * (e - sp);
            }
        }
        let got = itq_plus_objective(&b, &r, &p, &x_t, &x_sc, lambda1).unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn r_step_reductions_and_descent() {
        let x_t = gaussian(30, 6, 21);
        let x_sc = gaussian(30, 5, 22);
        let p = random_orthonormal(5, 3, 23).unwrap();
        let warm = random_orthonormal(6, 3, 24).unwrap();
        let b = update_b_balanced(&gaussian(30, 3, 25).into_inner());
        let plain = procrustes_warm(&b.to_matrix(), x_t.values(), &warm).unwrap();
        assert_eq!(update_r(&b, &x_t, &x_sc, &p, 0.0, &warm).unwrap(), plain);
        let zero_sc = DataMatrix::new(DMatrix::zeros(30, 5)).unwrap();
        let r0 = update_r(&b, &x_t, &zero_sc, &p, 3.0, &warm).unwrap();
        assert!((r0.values() - plain.values()).amax() < 1e-12);

        for lambda1 in [0.01, 0.5, 2.0] {
            let before = itq_plus_objective(&b, &warm, &p, &x_t, &x_sc, lambda1).unwrap();
            let r = update_r(&b, &x_t, &x_sc, &p, lambda1, &warm).unwrap();
            let after = itq_plus_objective(&b, &r, &p, &x_t, &x_sc, lambda1).unwrap();
            assert!(after <= before + 1e-9);
        }
    }

    #[test]
    fn p_step_recovers_and_descends() {
        // X_SC with orthonormal columns and E = X_SC Q.
        let x_sc = DataMatrix::new(random_orthonormal(10, 4, 31).unwrap().into_inner()).unwrap();
        let q = random_orthonormal(4, 2, 32).unwrap();
        let b = update_b_balanced(&gaussian(10, 2, 33).into_inner());
        let x_t = gaussian(10, 3, 34);
        let r = random_orthonormal(3, 2, 35).unwrap();
        // With R = I and X_T = B − X_SC Q the slack target E is X_SC Q.
        let e_target = x_sc.values() * q.values();
        let r_sq = OrthonormalMatrix::identity(2, 2).unwrap();
        let x_t_sq = DataMatrix::new(b.to_matrix() - &e_target).unwrap();
        let warm = random_orthonormal(4, 2, 36).unwrap();
        let p = update_p(&b, &x_t_sq, &r_sq, &x_sc, &warm).unwrap();
        assert!((p.values() - q.values()).amax() < 1e-6);

        let x_sc = gaussian(10, 4, 37);
        let e = b.to_matrix() - x_t.values() * r.values();
        let before = procrustes_objective(x_sc.values(), warm.values(), &e);
        let p = update_p(&b, &x_t, &r, &x_sc, &warm).unwrap();
        let after = procrustes_objective(x_sc.values(), p.values(), &e);
        assert!(after <= before + 1e-9);
        for s in 0..1000 {
            let cand = random_orthonormal(4, 2, 5000 + s).unwrap();
            assert!(after <= procrustes_objective(x_sc.values(), cand.values(), &e) + 1e-9);
        }
    }

    #[test]
    fn p_step_errors() {
        let b = update_b_balanced(&gaussian(6, 3, 1).into_inner());
        let x_t = gaussian(6, 3, 2);
        let r = random_orthonormal(3, 3, 3).unwrap();
        let small = gaussian(6, 2, 4);
        let warm2 = OrthonormalMatrix::identity(2, 2).unwrap();
        assert!(matches!(update_p(&b, &x_t, &r, &small, &warm2), Err(Error::Dimension(_))));
        let zero = DataMatrix::new(DMatrix::zeros(6, 3)).unwrap();
        let warm = OrthonormalMatrix::identity(3, 3).unwrap();
        assert!(matches!(update_p(&b, &x_t, &r, &zero, &warm), Err(Error::Numerical(_))));
    }

    #[test]
    fn trainer_is_monotone_and_reproducible() {
        let x_t = gaussian(200, 16, 41);
        let x_sc = gaussian(200, 12, 42);
        let opts = TrainOptions {
            iters: 40,
            tolerance: None,
            monotone_guard: true,
        };
        let (model, state) = itq_plus_train_with(&x_t, &x_sc, 8, 0.01, 3, &opts).unwrap();
        assert_eq!(state.objective_trace.len(), 40);
        for w in state.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for s in state.codes.column_sums() {
            assert_eq!(s, 0);
        }
        assert_eq!(model.method(), Method::ItqPlus);
        let (_, again) = itq_plus_train_with(&x_t, &x_sc, 8, 0.01, 3, &opts).unwrap();
        assert_eq!(again.codes, state.codes);
    }

    #[test]
    fn zero_lambda_reduces_to_balanced_itq() {
        let x_t = gaussian(80, 8, 51);
        let x_sc = gaussian(80, 6, 52);
        for seed in 0..3 {
            let (_, plus) = itq_plus_train(&x_t, &x_sc, 6, 0.0, 30, seed).unwrap();
            let itq = itq_train_with(
                &x_t,
                6,
                seed,
                &ItqOptions {
                    iters: 30,
                    code_step: CodeStep::Balanced,
                    ..ItqOptions::default()
                },
            )
            .unwrap();
            assert_eq!(plus.rotation, itq.rotation);
            assert_eq!(plus.codes, itq.codes);
            let last = *itq.loss_trace.last().unwrap();
            assert!((plus.objective_trace.last().unwrap() - last / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn privileged_scale_is_inert_at_zero_lambda() {
        let x_t = gaussian(50, 6, 61);
        let x_sc = gaussian(50, 5, 62);
        let scaled = DataMatrix::new(x_sc.values() * 3.5).unwrap();
        let (_, a) = itq_plus_train(&x_t, &x_sc, 4, 0.0, 20, 9).unwrap();
        let (_, b) = itq_plus_train(&x_t, &scaled, 4, 0.0, 20, 9).unwrap();
        assert_eq!(a.rotation, b.rotation);
    }

    #[test]
    fn trainer_rejects_bad_input() {
        let x_t = gaussian(10, 4, 1);
        assert!(itq_plus_train(&x_t, &gaussian(9, 4, 2), 2, 0.1, 5, 0).is_err());
        assert!(itq_plus_train(&x_t, &gaussian(10, 2, 2), 3, 0.1, 5, 0).is_err());
        assert!(itq_plus_train(&x_t, &gaussian(10, 4, 2), 2, -1.0, 5, 0).is_err());
        let one = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(itq_plus_train(&one, &one, 1, 0.1, 5, 0).is_err());
    }
}
