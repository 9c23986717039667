//! Plain iterative quantization: alternate `B ← sgn(X R)` and the
//! Procrustes rotation update until the quantization loss settles.

use nalgebra::DMatrix;

use crate::codes::{sgn, BinaryCodeMatrix};
use crate::data::DataMatrix;
use crate::error::{ensure, Result};
use crate::itq_plus::update_b_balanced;
use crate::linalg::{procrustes_warm, random_orthonormal, OrthonormalMatrix};

/// Default outer iteration cap.
pub const DEFAULT_ITERS: usize = 150;
/// Default relative-change early-stop threshold.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// `||B - X R||_F²`.
pub fn quantization_loss(b: &BinaryCodeMatrix, x: &DataMatrix, r: &OrthonormalMatrix) -> Result<f64> {
    ensure!(
        b.rows() == x.rows() && x.cols() == r.d() && b.bits() == r.c(),
        Dimension,
        "codes {}x{}, data {}x{}, rotation {}x{} do not agree",
        b.rows(),
        b.bits(),
        x.rows(),
        x.cols(),
        r.d(),
        r.c()
    );
    Ok(loss_raw(&b.to_matrix(), x.values(), r.values()))
}

pub(crate) fn loss_raw(b: &DMatrix<f64>, x: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    (b - x * r).norm_squared()
}

/// How the code matrix is chosen given the current projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodeStep {
    /// `B = sgn(X R)`.
    #[default]
    Sign,
    /// Each bit split evenly by sorting (see [`update_b_balanced`]).
    Balanced,
}

#[derive(Debug, Clone)]
pub struct ItqOptions {
    pub iters: usize,
    /// Stop once the relative loss change falls below this; `None` runs all
    /// `iters` iterations.
    pub tolerance: Option<f64>,
    pub code_step: CodeStep,
    /// Overrides the seeded random initial rotation.
    pub init: Option<OrthonormalMatrix>,
}

impl Default for ItqOptions {
    fn default() -> Self {
        ItqOptions {
            iters: DEFAULT_ITERS,
            tolerance: Some(DEFAULT_TOLERANCE),
            code_step: CodeStep::Sign,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItqFit {
    pub codes: BinaryCodeMatrix,
    pub rotation: OrthonormalMatrix,
    /// Loss after each completed iteration.
    pub loss_trace: Vec<f64>,
}

pub fn itq_train(x: &DataMatrix, bits: usize, iters: usize, seed: u64) -> Result<ItqFit> {
    itq_train_with(
        x,
        bits,
        seed,
        &ItqOptions {
            iters,
            ..ItqOptions::default()
        },
    )
}

pub fn itq_train_with(x: &DataMatrix, bits: usize, seed: u64, opts: &ItqOptions) -> Result<ItqFit> {
    ensure!(
        bits >= 1 && bits <= x.cols(),
        Dimension,
        "{bits} bits need at least as many input dimensions, got {}",
        x.cols()
    );
    ensure!(opts.iters >= 1, InvalidArgument, "iters must be at least 1");
    let mut rotation = match &opts.init {
        Some(r) => {
            ensure!(
                r.d() == x.cols() && r.c() == bits,
                Dimension,
                "initial rotation is {}x{}, expected {}x{bits}",
                r.d(),
                r.c(),
                x.cols()
            );
            r.clone()
        }
        None => random_orthonormal(x.cols(), bits, seed)?,
    };
    let xv = x.values();
    let mut trace = Vec::with_capacity(opts.iters);
    let mut codes = None;
    for _ in 0..opts.iters {
        let projected = xv * rotation.values();
        let b = match opts.code_step {
            CodeStep::Sign => sgn(&projected),
            CodeStep::Balanced => update_b_balanced(&projected),
        };
        let bm = b.to_matrix();
        rotation = procrustes_warm(&bm, xv, &rotation)?;
        let loss = loss_raw(&bm, xv, rotation.values());
        let stop = should_stop(trace.last().copied(), loss, opts.tolerance);
        trace.push(loss);
        codes = Some(b);
        if stop {
            break;
        }
    }
    Ok(ItqFit {
        codes: codes.expect("at least one iteration ran"),
        rotation,
        loss_trace: trace,
    })
}

pub(crate) fn should_stop(previous: Option<f64>, current: f64, tolerance: Option<f64>) -> bool {
    let Some(tol) = tolerance else {
        return false;
    };
    if current <= f64::MIN_POSITIVE {
        return true;
    }
    match previous {
        Some(prev) => (prev - current).abs() <= tol * prev.abs(),
        None => false,
    }
}
