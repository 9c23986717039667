//! LapITQ+: ITQ+ with a graph Laplacian regulariser that carries the
//! source domain's Hamming-space neighbourhoods over to the target codes.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;

use crate::codes::{hamming_unchecked, sgn, BinaryCodeMatrix};
use crate::data::DataMatrix;
use crate::error::{ensure, Result};
use crate::itq::{itq_train_with, ItqOptions};
use crate::itq_plus::{alternate, bare_model, BStep, ItqPlusState, RelaxedStep, TrainOptions};
use crate::model::{HashModel, Hyperparams, Method};

pub const DEFAULT_LAMBDA2: f64 = 0.01;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_INNER_ITERS: usize = 100;
const POWER_STEPS: usize = 50;
const STEP_DELTA: f64 = 1e-12;

/// Undirected 0/1 graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbours: Vec<BTreeSet<usize>>,
    k: usize,
}

impl AdjacencyGraph {
    /// Builds a symmetric graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbours = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            ensure!(i < n && j < n, InvalidArgument, "edge ({i}, {j}) out of range for {n} nodes");
            ensure!(i != j, InvalidArgument, "self-loop at node {i}");
            neighbours[i].insert(j);
            neighbours[j].insert(i);
        }
        Ok(AdjacencyGraph { neighbours, k: 0 })
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbours(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbours[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbours
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.range(i + 1..).map(move |&j| (i, j)))
    }

    /// Writes one `i j` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Connects every code to its `k` nearest codes by Hamming distance (ties by
/// ascending index), then symmetrises by union.
pub fn knn_hamming_graph(codes: &BinaryCodeMatrix, k: usize) -> Result<AdjacencyGraph> {
    let n = codes.rows();
    ensure!(
        k >= 1 && k < n,
        InvalidArgument,
        "k must satisfy 1 <= k < n = {n}, got {k}"
    );
    let mut neighbours = vec![BTreeSet::new(); n];
    let mut scratch: Vec<(u32, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scratch.clear();
        let ci = codes.packed_row(i);
        scratch.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (hamming_unchecked(ci, codes.packed_row(j)), j)),
        );
        scratch.select_nth_unstable(k - 1);
        scratch[..k].sort_unstable();
        for &(_, j) in &scratch[..k] {
            neighbours[i].insert(j);
            neighbours[j].insert(i);
        }
    }
    Ok(AdjacencyGraph { neighbours, k })
}

/// `L = D − W` for a 0/1 adjacency, stored sparsely.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    graph: AdjacencyGraph,
    lambda_max: f64,
}

pub fn laplacian(graph: &AdjacencyGraph) -> LaplacianMatrix {
    let mut l = LaplacianMatrix {
        graph: graph.clone(),
        lambda_max: 0.0,
    };
    l.lambda_max = l.power_iteration(POWER_STEPS);
    l
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &AdjacencyGraph {
        &self.graph
    }

    /// Largest-eigenvalue estimate from power iteration.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.graph.degree(i) as f64;
            for &j in self.graph.neighbours(i) {
                m[(i, j)] = -1.0;
            }
        }
        m
    }

    /// `L · B`.
    pub fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, c) = b.shape();
        assert_eq!(n, self.n(), "Laplacian applied to mismatched matrix");
        let mut out = DMatrix::zeros(n, c);
        for k in 0..c {
            for i in 0..n {
                let ns = self.graph.neighbours(i);
                let mut v = ns.len() as f64 * b[(i, k)];
                for &j in ns {
                    v -= b[(j, k)];
                }
                out[(i, k)] = v;
            }
        }
        out
    }

    /// `tr(Bᵀ L B) = Σ_{(i,j) ∈ E} ‖b_i − b_j‖²`.
    pub fn quadratic_form(&self, b: &DMatrix<f64>) -> f64 {
        self.graph
            .edges()
            .map(|(i, j)| (b.row(i) - b.row(j)).norm_squared())
            .sum()
    }

    fn power_iteration(&self, steps: usize) -> f64 {
        let n = self.n();
        if self.graph.edges().next().is_none() {
            return 0.0;
        }
        // Deterministic start vector with no component along the all-ones
        // null vector.
        let mut v = DMatrix::from_fn(n, 1, |i, _| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5);
        let mean = v.mean();
        v.add_scalar_mut(-mean);
        let mut estimate = 0.0;
        for _ in 0..steps {
            let norm = v.norm();
            if norm == 0.0 {
                break;
            }
            v /= norm;
            let w = self.apply(&v);
            estimate = v.dot(&w);
            v = w;
        }
        estimate
    }
}

/// Result of the box-constrained relaxed B-step.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    /// Relaxed codes in `[−1, 1]^{n×c}`.
    pub solution: DMatrix<f64>,
    /// `f` at the start point and after each accepted inner step.
    pub objective_trace: Vec<f64>,
}

/// `f(B) = −2 tr(B K) + λ2 tr(Bᵀ L B)` with `Kᵀ = scores / 2`, i.e.
/// `f(B) = −⟨B, S⟩ + λ2 tr(Bᵀ L B)`.
pub fn relaxed_objective(b: &DMatrix<f64>, scores: &DMatrix<f64>, l: &LaplacianMatrix, lambda2: f64) -> f64 {
    let linear = -b.dot(scores);
    if lambda2 == 0.0 {
        linear
    } else {
        linear + lambda2 * l.quadratic_form(b)
    }
}

/// Projected gradient descent for `min −2 tr(B K) + λ2 tr(Bᵀ L B)` over the
/// box `[−1, 1]^{n×c}`, taking `K` as `c × n`.
pub fn update_b_relaxed(
    k: &DMatrix<f64>,
    l: &LaplacianMatrix,
    lambda2: f64,
    inner_iters: usize,
) -> Result<BinaryCodeMatrix> {
    let scores = k.transpose() * 2.0;
    Ok(sgn(&relaxed_solve(&scores, l, lambda2, inner_iters)?.solution))
}

/// Same problem as [`update_b_relaxed`], parameterised by the score matrix
/// `S = 2Kᵀ` (`n × c`). Starts at `sgn(S)` and uses step
/// `1 / (2 λ2 λ_max + δ)`, halving it whenever a step would raise `f`.
pub fn relaxed_solve(
    scores: &DMatrix<f64>,
    l: &LaplacianMatrix,
    lambda2: f64,
    inner_iters: usize,
) -> Result<RelaxedSolution> {
    ensure!(
        scores.iter().all(|v| v.is_finite()),
        Numerical,
        "relaxed B-step received non-finite scores"
    );
    ensure!(
        scores.nrows() == l.n(),
        Dimension,
        "scores have {} rows but the Laplacian is {}x{}",
        scores.nrows(),
        l.n(),
        l.n()
    );
    ensure!(lambda2 >= 0.0, InvalidArgument, "lambda2 must be >= 0");
    let start = sgn(scores).to_matrix();
    let mut f = relaxed_objective(&start, scores, l, lambda2);
    let mut trace = vec![f];
    if lambda2 == 0.0 || l.graph.edges().next().is_none() {
        return Ok(RelaxedSolution {
            solution: start,
            objective_trace: trace,
        });
    }
    let mut step = 1.0 / (2.0 * lambda2 * l.lambda_max() + STEP_DELTA);
    let mut b = start;
    for _ in 0..inner_iters {
        // ∇f = −S + 2 λ2 L B.
        let grad = l.apply(&b) * (2.0 * lambda2) - scores;
        let mut accepted = false;
        for _ in 0..30 {
            let next = (&b - &grad * step).map(|v| v.clamp(-1.0, 1.0));
            let f_next = relaxed_objective(&next, scores, l, lambda2);
            if f_next <= f {
                accepted = f_next < f || next != b;
                b = next;
                f = f_next;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
    }
    Ok(RelaxedSolution {
        solution: b,
        objective_trace: trace,
    })
}

/// Plain ITQ codes for every source row. Rows `0..n` line up with `X_SC`
/// when `x_s` stacks the correspondences first.
pub fn source_codes_offline(x_s: &DataMatrix, bits: usize, iters: usize, seed: u64) -> Result<BinaryCodeMatrix> {
    let opts = ItqOptions {
        iters,
        ..ItqOptions::default()
    };
    Ok(itq_train_with(x_s, bits, seed, &opts)?.codes)
}

#[derive(Debug, Clone)]
pub struct LapItqPlusConfig {
    pub bits: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub k: usize,
    pub inner_iters: usize,
    pub rebalance: bool,
    pub train: TrainOptions,
}

impl Default for LapItqPlusConfig {
    fn default() -> Self {
        LapItqPlusConfig {
            bits: 32,
            lambda1: crate::itq_plus::DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            k: DEFAULT_K,
            inner_iters: DEFAULT_INNER_ITERS,
            rebalance: false,
            train: TrainOptions::default(),
        }
    }
}

/// Everything produced by [`lap_itq_plus_train`], including the offline
/// graph for inspection.
#[derive(Debug, Clone)]
pub struct LapItqPlusFit {
    pub model: HashModel,
    pub state: ItqPlusState,
    pub source_codes: BinaryCodeMatrix,
    pub laplacian: LaplacianMatrix,
}

/// Trains LapITQ+ on centered inputs. `x_s` holds all source training rows
/// (correspondences first, centered together) and `x_sc` the centered
/// correspondence rows used in the slack term.
pub fn lap_itq_plus_train(
    x_t: &DataMatrix,
    x_sc: &DataMatrix,
    x_s: &DataMatrix,
    seed: u64,
    cfg: &LapItqPlusConfig,
) -> Result<LapItqPlusFit> {
    let n = x_t.rows();
    ensure!(
        x_s.rows() >= n && x_s.cols() == x_sc.cols(),
        Dimension,
        "stacked source data must contain the {n} correspondences"
    );
    ensure!(cfg.k < n, InvalidArgument, "k = {} must be below n = {n}", cfg.k);
    let source_codes = source_codes_offline(x_s, cfg.bits, cfg.train.iters, seed)?;
    let graph = knn_hamming_graph(&source_codes.head(n)?, cfg.k)?;
    let laplacian = laplacian(&graph);
    let step = RelaxedStep {
        laplacian: &laplacian,
        lambda2: cfg.lambda2,
        inner_iters: cfg.inner_iters,
        rebalance: cfg.rebalance,
    };
    let state = alternate(x_t, x_sc, cfg.bits, cfg.lambda1, seed, BStep::Relaxed(step), &cfg.train)?;
    let model = bare_model(
        Method::LapItqPlus,
        &state.rotation,
        Hyperparams {
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            k_graph: cfg.k as u32,
            iters: cfg.train.iters as u32,
            seed,
        },
    )?;
    Ok(LapItqPlusFit {
        model,
        state,
        source_codes,
        laplacian,
    })
}
