//! Experiment orchestration: run configuration, per-method training on a
//! split, evaluation and the method × bits × seed benchmark grid.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;

use crate::baselines::{cca_itq_fit, lsh_fit};
use crate::data::{make_split, zero_center, DataMatrix, SplitBundle};
use crate::error::{ensure, Error, Result};
use crate::eval::{ground_truth_with, score_rankings, EvalReport, GroundTruth, HammingIndex, ThresholdMode};
use crate::itq::{itq_train_with, CodeStep, ItqOptions, DEFAULT_ITERS, DEFAULT_TOLERANCE};
use crate::itq_plus::{bare_model, itq_plus_train_with, TrainOptions, DEFAULT_LAMBDA1};
use crate::lap_itq_plus::{lap_itq_plus_train, LapItqPlusConfig, DEFAULT_INNER_ITERS, DEFAULT_K, DEFAULT_LAMBDA2};
use crate::model::{HashModel, Hyperparams, Method};
use crate::preprocess::{pca_fit, pca_fit_dims, project, LinearProjection};

/// Which target rows form the retrieval database.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Database {
    /// The correspondence rows the model was trained on.
    Train,
    /// Training rows plus the target side of the unpaired rows.
    All,
}

impl Database {
    fn as_str(self) -> &'static str {
        match self {
            Database::Train => "train",
            Database::All => "all",
        }
    }
}

impl FromStr for Database {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Database::Train),
            "all" => Ok(Database::All),
            _ => Err(Error::InvalidArgument(format!("database must be train or all, got `{s}`"))),
        }
    }
}

fn threshold_mode_str(m: ThresholdMode) -> &'static str {
    match m {
        ThresholdMode::Database => "database",
        ThresholdMode::Queries => "queries",
    }
}

/// All knobs of a training or benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub bits: Vec<usize>,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub k_graph: usize,
    pub iters: usize,
    /// Relative-change early stop; `None` always runs `iters` sweeps.
    pub tolerance: Option<f64>,
    pub inner_iters: usize,
    pub seeds: Vec<u64>,
    /// PCA energy for the learned methods; `None` keeps exactly `bits`
    /// principal components.
    pub pca_energy: Option<f64>,
    pub test_fraction: f64,
    pub r_groundtruth: usize,
    pub ks: Vec<usize>,
    pub threshold_mode: ThresholdMode,
    pub database: Database,
    pub workers: usize,
    pub target: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            methods: vec![Method::Lsh, Method::CcaItq, Method::Itq, Method::ItqPlus, Method::LapItqPlus],
            bits: vec![8, 16, 32, 64],
            alpha: 0.5,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            k_graph: DEFAULT_K,
            iters: DEFAULT_ITERS,
            tolerance: Some(DEFAULT_TOLERANCE),
            inner_iters: DEFAULT_INNER_ITERS,
            seeds: (0..10).collect(),
            pca_energy: None,
            test_fraction: 0.1,
            r_groundtruth: crate::eval::DEFAULT_GT_RANK,
            ks: vec![1, 5, 10, 20, 50, 100, 200, 500],
            threshold_mode: ThresholdMode::Database,
            database: Database::All,
            workers: 1,
            target: None,
            source: None,
            out: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse `{value}`")))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses `key=value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidArgument(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "methods" | "method" => self.methods = parse_list(&key, value)?,
            "bits" => self.bits = parse_list(&key, value)?,
            "alpha" => self.alpha = parse_one(&key, value)?,
            "lambda1" => self.lambda1 = parse_one(&key, value)?,
            "lambda2" => self.lambda2 = parse_one(&key, value)?,
            "k" | "k_graph" => self.k_graph = parse_one(&key, value)?,
            "iters" => self.iters = parse_one(&key, value)?,
            "tolerance" => {
                self.tolerance = match value {
                    "off" | "none" => None,
                    v => Some(parse_one(&key, v)?),
                }
            }
            "inner_iters" => self.inner_iters = parse_one(&key, value)?,
            "seeds" | "seed" => self.seeds = parse_seeds(value)?,
            "pca_energy" => {
                self.pca_energy = match value {
                    "" | "none" => None,
                    v => Some(parse_one(&key, v)?),
                }
            }
            "test_fraction" => self.test_fraction = parse_one(&key, value)?,
            "r_groundtruth" | "r" => self.r_groundtruth = parse_one(&key, value)?,
            "ks" => self.ks = parse_list(&key, value)?,
            "threshold_mode" => {
                self.threshold_mode = match value {
                    "database" => ThresholdMode::Database,
                    "queries" => ThresholdMode::Queries,
                    v => return Err(Error::InvalidArgument(format!("unknown threshold mode `{v}`"))),
                }
            }
            "database" => self.database = value.parse()?,
            "workers" => self.workers = parse_one(&key, value)?,
            "target" => self.target = Some(PathBuf::from(value)),
            "source" => self.source = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Serialises to the `key=value` format accepted by [`RunConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "methods={}", join(&self.methods));
        let _ = writeln!(s, "bits={}", join(&self.bits));
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "lambda1={}", self.lambda1);
        let _ = writeln!(s, "lambda2={}", self.lambda2);
        let _ = writeln!(s, "k={}", self.k_graph);
        let _ = writeln!(s, "iters={}", self.iters);
        let _ = writeln!(
            s,
            "tolerance={}",
            self.tolerance.map_or("off".to_string(), |t| t.to_string())
        );
        let _ = writeln!(s, "inner_iters={}", self.inner_iters);
        let _ = writeln!(s, "seeds={}", join(&self.seeds));
        let _ = writeln!(
            s,
            "pca_energy={}",
            self.pca_energy.map_or("none".to_string(), |e| e.to_string())
        );
        let _ = writeln!(s, "test_fraction={}", self.test_fraction);
        let _ = writeln!(s, "r_groundtruth={}", self.r_groundtruth);
        let _ = writeln!(s, "ks={}", join(&self.ks));
        let _ = writeln!(s, "threshold_mode={}", threshold_mode_str(self.threshold_mode));
        let _ = writeln!(s, "database={}", self.database.as_str());
        let _ = writeln!(s, "workers={}", self.workers);
        for (key, path) in [("target", &self.target), ("source", &self.source), ("out", &self.out)] {
            if let Some(p) = path {
                let _ = writeln!(s, "{key}={}", p.display());
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.methods.is_empty(), InvalidArgument, "no methods configured");
        ensure!(
            !self.bits.is_empty() && self.bits.iter().all(|&b| b >= 1),
            InvalidArgument,
            "bits must be a non-empty list of positive counts"
        );
        ensure!(self.alpha > 0.0 && self.alpha <= 1.0, InvalidArgument, "alpha must lie in (0, 1]");
        ensure!(
            self.lambda1 >= 0.0 && self.lambda1.is_finite() && self.lambda2 >= 0.0 && self.lambda2.is_finite(),
            InvalidArgument,
            "lambda1 and lambda2 must be finite and >= 0"
        );
        ensure!(self.k_graph >= 1, InvalidArgument, "k must be at least 1");
        ensure!(self.iters >= 1, InvalidArgument, "iters must be at least 1");
        ensure!(self.inner_iters >= 1, InvalidArgument, "inner_iters must be at least 1");
        if let Some(t) = self.tolerance {
            ensure!(t >= 0.0 && t.is_finite(), InvalidArgument, "tolerance must be >= 0");
        }
        ensure!(!self.seeds.is_empty(), InvalidArgument, "no seeds configured");
        if let Some(e) = self.pca_energy {
            ensure!(e > 0.0 && e <= 1.0, InvalidArgument, "pca_energy must lie in (0, 1]");
        }
        ensure!(
            (0.0..1.0).contains(&self.test_fraction),
            InvalidArgument,
            "test_fraction must lie in [0, 1)"
        );
        ensure!(self.r_groundtruth >= 1, InvalidArgument, "r_groundtruth must be at least 1");
        ensure!(
            !self.ks.is_empty() && self.ks.iter().all(|&k| k >= 1),
            InvalidArgument,
            "ks must be a non-empty list of positive counts"
        );
        ensure!(self.workers >= 1, InvalidArgument, "workers must be at least 1");
        Ok(())
    }

    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            iters: self.iters,
            tolerance: self.tolerance,
            monotone_guard: true,
        }
    }
}

/// Accepts `0,1,2` as well as ranges like `0..10` (end exclusive).
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (parse_one("seeds", a)?, parse_one("seeds", b)?);
            ensure!(a < b, InvalidArgument, "empty seed range `{part}`");
            seeds.extend(a..b);
        } else {
            seeds.push(parse_one("seeds", part)?);
        }
    }
    Ok(seeds)
}

/// A model plus the per-iteration objective it was trained with.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: HashModel,
    pub objective_trace: Vec<f64>,
}

impl TrainedModel {
    /// One `iter=<t> objective=<v>` line per recorded iteration.
    pub fn log_lines(&self) -> String {
        let mut s = String::new();
        for (t, v) in self.objective_trace.iter().enumerate() {
            let _ = writeln!(s, "iter={} objective={v}", t + 1);
        }
        s
    }
}

/// PCA front end keeping at least `bits` components.
fn reduce(x: &DataMatrix, bits: usize, energy: Option<f64>) -> Result<LinearProjection> {
    ensure!(
        bits <= x.cols(),
        Dimension,
        "{bits} bits exceed the {} available feature dimensions",
        x.cols()
    );
    match energy {
        Some(e) => {
            let p = pca_fit(x, e)?;
            if p.d_out() >= bits {
                Ok(p)
            } else {
                warn!("{e} PCA energy keeps {} < {bits} components; keeping {bits}", p.d_out());
                pca_fit_dims(x, bits)
            }
        }
        None => pca_fit_dims(x, bits),
    }
}

/// Centered, PCA-reduced source views for the transfer methods.
struct SourceViews {
    /// Correspondence rows, centered by their own mean.
    corr: DataMatrix,
    /// All source training rows (correspondences first), centered jointly.
    all: DataMatrix,
}

fn source_views(split: &SplitBundle, bits: usize, energy: Option<f64>) -> Result<SourceViews> {
    let (all_centered, _) = zero_center(&split.source_all()?)?;
    let proj = reduce(&all_centered, bits, energy)?;
    let all = project(&all_centered, &proj)?;
    let n = split.n_corr();
    let corr_rows: Vec<usize> = (0..n).collect();
    let (corr, _) = zero_center(&all.select_rows(&corr_rows)?)?;
    Ok(SourceViews { corr, all })
}

/// Trains `method` with `bits` bits on one split.
pub fn train_on_split(method: Method, bits: usize, split: &SplitBundle, cfg: &RunConfig, seed: u64) -> Result<TrainedModel> {
    let (target, t_info) = zero_center(&split.target_train)?;
    let hyper = Hyperparams {
        lambda1: 0.0,
        lambda2: 0.0,
        k_graph: 0,
        iters: cfg.iters as u32,
        seed,
    };
    match method {
        Method::Lsh => {
            let model = lsh_fit(target.cols(), bits, seed)?
                .with_front_end(t_info, LinearProjection::identity(target.cols()))?;
            Ok(TrainedModel {
                model,
                objective_trace: Vec::new(),
            })
        }
        Method::CcaItq => {
            let model = cca_itq_fit(&split.target_train, &split.source_corr, bits, cfg.iters, seed)?;
            Ok(TrainedModel {
                model,
                objective_trace: Vec::new(),
            })
        }
        Method::Itq => {
            let pca = reduce(&target, bits, cfg.pca_energy)?;
            let reduced = project(&target, &pca)?;
            let opts = ItqOptions {
                iters: cfg.iters,
                tolerance: cfg.tolerance,
                code_step: CodeStep::Sign,
                init: None,
            };
            let fit = itq_train_with(&reduced, bits, seed, &opts)?;
            let model = bare_model(Method::Itq, &fit.rotation, hyper)?.with_front_end(t_info, pca)?;
            Ok(TrainedModel {
                model,
                objective_trace: fit.loss_trace,
            })
        }
        Method::ItqPlus => {
            let pca = reduce(&target, bits, cfg.pca_energy)?;
            let reduced = project(&target, &pca)?;
            let source = source_views(split, bits, cfg.pca_energy)?;
            let (model, state) =
                itq_plus_train_with(&reduced, &source.corr, bits, cfg.lambda1, seed, &cfg.train_options())?;
            Ok(TrainedModel {
                model: model.with_front_end(t_info, pca)?,
                objective_trace: state.objective_trace,
            })
        }
        Method::LapItqPlus => {
            let pca = reduce(&target, bits, cfg.pca_energy)?;
            let reduced = project(&target, &pca)?;
            let source = source_views(split, bits, cfg.pca_energy)?;
            let lap_cfg = LapItqPlusConfig {
                bits,
                lambda1: cfg.lambda1,
                lambda2: cfg.lambda2,
                k: cfg.k_graph,
                inner_iters: cfg.inner_iters,
                rebalance: false,
                train: cfg.train_options(),
            };
            let fit = lap_itq_plus_train(&reduced, &source.corr, &source.all, seed, &lap_cfg)?;
            Ok(TrainedModel {
                model: fit.model.with_front_end(t_info, pca)?,
                objective_trace: fit.state.objective_trace,
            })
        }
    }
}

/// Retrieval database for a split.
pub fn database_for(split: &SplitBundle, which: Database) -> Result<DataMatrix> {
    match (which, &split.target_extra) {
        (Database::All, Some(extra)) => split.target_train.vstack(extra),
        _ => Ok(split.target_train.clone()),
    }
}

/// One prepared split with its retrieval sets and ground truth.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: SplitBundle,
    pub database: DataMatrix,
    pub queries: DataMatrix,
    pub ground_truth: GroundTruth,
}

pub fn prepare_split(target_all: &DataMatrix, source_all: &DataMatrix, cfg: &RunConfig, seed: u64) -> Result<PreparedSplit> {
    let split = make_split(target_all, source_all, cfg.alpha, cfg.test_fraction, seed)?;
    let queries = split
        .target_test
        .clone()
        .ok_or_else(|| Error::InvalidArgument("test_fraction leaves no query rows".into()))?;
    let database = database_for(&split, cfg.database)?;
    let ground_truth = ground_truth_with(&database, &queries, cfg.r_groundtruth, cfg.threshold_mode)?;
    Ok(PreparedSplit {
        split,
        database,
        queries,
        ground_truth,
    })
}

/// Trains and evaluates one cell.
pub fn run_cell(method: Method, bits: usize, prepared: &PreparedSplit, cfg: &RunConfig) -> Result<(TrainedModel, EvalReport)> {
    let seed = prepared.split.seed;
    let trained = train_on_split(method, bits, &prepared.split, cfg, seed)?;
    let index = HammingIndex::new(trained.model.encode(&prepared.database)?);
    let query_codes = trained.model.encode(&prepared.queries)?;
    let mut report = score_rankings(&index, &query_codes, &prepared.ground_truth, &cfg.ks, &trained.model)?;
    report.alpha = cfg.alpha;
    report.seed = seed;
    Ok((trained, report))
}

/// Outcome of one (method, bits, seed) cell; failures are kept as text.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub bits: usize,
    pub seed: u64,
    pub outcome: std::result::Result<(EvalReport, usize), String>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub config: RunConfig,
    pub cells: Vec<CellResult>,
}

/// Mean MAP and precision curve of one (method, bits) pair over the seeds
/// that succeeded.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub method: Method,
    pub bits: usize,
    pub runs: usize,
    pub mean_map: Option<f64>,
    pub mean_precision: Vec<(usize, f64)>,
}

/// Runs every (method, bits, seed) cell. Cells run on up to
/// `cfg.workers` threads; results come back in grid order.
pub fn run_bench(target_all: &DataMatrix, source_all: &DataMatrix, cfg: &RunConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let prepared: Vec<PreparedSplit> = cfg
            .seeds
            .par_iter()
            .map(|&seed| prepare_split(target_all, source_all, cfg, seed))
            .collect::<Result<_>>()?;
        let grid: Vec<(Method, usize, usize)> = cfg
            .methods
            .iter()
            .flat_map(|&m| cfg.bits.iter().flat_map(move |&b| (0..cfg.seeds.len()).map(move |s| (m, b, s))))
            .collect();
        let cells = grid
            .par_iter()
            .map(|&(method, bits, s)| {
                let prepared = &prepared[s];
                let outcome = run_cell(method, bits, prepared, cfg)
                    .map(|(trained, report)| (report, trained.objective_trace.len()))
                    .map_err(|e| e.to_string());
                match &outcome {
                    Ok((r, _)) => info!("{method} {bits} bits seed {}: MAP {:.4}", cfg.seeds[s], r.map),
                    Err(e) => warn!("{method} {bits} bits seed {} failed: {e}", cfg.seeds[s]),
                }
                CellResult {
                    method,
                    bits,
                    seed: cfg.seeds[s],
                    outcome,
                }
            })
            .collect();
        Ok(BenchOutcome {
            config: cfg.clone(),
            cells,
        })
    })
}

impl BenchOutcome {
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for &method in &self.config.methods {
            for &bits in &self.config.bits {
                let reports: Vec<&EvalReport> = self
                    .cells
                    .iter()
                    .filter(|c| c.method == method && c.bits == bits)
                    .filter_map(|c| c.outcome.as_ref().ok().map(|(r, _)| r))
                    .collect();
                let runs = reports.len();
                let mean_map = (runs > 0).then(|| reports.iter().map(|r| r.map).sum::<f64>() / runs as f64);
                let mean_precision = self
                    .config
                    .ks
                    .iter()
                    .enumerate()
                    .filter(|_| runs > 0)
                    .map(|(slot, &k)| {
                        (k, reports.iter().map(|r| r.precision_at_k[slot].1).sum::<f64>() / runs as f64)
                    })
                    .collect();
                out.push(Aggregate {
                    method,
                    bits,
                    runs,
                    mean_map,
                    mean_precision,
                });
            }
        }
        out
    }

    pub fn mean_map(&self, method: Method, bits: usize) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.bits == bits)
            .and_then(|a| a.mean_map)
    }

    /// `row,method,bits,seed,runs,map`: one `mean` row per (method, bits)
    /// followed by one `seed` row per cell. Failed cells show `NA`.
    pub fn bench_table_csv(&self) -> String {
        let mut s = String::from("row,method,bits,seed,runs,map\n");
        for a in self.aggregates() {
            let map = a.mean_map.map_or("NA".to_string(), |m| m.to_string());
            let _ = writeln!(s, "mean,{},{},,{},{map}", a.method, a.bits, a.runs);
        }
        for c in &self.cells {
            let map = match &c.outcome {
                Ok((r, _)) => r.map.to_string(),
                Err(_) => "NA".to_string(),
            };
            let _ = writeln!(s, "seed,{},{},{},,{map}", c.method, c.bits, c.seed);
        }
        s
    }

    /// Methods as rows, bit lengths as columns, mean MAP in each cell.
    pub fn map_table_csv(&self) -> String {
        let aggregates = self.aggregates();
        let mut s = String::from("method");
        for b in &self.config.bits {
            let _ = write!(s, ",{b}");
        }
        s.push('\n');
        for &method in &self.config.methods {
            s.push_str(method.as_str());
            for &bits in &self.config.bits {
                let cell = aggregates
                    .iter()
                    .find(|a| a.method == method && a.bits == bits)
                    .and_then(|a| a.mean_map)
                    .map_or("NA".to_string(), |m| format!("{m:.4}"));
                let _ = write!(s, ",{cell}");
            }
            s.push('\n');
        }
        s
    }

    /// `K,<method>...` mean precision curve for one bit length.
    pub fn precision_csv(&self, bits: usize) -> String {
        let aggregates: Vec<Aggregate> = self.aggregates().into_iter().filter(|a| a.bits == bits).collect();
        let mut s = String::from("K");
        for a in &aggregates {
            let _ = write!(s, ",{}", a.method);
        }
        s.push('\n');
        for (slot, k) in self.config.ks.iter().enumerate() {
            let _ = write!(s, "{k}");
            for a in &aggregates {
                match a.mean_precision.get(slot) {
                    Some((_, p)) => {
                        let _ = write!(s, ",{p}");
                    }
                    None => s.push_str(",NA"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Writes the tables, per-cell reports and the effective config to
    /// `out_dir`.
    pub fn write_files(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        // The output location is left out so reruns elsewhere stay identical.
        let effective = RunConfig {
            out: None,
            ..self.config.clone()
        };
        put("config.txt".into(), effective.to_config_string())?;
        put("bench_table.csv".into(), self.bench_table_csv())?;
        put("map_table.csv".into(), self.map_table_csv())?;
        for &bits in &self.config.bits {
            put(format!("precision_bits{bits}.csv"), self.precision_csv(bits))?;
        }
        let cells_dir = out_dir.join("cells");
        for c in &self.cells {
            let stem = format!("{}_{}bits_seed{}", c.method.as_str().replace('+', "plus"), c.bits, c.seed);
            match &c.outcome {
                Ok((report, _)) => written.extend(report.write_files(&cells_dir, &stem)?),
                Err(msg) => {
                    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
                    let path = cells_dir.join(format!("{stem}.error"));
                    fs::write(&path, format!("{msg}\n")).map_err(|e| Error::io(&path, e))?;
                    written.push(path);
                }
            }
        }
        Ok(written)
    }
}
