//! Hamming-ranked retrieval and its evaluation against Euclidean ground
//! truth: mean average precision and precision at K.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::codes::{hamming_unchecked, BinaryCodeMatrix};
use crate::data::DataMatrix;
use crate::error::{ensure, Error, Result};
use crate::model::{HashModel, Method};

/// Default rank of the neighbour whose mean distance sets the threshold.
pub const DEFAULT_GT_RANK: usize = 50;

/// Encodes raw (uncentered) rows with `model`.
pub fn encode(model: &HashModel, x: &DataMatrix) -> Result<BinaryCodeMatrix> {
    model.encode(x)
}

/// Immutable linear-scan index over packed codes.
#[derive(Debug, Clone)]
pub struct HammingIndex {
    codes: BinaryCodeMatrix,
    ids: Vec<usize>,
}

impl HammingIndex {
    /// Indexes `codes` with ids `0..n`.
    pub fn new(codes: BinaryCodeMatrix) -> Self {
        let ids = (0..codes.rows()).collect();
        HammingIndex { codes, ids }
    }

    pub fn with_ids(codes: BinaryCodeMatrix, ids: Vec<usize>) -> Result<Self> {
        ensure!(
            ids.len() == codes.rows(),
            Dimension,
            "{} ids for {} codes",
            ids.len(),
            codes.rows()
        );
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        ensure!(
            sorted.windows(2).all(|w| w[0] != w[1]),
            InvalidArgument,
            "index ids must be unique"
        );
        Ok(HammingIndex { codes, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.codes.bits()
    }

    /// All ids ordered by ascending Hamming distance to `query`, ties by
    /// ascending id.
    pub fn search(&self, query: &[u64]) -> Result<Vec<usize>> {
        ensure!(!self.is_empty(), InvalidArgument, "index is empty");
        ensure!(
            query.len() == self.codes.words_per_row(),
            Dimension,
            "query has {} words, index codes have {}",
            query.len(),
            self.codes.words_per_row()
        );
        let mut scored: Vec<(u32, usize)> = (0..self.len())
            .map(|row| (hamming_unchecked(query, self.codes.packed_row(row)), self.ids[row]))
            .collect();
        scored.sort_unstable();
        Ok(scored.into_iter().map(|(_, id)| id).collect())
    }
}

/// Which rows the threshold's nearest-neighbour distances are averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Each database point's distance to its r-th nearest other database
    /// point.
    #[default]
    Database,
    /// Each query's distance to its r-th nearest database point.
    Queries,
}

/// Euclidean ground truth: database item `i` is relevant to query `q` iff
/// `‖q − x_i‖₂ ≤ threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Sorted relevant database ids per query.
    pub relevant: Vec<Vec<usize>>,
    pub threshold: f64,
    pub r: usize,
}

fn squared_distances(a: &DMatrix<f64>, b: &DMatrix<f64>, i: usize) -> Vec<f64> {
    let row = a.row(i);
    (0..b.nrows()).map(|j| (row - b.row(j)).norm_squared()).collect()
}

fn kth_smallest(mut v: Vec<f64>, k: usize) -> f64 {
    let (_, kth, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}

pub fn ground_truth(database: &DataMatrix, queries: &DataMatrix, r: usize) -> Result<GroundTruth> {
    ground_truth_with(database, queries, r, ThresholdMode::Database)
}

pub fn ground_truth_with(
    database: &DataMatrix,
    queries: &DataMatrix,
    r: usize,
    mode: ThresholdMode,
) -> Result<GroundTruth> {
    let n = database.rows();
    ensure!(n >= 2, InvalidArgument, "ground truth needs at least two database rows");
    ensure!(r >= 1, InvalidArgument, "neighbour rank r must be at least 1");
    ensure!(
        queries.cols() == database.cols(),
        Dimension,
        "queries have {} columns, database {}",
        queries.cols(),
        database.cols()
    );
    let (db, qs) = (database.values(), queries.values());
    let threshold = match mode {
        ThresholdMode::Database => {
            let rank = if r > n - 1 {
                warn!("ground-truth rank {r} exceeds {} other database points; clamping", n - 1);
                n - 1
            } else {
                r
            };
            // Index 0 of the sorted distances is the point itself.
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|i| kth_smallest(squared_distances(db, db, i), rank).sqrt())
                .collect::<Vec<_>>()
                .iter()
                .sum();
            total / n as f64
        }
        ThresholdMode::Queries => {
            let rank = if r > n {
                warn!("ground-truth rank {r} exceeds {n} database points; clamping");
                n
            } else {
                r
            };
            let total: f64 = (0..qs.nrows())
                .into_par_iter()
                .map(|q| kth_smallest(squared_distances(qs, db, q), rank - 1).sqrt())
                .collect::<Vec<_>>()
                .iter()
                .sum();
            total / qs.nrows() as f64
        }
    };
    let relevant = (0..qs.nrows())
        .into_par_iter()
        .map(|q| {
            squared_distances(qs, db, q)
                .into_iter()
                .enumerate()
                .filter(|&(_, d2)| d2.sqrt() <= threshold)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(GroundTruth {
        relevant,
        threshold,
        r,
    })
}

/// Average precision of a full ranking; `relevant` must be sorted. Returns 0
/// for an empty relevant set.
pub fn average_precision(ranked: &[usize], relevant: &[usize]) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, id) in ranked.iter().enumerate() {
        if relevant.binary_search(id).is_ok() {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// `|top-K ∩ relevant| / K` for each requested `K`. `K` larger than the
/// ranking is clamped to its length.
pub fn precision_at_k(ranked: &[usize], relevant: &[usize], ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    ks.iter()
        .map(|&k| {
            ensure!(k >= 1, InvalidArgument, "K must be at least 1");
            let k_eff = if k > ranked.len() {
                warn!("K = {k} exceeds the {} retrievable items; clamping", ranked.len());
                ranked.len()
            } else {
                k
            };
            let hits = ranked[..k_eff]
                .iter()
                .filter(|id| relevant.binary_search(id).is_ok())
                .count();
            Ok((k, hits as f64 / k_eff as f64))
        })
        .collect()
}

/// Retrieval quality of one model on one query set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean of `per_query_ap`.
    pub map: f64,
    /// Mean precision over the included queries, per requested K.
    pub precision_at_k: Vec<(usize, f64)>,
    /// AP of every query with at least one relevant item, in query order.
    pub per_query_ap: Vec<f64>,
    /// Queries skipped because nothing in the database is relevant to them.
    pub excluded_queries: usize,
    pub threshold: f64,
    pub bits: usize,
    pub method: Method,
    pub seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub r: usize,
    pub ks: Vec<usize>,
    pub threshold_mode: ThresholdMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            r: DEFAULT_GT_RANK,
            ks: vec![1, 5, 10, 20, 50, 100],
            threshold_mode: ThresholdMode::Database,
        }
    }
}

/// Builds ground truth in the original feature space, encodes both sets,
/// ranks the database for every query and scores the rankings.
pub fn evaluate(
    model: &HashModel,
    database: &DataMatrix,
    queries: &DataMatrix,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let gt = ground_truth_with(database, queries, opts.r, opts.threshold_mode)?;
    let index = HammingIndex::new(model.encode(database)?);
    let query_codes = model.encode(queries)?;
    score_rankings(&index, &query_codes, &gt, &opts.ks, model)
}

pub(crate) fn score_rankings(
    index: &HammingIndex,
    query_codes: &BinaryCodeMatrix,
    gt: &GroundTruth,
    ks: &[usize],
    model: &HashModel,
) -> Result<EvalReport> {
    ensure!(!ks.is_empty(), InvalidArgument, "at least one K is required");
    let per_query: Vec<Option<(f64, Vec<(usize, f64)>)>> = (0..query_codes.rows())
        .into_par_iter()
        .map(|q| {
            let relevant = &gt.relevant[q];
            if relevant.is_empty() {
                return Ok(None);
            }
            let ranked = index.search(query_codes.packed_row(q))?;
            Ok(Some((
                average_precision(&ranked, relevant),
                precision_at_k(&ranked, relevant, ks)?,
            )))
        })
        .collect::<Result<_>>()?;
    let included: Vec<_> = per_query.iter().flatten().collect();
    if included.is_empty() {
        return Err(Error::InvalidArgument(
            "no query has a relevant database item; MAP is undefined".into(),
        ));
    }
    let per_query_ap: Vec<f64> = included.iter().map(|(ap, _)| *ap).collect();
    let map = per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64;
    let precision_at_k = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            let sum: f64 = included.iter().map(|(_, p)| p[slot].1).sum();
            (k, sum / included.len() as f64)
        })
        .collect();
    let hyper = model.hyperparams();
    Ok(EvalReport {
        map,
        precision_at_k,
        per_query_ap,
        excluded_queries: per_query.len() - included.len(),
        threshold: gt.threshold,
        bits: model.bits(),
        method: model.method(),
        seed: hyper.seed,
        alpha: 0.0,
    })
}

impl EvalReport {
    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method);
        let _ = writeln!(s, "bits: {}", self.bits);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "alpha: {}", self.alpha);
        let _ = writeln!(s, "threshold: {:.6}", self.threshold);
        let _ = writeln!(
            s,
            "queries: {} scored, {} without relevant items",
            self.per_query_ap.len(),
            self.excluded_queries
        );
        let _ = writeln!(s, "MAP: {:.4}", self.map);
        for (k, p) in &self.precision_at_k {
            let _ = writeln!(s, "precision@{k}: {p:.4}");
        }
        s
    }

    /// One `metric=value` per line.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "bits={}", self.bits);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "threshold={}", self.threshold);
        let _ = writeln!(s, "queries={}", self.per_query_ap.len());
        let _ = writeln!(s, "excluded_queries={}", self.excluded_queries);
        let _ = writeln!(s, "map={}", self.map);
        for (k, p) in &self.precision_at_k {
            let _ = writeln!(s, "precision@{k}={p}");
        }
        s
    }

    /// `K,precision` rows with a header.
    pub fn precision_csv(&self) -> String {
        let mut s = String::from("K,precision\n");
        for (k, p) in &self.precision_at_k {
            let _ = writeln!(s, "{k},{p}");
        }
        s
    }

    /// One AP per line.
    pub fn per_query_csv(&self) -> String {
        let mut s = String::new();
        for ap in &self.per_query_ap {
            let _ = writeln!(s, "{ap}");
        }
        s
    }

    /// Writes `<stem>.txt`, `<stem>.kv`, `<stem>.pk.csv` and `<stem>.ap.csv`
    /// into `dir`, returning the paths.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let outputs = [
            (format!("{stem}.txt"), self.to_text()),
            (format!("{stem}.kv"), self.to_key_values()),
            (format!("{stem}.pk.csv"), self.precision_csv()),
            (format!("{stem}.ap.csv"), self.per_query_csv()),
        ];
        outputs
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}
