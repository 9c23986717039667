//! Dense data matrices, their on-disk formats, centering and the
//! partial-correspondence train/test split.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

/// Magic bytes shared by every binary file this crate writes.
pub const MAGIC: [u8; 4] = *b"THPI";
/// Version byte of the `thpi-bin` matrix format.
pub const MATRIX_VERSION: u8 = 0x01;
const MATRIX_HEADER_LEN: usize = 13;

/// A dense real matrix with one instance per row. All entries are finite
/// and both dimensions are at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        ensure!(
            values.nrows() >= 1 && values.ncols() >= 1,
            Dimension,
            "data matrix must be non-empty, got {}x{}",
            values.nrows(),
            values.ncols()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            InvalidArgument,
            "data matrix contains non-finite values"
        );
        Ok(DataMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), Dimension, "no rows");
        let cols = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            Dimension,
            "ragged rows"
        );
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        ensure!(!indices.is_empty(), Dimension, "row selection is empty");
        Self::new(self.0.select_rows(indices))
    }

    /// Vertically stacks `self` on top of `other`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<Self> {
        ensure!(
            self.cols() == other.cols(),
            Dimension,
            "cannot stack {} columns onto {}",
            other.cols(),
            self.cols()
        );
        let (a, b) = (self.rows(), other.rows());
        Self::new(DMatrix::from_fn(a + b, self.cols(), |i, j| {
            if i < a {
                self.0[(i, j)]
            } else {
                other.0[(i - a, j)]
            }
        }))
    }
}

/// Column means removed by [`zero_center`].
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringInfo {
    pub mean: DVector<f64>,
}

impl CenteringInfo {
    pub fn zeros(dim: usize) -> Self {
        CenteringInfo {
            mean: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Subtracts the stored mean from every row of `x`. Held-out data is
    /// always centered with the training mean.
    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        ensure!(
            x.cols() == self.dim(),
            Dimension,
            "centering expects {} columns, got {}",
            self.dim(),
            x.cols()
        );
        let mean_row: RowDVector<f64> = self.mean.transpose();
        let mut out = x.0.clone();
        for mut row in out.row_iter_mut() {
            row -= &mean_row;
        }
        DataMatrix::new(out)
    }
}

/// Removes the column means of `x`.
pub fn zero_center(x: &DataMatrix) -> Result<(DataMatrix, CenteringInfo)> {
    let info = CenteringInfo {
        mean: x.0.row_mean().transpose(),
    };
    let centered = info.apply(x)?;
    Ok((centered, info))
}

/// Supported matrix file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    ThpiBin,
}

impl MatrixFormat {
    /// `.csv` maps to CSV, anything else to `thpi-bin`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::ThpiBin,
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "thpi-bin" | "bin" => Ok(MatrixFormat::ThpiBin),
            other => Err(Error::InvalidArgument(format!(
                "unknown matrix format `{other}` (expected csv or thpi-bin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// Skip the first line.
    pub header: bool,
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DataMatrix> {
    match format {
        MatrixFormat::Csv => load_csv(path, CsvOptions::default()),
        MatrixFormat::ThpiBin => load_bin(path),
    }
}

pub fn save_matrix(x: &DataMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => save_csv(x, path),
        MatrixFormat::ThpiBin => save_bin(x, path),
    }
}

pub fn load_csv(path: &Path, opts: CsvOptions) -> Result<DataMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file), path, opts)
}

pub(crate) fn parse_csv<R: BufRead>(reader: R, path: &Path, opts: CsvOptions) -> Result<DataMatrix> {
    let mut values = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if opts.header && lineno == 0 {
            continue;
        }
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (field_no, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("line {}, field {}", lineno + 1, field_no + 1),
                    format!("non-numeric cell `{field}`"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("line {}, field {}", lineno + 1, field_no + 1),
                    "non-finite value",
                ));
            }
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::parse(
                    path,
                    format!("line {}", lineno + 1),
                    format!("ragged row: expected {c} fields, found {count}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(path, "line 1", "no data rows"))?;
    DataMatrix::new(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_csv(x: &DataMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        for row in x.0.row_iter() {
            let mut first = true;
            for v in row.iter() {
                if !first {
                    w.write_all(b",")?;
                }
                // Debug formatting is the shortest representation that
                // parses back to the same bits.
                write!(w, "{v:?}")?;
                first = false;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn encode_bin(x: &DataMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(x.rows())
        .map_err(|_| Error::Dimension(format!("{} rows exceed u32", x.rows())))?;
    let cols = u32::try_from(x.cols())
        .map_err(|_| Error::Dimension(format!("{} columns exceed u32", x.cols())))?;
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 8 * x.rows() * x.cols());
    out.extend_from_slice(&MAGIC);
    out.push(MATRIX_VERSION);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for row in x.0.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_bin(bytes: &[u8], path: &Path) -> Result<DataMatrix> {
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(Error::parse(
            path,
            format!("offset {}", bytes.len()),
            "truncated header",
        ));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::parse(path, "offset 0", "bad magic (expected THPI)"));
    }
    if bytes[4] != MATRIX_VERSION {
        return Err(Error::Version {
            path: path.into(),
            message: format!("matrix version {:#04x}, expected {MATRIX_VERSION:#04x}", bytes[4]),
        });
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(MATRIX_HEADER_LEN))
        .ok_or_else(|| Error::parse(path, "offset 5", "dimension overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            format!("offset {}", bytes.len().min(expected)),
            format!("payload length {} does not match {rows}x{cols}", bytes.len() - MATRIX_HEADER_LEN),
        ));
    }
    let values: Vec<f64> = bytes[MATRIX_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::parse(
            path,
            format!("offset {}", MATRIX_HEADER_LEN + 8 * pos),
            "non-finite value",
        ));
    }
    DataMatrix::new(DMatrix::from_row_slice(rows, cols, &values))
        .map_err(|e| Error::parse(path, "offset 5", e.to_string()))
}

pub fn load_bin(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bin(&bytes, path)
}

pub fn save_bin(x: &DataMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_bin(x)?).map_err(|e| Error::io(path, e))
}

/// Partial-correspondence split of a parallel two-view corpus.
///
/// Test rows are removed first; correspondences are then drawn from the
/// remainder and the source side of every other remaining row becomes
/// unpaired source data. Test queries exist in the target view only.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub target_train: DataMatrix,
    pub source_corr: DataMatrix,
    pub source_extra: Option<DataMatrix>,
    /// Target side of the unpaired training rows. Never used for training;
    /// available as an extra retrieval database.
    pub target_extra: Option<DataMatrix>,
    pub target_test: Option<DataMatrix>,
    pub alpha: f64,
    pub seed: u64,
    /// Origin indices into the parallel corpus, per group.
    pub corr_indices: Vec<usize>,
    pub extra_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitBundle {
    pub fn n_corr(&self) -> usize {
        self.corr_indices.len()
    }

    pub fn n_extra(&self) -> usize {
        self.extra_indices.len()
    }

    /// All source training rows: correspondences first, then the extras.
    pub fn source_all(&self) -> Result<DataMatrix> {
        match &self.source_extra {
            Some(extra) => self.source_corr.vstack(extra),
            None => Ok(self.source_corr.clone()),
        }
    }
}

pub fn make_split(
    target_all: &DataMatrix,
    source_all: &DataMatrix,
    alpha: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitBundle> {
    ensure!(
        target_all.rows() == source_all.rows(),
        Dimension,
        "target has {} rows but source has {}",
        target_all.rows(),
        source_all.rows()
    );
    ensure!(
        alpha > 0.0 && alpha <= 1.0,
        InvalidArgument,
        "alpha must lie in (0, 1], got {alpha}"
    );
    ensure!(
        (0.0..1.0).contains(&test_fraction),
        InvalidArgument,
        "test fraction must lie in [0, 1), got {test_fraction}"
    );
    let total = target_all.rows();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_test = (test_fraction * total as f64).round() as usize;
    let remaining = total - n_test;
    let n_corr = (alpha * remaining as f64).round() as usize;
    ensure!(
        n_corr > 0,
        InvalidArgument,
        "alpha {alpha} leaves no correspondences among {remaining} training rows"
    );

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let test_indices = sorted(&order[..n_test]);
    let corr_indices = sorted(&order[n_test..n_test + n_corr]);
    let extra_indices = sorted(&order[n_test + n_corr..]);

    Ok(SplitBundle {
        target_train: target_all.select_rows(&corr_indices)?,
        source_corr: source_all.select_rows(&corr_indices)?,
        source_extra: if extra_indices.is_empty() {
            None
        } else {
            Some(source_all.select_rows(&extra_indices)?)
        },
        target_extra: if extra_indices.is_empty() {
            None
        } else {
            Some(target_all.select_rows(&extra_indices)?)
        },
        target_test: if test_indices.is_empty() {
            None
        } else {
            Some(target_all.select_rows(&test_indices)?)
        },
        alpha,
        seed,
        corr_indices,
        extra_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DataMatrix {
        DataMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-5.0..5.0))).unwrap()
    }

    #[test]
    fn parses_simple_csv() {
        let x = parse_csv("1.0,2.0\n3.0,4.0".as_bytes(), Path::new("t.csv"), CsvOptions::default())
            .unwrap();
        assert_eq!(x, m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    }

    #[test]
    fn csv_header_is_skipped_only_when_asked() {
        let text = "a,b\n1,2\n";
        let opts = CsvOptions { header: true };
        let x = parse_csv(text.as_bytes(), Path::new("t.csv"), opts).unwrap();
        assert_eq!(x, m(&[&[1.0, 2.0]]));
        let err = parse_csv(text.as_bytes(), Path::new("t.csv"), CsvOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 1, field 1"), "{err}");
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = parse_csv("1,2\n3\n".as_bytes(), Path::new("t.csv"), CsvOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("ragged"), "{err}");
        let err = parse_csv("1,x\n".as_bytes(), Path::new("t.csv"), CsvOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("field 2"), "{err}");
    }

    #[test]
    fn decodes_zero_bin() {
        let mut bytes = b"THPI\x01".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 24]);
        let x = decode_bin(&bytes, Path::new("z.bin")).unwrap();
        assert_eq!(x, m(&[&[0.0, 0.0, 0.0]]));
    }

    #[test]
    fn bin_rejects_truncation_and_bad_magic() {
        let x = random_matrix(3, 2, 1);
        let bytes = encode_bin(&x).unwrap();
        assert!(matches!(
            decode_bin(&bytes[..bytes.len() - 1], Path::new("t")),
            Err(Error::Parse { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_bin(&bad, Path::new("t")).is_err());
        let mut v2 = bytes;
        v2[4] = 9;
        assert!(matches!(decode_bin(&v2, Path::new("t")), Err(Error::Version { .. })));
    }

    #[test]
    fn file_round_trips_are_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut x = random_matrix(7, 5, 3).into_inner();
        x[(0, 0)] = 1e-300;
        x[(1, 1)] = -0.1 + 0.2;
        x[(2, 2)] = f64::MAX;
        let x = DataMatrix::new(x).unwrap();
        for format in [MatrixFormat::Csv, MatrixFormat::ThpiBin] {
            let p1 = dir.path().join("a");
            let p2 = dir.path().join("b");
            save_matrix(&x, &p1, format).unwrap();
            let y = load_matrix(&p1, format).unwrap();
            assert_eq!(
                x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                y.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            save_matrix(&y, &p2, format).unwrap();
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn centering_symmetric_pair() {
        let (c, info) = zero_center(&m(&[&[1.0, 1.0], &[3.0, 3.0]])).unwrap();
        assert_eq!(c, m(&[&[-1.0, -1.0], &[1.0, 1.0]]));
        assert_eq!(info.mean.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn centering_is_idempotent() {
        let x = random_matrix(50, 4, 11);
        let (c, _) = zero_center(&x).unwrap();
        for col in c.values().column_iter() {
            assert!(col.sum().abs() < 1e-9);
        }
        let (c2, info2) = zero_center(&c).unwrap();
        assert!(info2.mean.amax() < 1e-12);
        assert!((c2.values() - c.values()).amax() < 1e-12);
    }

    #[test]
    fn split_arithmetic() {
        let t = random_matrix(10, 3, 1);
        let s = random_matrix(10, 2, 2);
        let b = make_split(&t, &s, 0.5, 0.0, 7).unwrap();
        assert_eq!(b.n_corr(), 5);
        assert_eq!(b.n_extra(), 5);
        assert!(b.target_test.is_none());
        for (row, &origin) in b.corr_indices.iter().enumerate() {
            assert_eq!(b.target_train.values().row(row), t.values().row(origin));
            assert_eq!(b.source_corr.values().row(row), s.values().row(origin));
        }
        let full = make_split(&t, &s, 1.0, 0.0, 7).unwrap();
        assert!(full.source_extra.is_none());
        assert_eq!(full.n_corr(), 10);
    }

    #[test]
    fn split_rejects_bad_parameters() {
        let t = random_matrix(10, 3, 1);
        let s = random_matrix(10, 2, 2);
        assert!(make_split(&t, &s, 0.0, 0.1, 1).is_err());
        assert!(make_split(&t, &s, 1.5, 0.1, 1).is_err());
        assert!(make_split(&t, &s, 0.5, 1.0, 1).is_err());
        assert!(make_split(&t, &s, 0.01, 0.0, 1).is_err());
        assert!(make_split(&t, &random_matrix(9, 2, 2), 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let t = random_matrix(40, 3, 1);
        let s = random_matrix(40, 2, 2);
        let a = make_split(&t, &s, 0.3, 0.1, 5).unwrap();
        assert_eq!(a, make_split(&t, &s, 0.3, 0.1, 5).unwrap());
        let differing = (0..20u64)
            .filter(|k| make_split(&t, &s, 0.3, 0.1, 100 + k).unwrap().corr_indices != a.corr_indices)
            .count();
        assert!(differing >= 19, "only {differing}/20 seeds changed the selection");
    }

    proptest! {
        #[test]
        fn split_partitions_origin_indices(
            total in 2usize..60,
            alpha in 0.05f64..=1.0,
            test_fraction in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let t = random_matrix(total, 2, 1);
            let s = random_matrix(total, 3, 2);
            if let Ok(b) = make_split(&t, &s, alpha, test_fraction, seed) {
                let mut all: Vec<usize> = b.corr_indices.iter()
                    .chain(&b.extra_indices)
                    .chain(&b.test_indices)
                    .copied()
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
                let n = b.n_corr() as f64;
                let train = (b.n_corr() + b.n_extra()) as f64;
                prop_assert!((alpha - n / train).abs() <= 0.5 / train + 1e-12);
                prop_assert_eq!(b.target_train.rows(), b.source_corr.rows());
            }
        }
    }
}
