//! Trained hash models and their binary container.
//!
//! Layout: magic `THPI`, version byte [`MODEL_VERSION`], then records of
//! `tag: u8`, `len: u32 LE`, `payload[len]`, ending with [`TAG_END`].
//! Reals are IEEE-754 little-endian; matrices are `rows: u32`, `cols: u32`
//! followed by row-major values.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::codes::{sgn, BinaryCodeMatrix};
use crate::data::{CenteringInfo, DataMatrix, MAGIC};
use crate::error::{ensure, Error, Result};
use crate::linalg::{orthonormality_error, ORTHONORMAL_TOL};
use crate::preprocess::{project, LinearProjection, ProjectionKind};

/// Version byte of the model container. Distinct from the matrix format's.
pub const MODEL_VERSION: u8 = 0x11;

const TAG_METHOD: u8 = 1;
const TAG_BITS: u8 = 2;
const TAG_MEAN: u8 = 3;
const TAG_PREPROCESSING: u8 = 4;
const TAG_ROTATION: u8 = 5;
const TAG_HYPERPARAMS: u8 = 6;
const TAG_END: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Itq,
    ItqPlus,
    LapItqPlus,
    Lsh,
    CcaItq,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Itq,
        Method::ItqPlus,
        Method::LapItqPlus,
        Method::Lsh,
        Method::CcaItq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Itq => "itq",
            Method::ItqPlus => "itq+",
            Method::LapItqPlus => "lapitq+",
            Method::Lsh => "lsh",
            Method::CcaItq => "cca-itq",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method `{s}` (expected itq, itq+, lapitq+, lsh or cca-itq)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub k_graph: u32,
    pub iters: u32,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            k_graph: 0,
            iters: 0,
            seed: 0,
        }
    }
}

/// Everything needed to encode new points:
/// `sgn(((x - mean) · preprocessing) · rotation)`.
///
/// The rotation has orthonormal columns for every method except LSH, whose
/// Gaussian projection is stored in the same slot.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    method: Method,
    centering: CenteringInfo,
    preprocessing: LinearProjection,
    rotation: DMatrix<f64>,
    hyperparams: Hyperparams,
}

impl HashModel {
    pub fn new(
        method: Method,
        centering: CenteringInfo,
        preprocessing: LinearProjection,
        rotation: DMatrix<f64>,
        hyperparams: Hyperparams,
    ) -> Result<Self> {
        ensure!(
            centering.dim() == preprocessing.d_in(),
            Dimension,
            "mean has length {} but preprocessing expects {}",
            centering.dim(),
            preprocessing.d_in()
        );
        ensure!(
            preprocessing.d_out() == rotation.nrows(),
            Dimension,
            "preprocessing outputs {} dims but rotation expects {}",
            preprocessing.d_out(),
            rotation.nrows()
        );
        ensure!(rotation.ncols() >= 1, Dimension, "model needs at least one bit");
        ensure!(
            rotation.iter().all(|v| v.is_finite()),
            Numerical,
            "rotation contains non-finite values"
        );
        if method != Method::Lsh {
            ensure!(
                rotation.ncols() <= rotation.nrows(),
                Dimension,
                "rotation has more bits ({}) than input dims ({})",
                rotation.ncols(),
                rotation.nrows()
            );
            let err = orthonormality_error(&rotation);
            ensure!(
                err <= ORTHONORMAL_TOL,
                Numerical,
                "rotation is not orthonormal ({err:e})"
            );
        }
        Ok(HashModel {
            method,
            centering,
            preprocessing,
            rotation,
            hyperparams,
        })
    }

    /// Replaces the centering and preprocessing stages, keeping the rotation.
    pub fn with_front_end(self, centering: CenteringInfo, preprocessing: LinearProjection) -> Result<Self> {
        HashModel::new(self.method, centering, preprocessing, self.rotation, self.hyperparams)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn centering(&self) -> &CenteringInfo {
        &self.centering
    }

    pub fn preprocessing(&self) -> &LinearProjection {
        &self.preprocessing
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn bits(&self) -> usize {
        self.rotation.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.centering.dim()
    }

    /// Real-valued projections `((X - mean) · preprocessing) · rotation`.
    pub fn embed(&self, x: &DataMatrix) -> Result<DMatrix<f64>> {
        ensure!(
            x.cols() == self.input_dim(),
            Dimension,
            "model expects {} input columns, got {}",
            self.input_dim(),
            x.cols()
        );
        let centered = self.centering.apply(x)?;
        let reduced = project(&centered, &self.preprocessing)?;
        Ok(reduced.values() * &self.rotation)
    }

    pub fn encode(&self, x: &DataMatrix) -> Result<BinaryCodeMatrix> {
        Ok(sgn(&self.embed(x)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(MODEL_VERSION);
        write_record(&mut out, TAG_METHOD, self.method.as_str().as_bytes());
        write_record(&mut out, TAG_BITS, &(self.bits() as u32).to_le_bytes());
        let mean = self.centering.mean.as_slice();
        let mut buf = Vec::new();
        put_u32(&mut buf, mean.len())?;
        for v in mean {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_record(&mut out, TAG_MEAN, &buf);
        let mut buf = vec![self.preprocessing.kind().tag()];
        put_matrix(&mut buf, self.preprocessing.matrix())?;
        write_record(&mut out, TAG_PREPROCESSING, &buf);
        let mut buf = Vec::new();
        put_matrix(&mut buf, &self.rotation)?;
        write_record(&mut out, TAG_ROTATION, &buf);
        let h = &self.hyperparams;
        let mut buf = Vec::new();
        buf.extend_from_slice(&h.lambda1.to_le_bytes());
        buf.extend_from_slice(&h.lambda2.to_le_bytes());
        buf.extend_from_slice(&h.k_graph.to_le_bytes());
        buf.extend_from_slice(&h.iters.to_le_bytes());
        buf.extend_from_slice(&h.seed.to_le_bytes());
        write_record(&mut out, TAG_HYPERPARAMS, &buf);
        write_record(&mut out, TAG_END, &[]);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(Error::Version {
                path: path.into(),
                message: "bad magic (expected THPI)".into(),
            });
        }
        let version = r.take(1)?[0];
        if version != MODEL_VERSION {
            return Err(Error::Version {
                path: path.into(),
                message: format!("model version {version:#04x}, expected {MODEL_VERSION:#04x}"),
            });
        }
        let mut method = None;
        let mut bits = None;
        let mut mean = None;
        let mut preprocessing = None;
        let mut rotation = None;
        let mut hyper = None;
        loop {
            let tag = r.take(1)?[0];
            let len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
            let start = r.pos;
            let payload = r.take(len)?;
            let mut p = Reader {
                bytes: payload,
                pos: 0,
                path,
            };
            match tag {
                TAG_END => break,
                TAG_METHOD => {
                    let s = std::str::from_utf8(payload)
                        .map_err(|_| Error::parse(path, format!("offset {start}"), "method is not UTF-8"))?;
                    method = Some(s.parse::<Method>()?);
                }
                TAG_BITS => bits = Some(p.u32()? as usize),
                TAG_MEAN => {
                    let d = p.u32()? as usize;
                    let v = (0..d).map(|_| p.f64()).collect::<Result<Vec<_>>>()?;
                    mean = Some(DVector::from_vec(v));
                }
                TAG_PREPROCESSING => {
                    let kind_tag = p.take(1)?[0];
                    let kind = ProjectionKind::from_tag(kind_tag).ok_or_else(|| {
                        Error::parse(path, format!("offset {start}"), format!("unknown projection kind {kind_tag}"))
                    })?;
                    let m = p.matrix()?;
                    preprocessing = Some(if kind == ProjectionKind::Identity {
                        ensure!(
                            m == DMatrix::identity(m.nrows(), m.ncols()),
                            InvalidArgument,
                            "identity projection record is not an identity matrix"
                        );
                        LinearProjection::identity(m.nrows())
                    } else {
                        LinearProjection::new(m, kind)?
                    });
                }
                TAG_ROTATION => rotation = Some(p.matrix()?),
                TAG_HYPERPARAMS => {
                    hyper = Some(Hyperparams {
                        lambda1: p.f64()?,
                        lambda2: p.f64()?,
                        k_graph: p.u32()?,
                        iters: p.u32()?,
                        seed: p.u64()?,
                    })
                }
                // Unknown records are skipped so newer writers stay readable.
                _ => {}
            }
        }
        let missing = |what: &str| Error::parse(path, format!("offset {}", r.pos), format!("missing {what} record"));
        let model = HashModel::new(
            method.ok_or_else(|| missing("method"))?,
            CenteringInfo {
                mean: mean.ok_or_else(|| missing("mean"))?,
            },
            preprocessing.ok_or_else(|| missing("preprocessing"))?,
            rotation.ok_or_else(|| missing("rotation"))?,
            hyper.ok_or_else(|| missing("hyperparameter"))?,
        )?;
        let bits = bits.ok_or_else(|| missing("code length"))?;
        ensure!(
            bits == model.bits(),
            Dimension,
            "code length record {bits} disagrees with rotation ({})",
            model.bits()
        );
        Ok(model)
    }
}

fn write_record(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Dimension(format!("{v} exceeds u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) -> Result<()> {
    put_u32(buf, m.nrows())?;
    put_u32(buf, m.ncols())?;
    for row in m.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(
                self.path,
                format!("offset {}", self.pos),
                "truncated file",
            )),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::parse(self.path, format!("offset {}", self.pos), "truncated matrix"))?;
        let values = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

pub fn save_model(model: &HashModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<HashModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    HashModel::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;

    fn sample_model() -> HashModel {
        HashModel::new(
            Method::LapItqPlus,
            CenteringInfo {
                mean: DVector::from_vec(vec![0.25, -1.5, 3.0]),
            },
            LinearProjection::identity(3),
            random_orthonormal(3, 2, 7).unwrap().into_inner(),
            Hyperparams {
                lambda1: 0.01,
                lambda2: 0.005,
                k_graph: 5,
                iters: 150,
                seed: u64::MAX - 3,
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_model_round_trip() {
        let m = HashModel::new(
            Method::Itq,
            CenteringInfo::zeros(2),
            LinearProjection::identity(2),
            DMatrix::identity(2, 2),
            Hyperparams::default(),
        )
        .unwrap();
        let back = HashModel::from_bytes(&m.to_bytes().unwrap(), Path::new("m")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_model();
        let bytes = m.to_bytes().unwrap();
        let back = HashModel::from_bytes(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_wrong_magic_version_and_truncation() {
        let bytes = sample_model().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'Z';
        assert!(matches!(HashModel::from_bytes(&bad, Path::new("m")), Err(Error::Version { .. })));
        let mut old = bytes.clone();
        old[4] = 0x01;
        assert!(matches!(HashModel::from_bytes(&old, Path::new("m")), Err(Error::Version { .. })));
        for cut in [5, 20, bytes.len() - 1] {
            assert!(matches!(
                HashModel::from_bytes(&bytes[..cut], Path::new("m")),
                Err(Error::Parse { .. })
            ));
        }
    }

    #[test]
    fn validates_invariants() {
        let bad_rotation = HashModel::new(
            Method::Itq,
            CenteringInfo::zeros(2),
            LinearProjection::identity(2),
            DMatrix::from_element(2, 2, 1.0),
            Hyperparams::default(),
        );
        assert!(bad_rotation.is_err());
        let lsh = HashModel::new(
            Method::Lsh,
            CenteringInfo::zeros(2),
            LinearProjection::identity(2),
            DMatrix::from_element(2, 4, 1.0),
            Hyperparams::default(),
        );
        assert!(lsh.is_ok());
        let mismatch = HashModel::new(
            Method::Itq,
            CenteringInfo::zeros(3),
            LinearProjection::identity(2),
            DMatrix::identity(2, 2),
            Hyperparams::default(),
        );
        assert!(matches!(mismatch, Err(Error::Dimension(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("pq".parse::<Method>().is_err());
    }
}
