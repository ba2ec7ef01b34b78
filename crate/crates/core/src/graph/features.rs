use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Precision};

/// Leading bytes of the binary feature container.
///
/// Layout, little-endian: `b"OGNF"`, `u32` version (1), `u64` rows,
/// `u64` cols, `u32` element width in bytes (4 or 8), then the row-major
/// payload.
pub const FEATURE_MAGIC: &[u8; 4] = b"OGNF";
const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4;

/// Replacement for node features when a dataset is run featureless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EmptyFeatures {
    /// Rows of the identity matrix truncated to `width` columns.
    Identity { width: usize },
    /// A single all-ones column; its input weight acts as a learned
    /// constant.
    ConstantColumn,
}

impl EmptyFeatures {
    pub fn materialize(self, n: usize) -> Matrix<f64> {
        match self {
            EmptyFeatures::Identity { width } => {
                let mut m = Matrix::zeros(n, width);
                for i in 0..n.min(width) {
                    m.set(i, i, 1.0);
                }
                m
            }
            EmptyFeatures::ConstantColumn => Matrix::filled(n, 1, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Contract(format!(
                "label {y} of node {v} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn with_empty_features(mut self, mode: EmptyFeatures) -> Self {
        self.features = mode.materialize(self.num_nodes());
        self
    }
}

/// Reads an `n × f` feature matrix from either the binary container or
/// delimiter-separated text (one node per line, comma, tab or space
/// separated).
pub fn load_features(path: impl AsRef<Path>, n: usize, f: usize) -> Result<Matrix<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = if bytes.starts_with(FEATURE_MAGIC) {
        decode_container(path, &bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        parse_feature_text(path, &text, f)?
    };
    if m.shape() != (n, f) {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("expected {n}x{f} features, found {}x{}", m.rows(), m.cols()),
        });
    }
    Ok(m)
}

fn parse_feature_text(path: &Path, text: &str, f: usize) -> Result<Matrix<f64>> {
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = data.len();
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            data.push(tok.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("`{tok}`: {e}"),
            })?);
        }
        if data.len() - before != f {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {f} values, found {}", data.len() - before),
            });
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, f, data))
}

fn decode_container(path: &Path, bytes: &[u8]) -> Result<Matrix<f64>> {
    let bad = |msg: String| Error::Ingest {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated feature header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FEATURE_VERSION {
        return Err(Error::Versioning(format!(
            "{}: feature container version {version}, expected {FEATURE_VERSION}",
            path.display()
        )));
    }
    let rows = u64_at(8) as usize;
    let cols = u64_at(16) as usize;
    let width = u32_at(24) as usize;
    if width != 4 && width != 8 {
        return Err(bad(format!("unsupported element width {width}")));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * width {
        return Err(bad(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            rows * cols * width
        )));
    }
    let data = if width == 8 {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_feature_container(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(FEATURE_MAGIC) {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: 0,
            msg: "missing feature container magic".into(),
        });
    }
    decode_container(path, &bytes)
}

/// Writes `m` in the binary container. With [`Precision::F32`] values are
/// narrowed.
pub fn write_feature_container(
    path: impl AsRef<Path>,
    m: &Matrix<f64>,
    precision: Precision,
) -> Result<()> {
    let path = path.as_ref();
    let width = precision.width();
    let mut buf = Vec::with_capacity(HEADER_LEN + m.data().len() * width);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    for &v in m.data() {
        match precision {
            Precision::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            Precision::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "1,0\n0,1\n").unwrap();
        let m = load_features(&p, 2, 2).unwrap();
        assert_eq!(m, Matrix::identity(2));
    }

    #[test]
    fn text_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "1 0\n0 1 1\n").unwrap();
        assert!(matches!(
            load_features(&p, 2, 2),
            Err(Error::Ingest { line: 2, .. })
        ));
        std::fs::write(&p, "1 0\n").unwrap();
        assert!(matches!(load_features(&p, 2, 2), Err(Error::Ingest { .. })));
    }

    #[test]
    fn container_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let m = Matrix::from_rows(&[
            vec![0.1, -3.5e-300, f64::MAX],
            vec![1.0 / 3.0, 0.0, -0.0],
        ]);
        write_feature_container(&p, &m, Precision::F64).unwrap();
        let back = load_features(&p, 2, 3).unwrap();
        let bits = |m: &Matrix<f64>| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn container_f32_narrowing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let m = Matrix::from_rows(&[vec![0.5, 0.25]]);
        write_feature_container(&p, &m, Precision::F32).unwrap();
        assert_eq!(read_feature_container(&p).unwrap(), m);
    }

    #[test]
    fn empty_feature_modes() {
        let id = EmptyFeatures::Identity { width: 2 }.materialize(3);
        assert_eq!(id.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let c = EmptyFeatures::ConstantColumn.materialize(2);
        assert_eq!(c.to_rows(), vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new("d", Matrix::zeros(2, 1), vec![0], 1).is_err());
        assert!(Dataset::new("d", Matrix::zeros(1, 1), vec![3], 2).is_err());
        assert!(Dataset::new("d", Matrix::zeros(1, 1), vec![1], 2).is_ok());
    }
}
