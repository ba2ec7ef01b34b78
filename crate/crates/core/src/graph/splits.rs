use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Split {
    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mask = |idx: &[usize], role: &str| -> Result<Vec<bool>> {
            let mut m = vec![false; n];
            for &i in idx {
                if i >= n {
                    return Err(Error::Contract(format!(
                        "{role} index {i} out of range for {n} nodes"
                    )));
                }
                m[i] = true;
            }
            Ok(m)
        };
        let s = Split {
            train: mask(train, "train")?,
            val: mask(val, "val")?,
            test: mask(test, "test")?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_nodes(&self) -> usize {
        self.train.len()
    }

    /// Pairwise disjoint, equal length, each role non-empty.
    pub fn validate(&self) -> Result<()> {
        let n = self.train.len();
        if self.val.len() != n || self.test.len() != n {
            return Err(Error::Contract("split masks differ in length".into()));
        }
        for (name, m) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if !m.iter().any(|&b| b) {
                return Err(Error::Contract(format!("{name} mask is empty")));
            }
        }
        for i in 0..n {
            let hits = [self.train[i], self.val[i], self.test[i]];
            if hits.iter().filter(|&&b| b).count() > 1 {
                let roles: Vec<&str> = ["train", "val", "test"]
                    .iter()
                    .zip(hits)
                    .filter(|(_, b)| *b)
                    .map(|(r, _)| *r)
                    .collect();
                return Err(Error::Contract(format!(
                    "node {i} appears in both {} and {}",
                    roles[0], roles[1]
                )));
            }
        }
        Ok(())
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }

    /// Masks relabeled so old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let p = |m: &[bool]| {
            let mut out = vec![false; m.len()];
            for (v, &b) in m.iter().enumerate() {
                out[perm[v]] = b;
            }
            out
        };
        Split {
            train: p(&self.train),
            val: p(&self.val),
            test: p(&self.test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.48,
            val: 0.32,
            test: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SplitSource {
    Files { paths: Vec<PathBuf> },
    Generated { seed: u64, ratios: SplitRatios },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub splits: Vec<Split>,
    pub source: SplitSource,
    /// Non-fatal findings, such as a class missing from a train mask.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// `count` seeded random partitions of `0..n` by `ratios`.
///
/// Split `i` shuffles with ChaCha8 seeded by `seed` on stream `i`, so any
/// single split can be regenerated on its own.
pub fn generate_splits(
    n: usize,
    labels: &[usize],
    seed: u64,
    ratios: SplitRatios,
    count: usize,
) -> Result<SplitSet> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) {
        return Err(Error::Config(format!("split ratios must be positive: {ratios:?}")));
    }
    let total = train + val + test;
    if total > 1.0 + 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {total} > 1")));
    }
    if labels.len() != n {
        return Err(Error::Contract(format!("{} labels for {n} nodes", labels.len())));
    }
    let n_train = (train * n as f64).round() as usize;
    let n_val = (val * n as f64).round() as usize;
    let rest = n.saturating_sub(n_train + n_val);
    let n_test = if (total - 1.0).abs() < 1e-9 {
        rest
    } else {
        ((test * n as f64).round() as usize).min(rest)
    };
    if n_train == 0 || n_val == 0 || n_test == 0 || n_train + n_val > n {
        return Err(Error::Config(format!(
            "ratios {ratios:?} leave an empty role for {n} nodes"
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut splits = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let s = Split::from_indices(
            n,
            &order[..n_train],
            &order[n_train..n_train + n_val],
            &order[n_train + n_val..n_train + n_val + n_test],
        )?;
        let mut seen = vec![false; num_classes];
        for v in Split::indices(&s.train) {
            seen[labels[v]] = true;
        }
        for (c, _) in seen.iter().enumerate().filter(|(_, &b)| !b) {
            warnings.push(format!("split {i}: class {c} absent from train mask"));
        }
        splits.push(s);
    }
    Ok(SplitSet {
        splits,
        source: SplitSource::Generated { seed, ratios },
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitFileFormat {
    /// Node indices separated by whitespace, commas or newlines.
    Indices,
    /// One 0/1 flag per node, in node order.
    Mask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFiles {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub format: SplitFileFormat,
}

impl SplitFiles {
    /// `<dir>/<stem>.{train,val,test}`, treated as masks when `stem` ends
    /// in `.mask` and as index lists otherwise.
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        let format = if stem.ends_with(".mask") {
            SplitFileFormat::Mask
        } else {
            SplitFileFormat::Indices
        };
        SplitFiles {
            train: dir.join(format!("{stem}.train")),
            val: dir.join(format!("{stem}.val")),
            test: dir.join(format!("{stem}.test")),
            format,
        }
    }
}

fn read_role(path: &Path, n: usize, format: SplitFileFormat) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mask = vec![false; n];
    let mut pos = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v: usize = tok.parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("`{tok}`: {e}"),
            })?;
            match format {
                SplitFileFormat::Indices => {
                    if v >= n {
                        return Err(Error::Ingest {
                            path: path.to_path_buf(),
                            line: i + 1,
                            msg: format!("node index {v} out of range for {n} nodes"),
                        });
                    }
                    mask[v] = true;
                }
                SplitFileFormat::Mask => {
                    if v > 1 || pos >= n {
                        return Err(Error::Ingest {
                            path: path.to_path_buf(),
                            line: i + 1,
                            msg: format!("mask entry {pos} is `{tok}`; expected {n} flags of 0/1"),
                        });
                    }
                    mask[pos] = v == 1;
                    pos += 1;
                }
            }
        }
    }
    if format == SplitFileFormat::Mask && pos != n {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("mask has {pos} entries, expected {n}"),
        });
    }
    Ok(mask)
}

pub fn load_split_files(files: &[SplitFiles], n: usize) -> Result<SplitSet> {
    let mut splits = Vec::with_capacity(files.len());
    let mut paths = Vec::new();
    for f in files {
        let s = Split {
            train: read_role(&f.train, n, f.format)?,
            val: read_role(&f.val, n, f.format)?,
            test: read_role(&f.test, n, f.format)?,
        };
        s.validate().map_err(|e| Error::Ingest {
            path: f.train.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        paths.extend([f.train.clone(), f.val.clone(), f.test.clone()]);
        splits.push(s);
    }
    Ok(SplitSet {
        splits,
        source: SplitSource::Files { paths },
        warnings: Vec::new(),
    })
}

/// Writes each split as `split_<i>.{train,val,test}` index lists and
/// returns their descriptors.
pub fn write_split_files(dir: &Path, set: &SplitSet) -> Result<Vec<SplitFiles>> {
    let mut out = Vec::new();
    for (i, s) in set.splits.iter().enumerate() {
        let f = SplitFiles::in_dir(dir, &format!("split_{i}"));
        for (path, mask) in [(&f.train, &s.train), (&f.val, &s.val), (&f.test, &s.test)] {
            let body: String = Split::indices(mask)
                .iter()
                .map(|v| format!("{v}\n"))
                .collect();
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_disjointness() {
        let labels = vec![0; 10];
        let ratios = SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        };
        let set = generate_splits(10, &labels, 3, ratios, 1).unwrap();
        assert_eq!(set.splits[0].counts(), (6, 2, 2));
        set.splits[0].validate().unwrap();
    }

    #[test]
    fn deterministic_for_seed() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let a = generate_splits(50, &labels, 11, SplitRatios::default(), 4).unwrap();
        let b = generate_splits(50, &labels, 11, SplitRatios::default(), 4).unwrap();
        assert_eq!(a, b);
        let c = generate_splits(50, &labels, 12, SplitRatios::default(), 4).unwrap();
        assert_ne!(a.splits, c.splits);
    }

    #[test]
    fn ten_splits_pairwise_different() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let set = generate_splits(100, &labels, 0, SplitRatios::default(), 10).unwrap();
        assert_eq!(set.len(), 10);
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(set.splits[i], set.splits[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn missing_class_is_a_warning() {
        // 1 train node cannot cover two classes
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let ratios = SplitRatios {
            train: 0.1,
            val: 0.1,
            test: 0.1,
        };
        let set = generate_splits(10, &labels, 5, ratios, 1).unwrap();
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn ratio_errors() {
        let labels = vec![0; 10];
        let bad = SplitRatios {
            train: 0.7,
            val: 0.3,
            test: 0.2,
        };
        assert!(generate_splits(10, &labels, 0, bad, 1).is_err());
        let zero = SplitRatios {
            train: 0.0,
            val: 0.5,
            test: 0.5,
        };
        assert!(generate_splits(10, &labels, 0, zero, 1).is_err());
    }

    #[test]
    fn files_round_trip_and_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(d.join("s.train"), "0\n1\n").unwrap();
        std::fs::write(d.join("s.val"), "2\n").unwrap();
        std::fs::write(d.join("s.test"), "3\n").unwrap();
        let set = load_split_files(&[SplitFiles::in_dir(d, "s")], 4).unwrap();
        assert_eq!(set.splits[0].counts(), (2, 1, 1));

        std::fs::write(d.join("s.test"), "3 1\n").unwrap();
        let err = load_split_files(&[SplitFiles::in_dir(d, "s")], 4).unwrap_err();
        assert!(err.to_string().contains("node 1"), "{err}");
    }

    #[test]
    fn mask_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(d.join("m.mask.train"), "1 1 0 0\n").unwrap();
        std::fs::write(d.join("m.mask.val"), "0\n0\n1\n0\n").unwrap();
        std::fs::write(d.join("m.mask.test"), "0,0,0,1").unwrap();
        let set = load_split_files(&[SplitFiles::in_dir(d, "m.mask")], 4).unwrap();
        assert_eq!(set.splits[0].train, vec![true, true, false, false]);
        std::fs::write(d.join("m.mask.test"), "0,0,1").unwrap();
        assert!(load_split_files(&[SplitFiles::in_dir(d, "m.mask")], 4).is_err());
    }

    #[test]
    fn write_then_load() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let set = generate_splits(20, &labels, 9, SplitRatios::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_split_files(dir.path(), &set).unwrap();
        let back = load_split_files(&files, 20).unwrap();
        assert_eq!(back.splits, set.splits);
    }
}
