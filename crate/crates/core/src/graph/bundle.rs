//! On-disk dataset bundles.
//!
//! A bundle is a directory holding:
//!
//! ```text
//! manifest.json   counts, source format, raw record counts, homophily
//! edges.txt       one `u v` line per undirected edge, u < v, sorted
//! features.bin    feature container (see FEATURE_MAGIC)
//! labels.txt      one class index per line, in node order
//! splits/         split_<i>.{train,val,test} index lists (optional)
//! ```
//!
//! Writing the same inputs twice produces byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    edge_homophily, load_split_files, write_feature_container, write_split_files, Dataset,
    EdgeOptions, Graph, RawCounts, SplitFiles, SplitSet, SplitSource,
};
use crate::error::{Error, Result};
use crate::matrix::Precision;

pub const BUNDLE_VERSION: u32 = 1;

/// Layout the raw data came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    Linqs,
    GeomGcn,
    EdgeList,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub source: SourceFormat,
    pub nodes: usize,
    /// Undirected edges after symmetrizing, deduplicating and dropping
    /// self-loops.
    pub edges: usize,
    /// Edge lines in the raw source, before any cleaning.
    pub edge_records: usize,
    pub dangling_records: usize,
    pub features: usize,
    pub classes: usize,
    /// Edge homophily at full precision.
    pub homophily: f64,
    pub splits: usize,
    pub split_source: Option<SplitSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub graph: Graph,
    pub dataset: Dataset,
    pub splits: Option<SplitSet>,
}

impl Bundle {
    pub fn new(
        graph: Graph,
        dataset: Dataset,
        splits: Option<SplitSet>,
        source: SourceFormat,
        raw: RawCounts,
    ) -> Result<Self> {
        if graph.num_nodes() != dataset.num_nodes() {
            return Err(Error::Contract(format!(
                "graph has {} nodes, dataset {}",
                graph.num_nodes(),
                dataset.num_nodes()
            )));
        }
        if let Some(s) = &splits {
            if let Some(bad) = s.splits.iter().find(|s| s.num_nodes() != graph.num_nodes()) {
                return Err(Error::Contract(format!(
                    "split covers {} nodes, graph has {}",
                    bad.num_nodes(),
                    graph.num_nodes()
                )));
            }
        }
        let homophily = edge_homophily(&graph, &dataset.labels, dataset.num_classes)?;
        let manifest = Manifest {
            version: BUNDLE_VERSION,
            name: dataset.name.clone(),
            source,
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            edge_records: raw.edge_records,
            dangling_records: raw.dangling_records,
            features: dataset.num_features(),
            classes: dataset.num_classes,
            homophily,
            splits: splits.as_ref().map_or(0, |s| s.len()),
            split_source: splits.as_ref().map(|s| s.source.clone()),
        };
        Ok(Bundle {
            manifest,
            graph,
            dataset,
            splits,
        })
    }

    /// Writes the bundle into `dir`, creating it if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        let mut edges = String::new();
        for (u, v) in self.graph.edges() {
            edges.push_str(&format!("{u} {v}\n"));
        }
        write(&dir.join("edges.txt"), edges.as_bytes())?;
        write_feature_container(dir.join("features.bin"), &self.dataset.features, Precision::F64)?;
        let labels: String = self
            .dataset
            .labels
            .iter()
            .map(|y| format!("{y}\n"))
            .collect();
        write(&dir.join("labels.txt"), labels.as_bytes())?;
        let split_dir = dir.join("splits");
        if split_dir.exists() {
            std::fs::remove_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
        }
        if let Some(s) = &self.splits {
            create_dir(&split_dir)?;
            write_split_files(&split_dir, s)?;
        }
        let mut json = serde_json::to_string_pretty(&self.manifest)?;
        json.push('\n');
        write(&dir.join("manifest.json"), json.as_bytes())
    }

    /// Reads and cross-checks a bundle written by [`Bundle::write`].
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mpath = dir.join("manifest.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::Versioning(format!(
                "{}: bundle version {}, supported {BUNDLE_VERSION}",
                mpath.display(),
                manifest.version
            )));
        }
        let n = manifest.nodes;
        let graph = Graph::load_edge_list(dir.join("edges.txt"), n, EdgeOptions::default())?;
        let features = super::load_features(dir.join("features.bin"), n, manifest.features)?;
        let labels = read_labels(&dir.join("labels.txt"), n)?;
        let dataset = Dataset::new(manifest.name.clone(), features, labels, manifest.classes)?;
        let splits = if manifest.splits > 0 {
            let files: Vec<SplitFiles> = (0..manifest.splits)
                .map(|i| SplitFiles::in_dir(&dir.join("splits"), &format!("split_{i}")))
                .collect();
            let mut set = load_split_files(&files, n)?;
            if let Some(src) = &manifest.split_source {
                set.source = src.clone();
            }
            Some(set)
        } else {
            None
        };
        let stored = Bundle {
            manifest: manifest.clone(),
            graph,
            dataset,
            splits,
        };
        let check = Bundle::new(
            stored.graph.clone(),
            stored.dataset.clone(),
            stored.splits.clone(),
            manifest.source,
            RawCounts {
                edge_records: manifest.edge_records,
                dangling_records: manifest.dangling_records,
            },
        )?;
        if check.manifest != manifest {
            return Err(Error::Ingest {
                path: mpath,
                line: 0,
                msg: format!(
                    "manifest disagrees with bundle contents (edges {} vs {}, homophily {} vs {})",
                    manifest.edges,
                    check.manifest.edges,
                    manifest.homophily,
                    check.manifest.homophily
                ),
            });
        }
        Ok(stored)
    }
}

/// Reads one class index per line.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        labels.push(line.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("`{line}`: {e}"),
        })?);
    }
    if labels.len() != n {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} labels for {n} nodes", labels.len()),
        });
    }
    Ok(labels)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
