//! Graph topology, node data, and split management.
//!
//! A [`Graph`] is undirected, unweighted and free of self-loops, stored in
//! compressed sparse row form with each neighbor list sorted ascending.

mod bundle;
mod features;
mod formats;
mod splits;
pub mod synthetic;

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Arc;

pub use bundle::{read_labels, Bundle, Manifest, SourceFormat, BUNDLE_VERSION};
pub use features::{
    load_features, read_feature_container, write_feature_container, Dataset, EmptyFeatures,
    FEATURE_MAGIC,
};
pub use formats::{load_geom_gcn, load_linqs, load_npz_split, RawCounts};
pub use splits::{
    generate_splits, load_split_files, write_split_files, Split, SplitFileFormat, SplitFiles,
    SplitRatios, SplitSet, SplitSource,
};

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::tensor::{Tape, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeOptions {
    /// Add the reverse of every edge.
    pub symmetrize: bool,
    /// Discard `v v` records instead of rejecting them.
    pub drop_self_loops: bool,
    /// Swap endpoints of every record before anything else.
    pub reverse: bool,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        EdgeOptions {
            symmetrize: true,
            drop_self_loops: true,
            reverse: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    cols: Vec<usize>,
}

impl Graph {
    /// Builds the CSR form from directed edge records.
    ///
    /// Without `symmetrize` the records must already contain both
    /// directions of every edge, and without `drop_self_loops` they must
    /// contain no self-loops; otherwise a contract error is returned.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], opts: EdgeOptions) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            let (u, v) = if opts.reverse { (b, a) } else { (a, b) };
            if u >= n || v >= n {
                return Err(Error::Contract(format!(
                    "edge {i} ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                if opts.drop_self_loops {
                    continue;
                }
                return Err(Error::Contract(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            if opts.symmetrize {
                adj[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            cols.extend_from_slice(list);
            offsets.push(cols.len());
        }
        let g = Graph { offsets, cols };
        if !opts.symmetrize {
            if let Some((u, v)) = g.first_asymmetry() {
                return Err(Error::Contract(format!(
                    "edge {u}->{v} has no reverse; enable symmetrize"
                )));
            }
        }
        Ok(g)
    }

    /// Parses a text edge list: one `u v` (or `u,v`) pair per line. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn load_edge_list(path: impl AsRef<Path>, n: usize, opts: EdgeOptions) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let edges = parse_edge_text(path, &text, n)?;
        Self::from_edges(n, &edges, opts)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Undirected edges, each counted once.
    pub fn num_edges(&self) -> usize {
        self.cols.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.cols[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    fn first_asymmetry(&self) -> Option<(usize, usize)> {
        (0..self.num_nodes()).find_map(|u| {
            self.neighbors(u)
                .iter()
                .find(|&&v| self.neighbors(v).binary_search(&u).is_err())
                .map(|&v| (u, v))
        })
    }

    /// Full scan of the CSR invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.offsets[0] != 0 || *self.offsets.last().unwrap() != self.cols.len() {
            return Err(Error::Contract("offset bounds".into()));
        }
        for v in 0..n {
            if self.offsets[v] > self.offsets[v + 1] {
                return Err(Error::Contract(format!("offsets decrease at {v}")));
            }
            let nb = self.neighbors(v);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract(format!("neighbors of {v} not strictly sorted")));
            }
            if nb.iter().any(|&u| u >= n) {
                return Err(Error::Contract(format!("neighbor index out of range at {v}")));
            }
            if nb.binary_search(&v).is_ok() {
                return Err(Error::Contract(format!("self-loop at {v}")));
            }
        }
        if let Some((u, v)) = self.first_asymmetry() {
            return Err(Error::Contract(format!("edge {u}->{v} has no reverse")));
        }
        Ok(())
    }

    /// Nodes within `k` hops of `v`, including `v`, sorted ascending.
    pub fn k_hop_ball(&self, v: usize, k: usize) -> Result<Vec<usize>> {
        let n = self.num_nodes();
        if v >= n {
            return Err(Error::Contract(format!("node {v} out of range for {n} nodes")));
        }
        let mut dist = vec![usize::MAX; n];
        dist[v] = 0;
        let mut queue = VecDeque::from([v]);
        let mut ball = BTreeSet::from([v]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &w in self.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    ball.insert(w);
                    queue.push_back(w);
                }
            }
        }
        Ok(ball.into_iter().collect())
    }

    /// Relabels nodes so old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::Contract("permutation length".into()));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        Self::from_edges(n, &edges, EdgeOptions::default())
    }
}

pub(crate) fn parse_edge_text(path: &Path, text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty());
        let mut next = || -> Result<usize> {
            let tok = toks.next().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected two node indices, got `{line}`"),
            })?;
            tok.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("`{tok}`: {e}"),
            })
        };
        let (u, v) = (next()?, next()?);
        if toks.next().is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected two node indices, got `{line}`"),
            });
        }
        for x in [u, v] {
            if x >= n {
                return Err(Error::Ingest {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("node index {x} out of range for {n} nodes"),
                });
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Mean of each node's neighbor rows of `h`, differentiable on the tape.
/// Isolated nodes receive a zero row.
pub fn mean_aggregate<T: Real>(tape: &mut Tape<T>, graph: &Arc<Graph>, h: ValueId) -> Result<ValueId> {
    tape.neighbor_mean(graph, h)
}

/// Fraction of undirected edges whose endpoints share a label.
///
/// Returns 0 for a graph without edges.
pub fn edge_homophily(graph: &Graph, labels: &[usize], num_classes: usize) -> Result<f64> {
    if labels.len() != graph.num_nodes() {
        return Err(Error::Contract(format!(
            "{} labels for {} nodes",
            labels.len(),
            graph.num_nodes()
        )));
    }
    if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
        return Err(Error::Contract(format!(
            "label {y} of node {v} out of range for {num_classes} classes"
        )));
    }
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in graph.edges() {
        total += 1;
        same += usize::from(labels[u] == labels[v]);
    }
    Ok(if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    })
}
