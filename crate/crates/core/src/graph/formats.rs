//! Readers for the raw layouts public node-classification benchmarks ship
//! in: LINQS `.content`/`.cites` pairs (Cora, CiteSeer), the
//! `out1_*` text files of the web-page and Wikipedia sets (Texas,
//! Wisconsin, Cornell, Chameleon, Squirrel, Actor), and the `.npz`
//! split archives distributed next to them.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, EdgeOptions, Graph, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Counts taken from the raw files before cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawCounts {
    /// Edge lines in the source file.
    pub edge_records: usize,
    /// Edge lines naming an unknown node.
    pub dangling_records: usize,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a LINQS citation set. Nodes keep file order; class names are
/// indexed in sorted order. Citations naming a paper absent from the
/// content file are counted and skipped.
pub fn load_linqs(
    name: &str,
    content: impl AsRef<Path>,
    cites: impl AsRef<Path>,
    opts: EdgeOptions,
) -> Result<(Graph, Dataset, RawCounts)> {
    let content = content.as_ref();
    let cites = cites.as_ref();
    let text = read_text(content)?;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(Error::Parse {
                path: content.to_path_buf(),
                line: i + 1,
                msg: "expected `<id> <features...> <label>`".into(),
            });
        }
        let f = toks.len() - 2;
        if *width.get_or_insert(f) != f {
            return Err(Error::Ingest {
                path: content.to_path_buf(),
                line: i + 1,
                msg: format!("{f} features, previous rows had {}", width.unwrap()),
            });
        }
        let row = toks[1..toks.len() - 1]
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    path: content.to_path_buf(),
                    line: i + 1,
                    msg: format!("`{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.insert(toks[0].to_string(), rows.len()).is_some() {
            return Err(Error::Ingest {
                path: content.to_path_buf(),
                line: i + 1,
                msg: format!("duplicate node id `{}`", toks[0]),
            });
        }
        rows.push(row);
        names.push(toks[toks.len() - 1].to_string());
    }
    let classes: BTreeSet<&String> = names.iter().collect();
    let class_index: HashMap<&String, usize> =
        classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let labels: Vec<usize> = names.iter().map(|c| class_index[c]).collect();

    let text = read_text(cites)?;
    let mut raw = RawCounts::default();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: cites.to_path_buf(),
                line: i + 1,
                msg: "expected `<cited> <citing>`".into(),
            });
        }
        raw.edge_records += 1;
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&a), Some(&b)) => edges.push((b, a)),
            _ => raw.dangling_records += 1,
        }
    }
    let n = rows.len();
    let graph = Graph::from_edges(n, &edges, opts)?;
    let features = Matrix::from_rows(&rows);
    let dataset = Dataset::new(name, features, labels, classes.len())?;
    Ok((graph, dataset, raw))
}

/// Loads `out1_node_feature_label.txt` and `out1_graph_edges.txt` from
/// `dir`. Both files start with a header line. Feature columns are either
/// a dense comma list or, when `sparse_width` is given, a list of active
/// column indices (the Actor layout).
pub fn load_geom_gcn(
    name: &str,
    dir: impl AsRef<Path>,
    opts: EdgeOptions,
    sparse_width: Option<usize>,
) -> Result<(Graph, Dataset, RawCounts)> {
    let dir = dir.as_ref();
    let fpath = dir.join("out1_node_feature_label.txt");
    let epath = dir.join("out1_graph_edges.txt");
    let text = read_text(&fpath)?;
    let mut entries: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: fpath.clone(),
            line: i + 1,
            msg,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err("expected `id<TAB>features<TAB>label`".into()));
        }
        let id: usize = cols[0].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let label: usize = cols[2].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let toks = cols[1].split(',').map(str::trim).filter(|t| !t.is_empty());
        let feats = match sparse_width {
            None => toks
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("`{t}`: {e}"))))
                .collect::<Result<Vec<_>>>()?,
            Some(w) => {
                let mut row = vec![0.0; w];
                for t in toks {
                    let c: usize = t.parse().map_err(|e| parse_err(format!("`{t}`: {e}")))?;
                    if c >= w {
                        return Err(parse_err(format!("feature index {c} >= width {w}")));
                    }
                    row[c] = 1.0;
                }
                row
            }
        };
        entries.push((id, feats, label));
    }
    entries.sort_by_key(|e| e.0);
    let n = entries.len();
    if entries.iter().enumerate().any(|(i, e)| e.0 != i) {
        return Err(Error::Ingest {
            path: fpath,
            line: 0,
            msg: "node ids are not exactly 0..n".into(),
        });
    }
    let f = entries.first().map_or(0, |e| e.1.len());
    if let Some(e) = entries.iter().find(|e| e.1.len() != f) {
        return Err(Error::Ingest {
            path: fpath,
            line: 0,
            msg: format!("node {} has {} features, expected {f}", e.0, e.1.len()),
        });
    }
    let num_classes = entries.iter().map(|e| e.2 + 1).max().unwrap_or(0);
    let labels = entries.iter().map(|e| e.2).collect();
    let rows: Vec<Vec<f64>> = entries.into_iter().map(|e| e.1).collect();

    let text = read_text(&epath)?;
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let edges = super::parse_edge_text(&epath, &body, n).map_err(|e| match e {
        // header was skipped, so shift reported lines by one
        Error::Parse { path, line, msg } => Error::Parse {
            path,
            line: line + 1,
            msg,
        },
        Error::Ingest { path, line, msg } => Error::Ingest {
            path,
            line: line + 1,
            msg,
        },
        other => other,
    })?;
    let raw = RawCounts {
        edge_records: edges.len(),
        dangling_records: 0,
    };
    let graph = Graph::from_edges(n, &edges, opts)?;
    let dataset = Dataset::new(name, Matrix::from_rows(&rows), labels, num_classes)?;
    Ok((graph, dataset, raw))
}

/// Reads `train_mask`, `val_mask` and `test_mask` arrays from a NumPy
/// `.npz` archive.
pub fn load_npz_split(path: impl AsRef<Path>, n: usize) -> Result<Split> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Ingest {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let mut archive = zip::ZipArchive::new(file).map_err(|e| bad(e.to_string()))?;
    let mut read = |key: &str| -> Result<Vec<bool>> {
        let mut entry = archive
            .by_name(&format!("{key}.npy"))
            .map_err(|e| bad(format!("{key}: {e}")))?;
        let mut bytes = Vec::new();
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mask = parse_npy_flags(&bytes).map_err(|m| bad(format!("{key}: {m}")))?;
        if mask.len() != n {
            return Err(bad(format!("{key} has {} entries, expected {n}", mask.len())));
        }
        Ok(mask)
    };
    let split = Split {
        train: read("train_mask")?,
        val: read("val_mask")?,
        test: read("test_mask")?,
    };
    split.validate().map_err(|e| bad(e.to_string()))?;
    Ok(split)
}

/// Nonzero test over a 1-D `.npy` array of bool or integer dtype.
fn parse_npy_flags(bytes: &[u8]) -> std::result::Result<Vec<bool>, String> {
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err("not an .npy array".into());
    }
    let (hlen, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err("truncated header".into());
            }
            (
                u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
                12,
            )
        }
        v => return Err(format!("unsupported .npy version {v}")),
    };
    let header = std::str::from_utf8(bytes.get(start..start + hlen).ok_or("truncated header")?)
        .map_err(|e| e.to_string())?;
    let field = |key: &str| -> std::result::Result<&str, String> {
        let at = header
            .find(&format!("'{key}':"))
            .ok_or(format!("header lacks {key}"))?;
        Ok(header[at + key.len() + 3..].trim_start())
    };
    let descr = field("descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.split('\'').next())
        .ok_or("bad descr")?;
    if field("fortran_order")?.starts_with("True") {
        return Err("fortran order not supported".into());
    }
    let shape = field("shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or("bad shape")?;
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("bad dim `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    if dims.len() != 1 {
        return Err(format!("expected a 1-D array, shape {dims:?}"));
    }
    let len = dims[0];
    let width = match &descr[1..] {
        "b1" | "u1" | "i1" => 1,
        "i2" | "u2" => 2,
        "i4" | "u4" => 4,
        "i8" | "u8" => 8,
        other => return Err(format!("unsupported dtype {other}")),
    };
    if descr.starts_with('>') && width > 1 {
        return Err("big-endian arrays not supported".into());
    }
    let payload = &bytes[start + hlen..];
    if payload.len() < len * width {
        return Err("truncated payload".into());
    }
    Ok(payload[..len * width]
        .chunks_exact(width)
        .map(|c| c.iter().any(|&b| b != 0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn linqs_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("toy.content");
        let e = dir.path().join("toy.cites");
        std::fs::write(&c, "p10\t1\t0\tNeural\np7\t0\t1\tTheory\np3\t1\t1\tNeural\n").unwrap();
        std::fs::write(&e, "p10\tp7\np7\tp3\np3\tp10\np3\tghost\n").unwrap();
        let (g, d, raw) = load_linqs("toy", &c, &e, EdgeOptions::default()).unwrap();
        assert_eq!(d.num_nodes(), 3);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(raw.edge_records, 4);
        assert_eq!(raw.dangling_records, 1);
    }

    #[test]
    fn geom_gcn_layout() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("out1_node_feature_label.txt"),
            "node_id\tfeature\tlabel\n1\t0,1\t2\n0\t1,0\t0\n2\t1,1\t1\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("out1_graph_edges.txt"),
            "node_id\tnode_id\n0\t1\n1\t2\n2\t1\n",
        )
        .unwrap();
        let (g, d, raw) = load_geom_gcn("toy", dir.path(), EdgeOptions::default(), None).unwrap();
        assert_eq!(d.labels, vec![0, 2, 1]);
        assert_eq!(d.features.row(1), &[0.0, 1.0]);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(raw.edge_records, 3);

        std::fs::write(
            dir.path().join("out1_graph_edges.txt"),
            "node_id\tnode_id\n0\t1\n1\t9\n",
        )
        .unwrap();
        let err = load_geom_gcn("toy", dir.path(), EdgeOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 3, .. }), "{err}");
    }

    fn npy_bool(flags: &[bool]) -> Vec<u8> {
        let mut header = format!(
            "{{'descr': '|b1', 'fortran_order': False, 'shape': ({},), }}",
            flags.len()
        );
        while (10 + header.len() + 1) % 64 != 0 {
            header.push(' ');
        }
        header.push('\n');
        let mut out = b"\x93NUMPY\x01\x00".to_vec();
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend(flags.iter().map(|&b| u8::from(b)));
        out
    }

    #[test]
    fn npz_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.npz");
        let mut zw = zip::ZipWriter::new(std::fs::File::create(&p).unwrap());
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Stored);
        for (k, m) in [
            ("train_mask", [true, true, false, false]),
            ("val_mask", [false, false, true, false]),
            ("test_mask", [false, false, false, true]),
        ] {
            zw.start_file(format!("{k}.npy"), opts).unwrap();
            zw.write_all(&npy_bool(&m)).unwrap();
        }
        zw.finish().unwrap();
        let s = load_npz_split(&p, 4).unwrap();
        assert_eq!(s.counts(), (2, 1, 1));
        assert!(load_npz_split(&p, 5).is_err());
    }

    #[test]
    fn npy_integer_dtype() {
        let mut header = "{'descr': '<i8', 'fortran_order': False, 'shape': (3,), }".to_string();
        header.push('\n');
        let mut b = b"\x93NUMPY\x01\x00".to_vec();
        b.extend_from_slice(&(header.len() as u16).to_le_bytes());
        b.extend_from_slice(header.as_bytes());
        for v in [0i64, 5, 0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(parse_npy_flags(&b).unwrap(), vec![false, true, false]);
    }
}
