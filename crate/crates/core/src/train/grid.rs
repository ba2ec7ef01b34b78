//! Exhaustive or budget-truncated hyperparameter search.

use std::fmt::Write as _;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{multi_split_report, Problem, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Split;
use crate::matrix::Real;
use crate::model::ModelConfig;
use crate::rng::derive_seed;

/// Candidate values per hyperparameter. Cells enumerate the Cartesian
/// product with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dropout_theta: Vec<f64>,
    pub dropout_xi: Vec<f64>,
    pub l2_theta: Vec<f64>,
    pub l2_xi: Vec<f64>,
    pub lr: Vec<f64>,
    pub mlp_layers: Vec<usize>,
    pub tie_gates: Vec<bool>,
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub dropout_theta: f64,
    pub dropout_xi: f64,
    pub l2_theta: f64,
    pub l2_xi: f64,
    pub lr: f64,
    pub mlp_layers: usize,
    pub tie_gates: bool,
}

impl GridSpec {
    /// Search space for the node-classification benchmarks.
    pub fn standard() -> Self {
        GridSpec {
            dropout_theta: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            dropout_xi: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            l2_theta: vec![5e-2, 5e-4, 5e-6, 5e-8],
            l2_xi: vec![5e-2, 5e-4, 5e-6, 5e-8],
            lr: vec![0.01, 0.005, 0.001],
            mlp_layers: vec![1, 2, 3],
            tie_gates: vec![false],
        }
    }

    /// Search space for the depth study.
    pub fn over_smoothing() -> Self {
        GridSpec {
            dropout_theta: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            dropout_xi: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            l2_theta: vec![5e-1, 5e-2, 5e-4, 5e-6, 5e-8],
            l2_xi: vec![5e-1, 5e-2, 5e-4, 5e-6, 5e-8],
            lr: vec![0.01, 0.005, 0.001],
            mlp_layers: vec![1, 2],
            tie_gates: vec![true],
        }
    }

    fn axis_lens(&self) -> [usize; 7] {
        [
            self.dropout_theta.len(),
            self.dropout_xi.len(),
            self.l2_theta.len(),
            self.l2_xi.len(),
            self.lr.len(),
            self.mlp_layers.len(),
            self.tie_gates.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        const NAMES: [&str; 7] = [
            "dropout_theta",
            "dropout_xi",
            "l2_theta",
            "l2_xi",
            "lr",
            "mlp_layers",
            "tie_gates",
        ];
        let empty: Vec<String> = self
            .axis_lens()
            .iter()
            .zip(NAMES)
            .filter(|(&n, _)| n == 0)
            .map(|(_, name)| format!("grid axis `{name}` is empty"))
            .collect();
        if empty.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(empty))
        }
    }

    pub fn len(&self) -> usize {
        self.axis_lens().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, id: usize) -> Cell {
        let lens = self.axis_lens();
        let mut idx = [0usize; 7];
        let mut rest = id;
        for a in (0..7).rev() {
            idx[a] = rest % lens[a];
            rest /= lens[a];
        }
        Cell {
            id,
            dropout_theta: self.dropout_theta[idx[0]],
            dropout_xi: self.dropout_xi[idx[1]],
            l2_theta: self.l2_theta[idx[2]],
            l2_xi: self.l2_xi[idx[3]],
            lr: self.lr[idx[4]],
            mlp_layers: self.mlp_layers[idx[5]],
            tie_gates: self.tie_gates[idx[6]],
        }
    }

    /// Cell ids to evaluate. With a budget below the grid size, a seeded
    /// shuffle picks the cells; the result is sorted by id.
    pub fn selection(&self, budget: Option<usize>, seed: u64) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.len()).collect();
        if let Some(b) = budget.filter(|&b| b < ids.len()) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "grid"));
            ids.shuffle(&mut rng);
            ids.truncate(b);
            ids.sort_unstable();
        }
        ids
    }
}

impl Cell {
    pub fn apply(&self, model: &mut ModelConfig, train: &mut TrainConfig) {
        model.dropout_theta = self.dropout_theta;
        model.dropout_xi = self.dropout_xi;
        model.mlp_layers = self.mlp_layers;
        model.tie_gates = self.tie_gates;
        train.l2_theta = self.l2_theta;
        train.l2_xi = self.l2_xi;
        train.lr = self.lr;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Ok {
        val_mean: f64,
        val_std: f64,
        test_mean: f64,
        test_std: f64,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub cell: Cell,
    pub status: CellStatus,
}

impl LeaderboardRow {
    pub fn val_mean(&self) -> Option<f64> {
        match self.status {
            CellStatus::Ok { val_mean, .. } => Some(val_mean),
            CellStatus::Failed(_) => None,
        }
    }
}

/// Sorts by mean validation accuracy (descending), then cell id; failed
/// cells go last.
pub fn sort_leaderboard(rows: &mut [LeaderboardRow]) {
    rows.sort_by(|a, b| match (a.val_mean(), b.val_mean()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cell.id.cmp(&b.cell.id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cell.id.cmp(&b.cell.id),
    });
}

pub const LEADERBOARD_HEADER: &str = "cell\tdropout_theta\tdropout_xi\tl2_theta\tl2_xi\tlr\tmlp_layers\ttie_gates\tstatus\tval_mean\tval_std\ttest_mean\ttest_std";

/// Tab-separated leaderboard. Floats are written in shortest round-trip
/// form so [`parse_leaderboard`] restores them exactly.
pub fn leaderboard_tsv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from(LEADERBOARD_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&row_line(r));
        out.push('\n');
    }
    out
}

pub fn row_line(r: &LeaderboardRow) -> String {
    let c = &r.cell;
    let mut line = format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        c.id, c.dropout_theta, c.dropout_xi, c.l2_theta, c.l2_xi, c.lr, c.mlp_layers, c.tie_gates
    );
    match &r.status {
        CellStatus::Ok {
            val_mean,
            val_std,
            test_mean,
            test_std,
        } => {
            let _ = write!(line, "\tok\t{val_mean}\t{val_std}\t{test_mean}\t{test_std}");
        }
        CellStatus::Failed(msg) => {
            let clean = msg.replace(['\t', '\n'], " ");
            let _ = write!(line, "\tfailed: {clean}\t\t\t\t");
        }
    }
    line
}

/// Parses rows written by [`leaderboard_tsv`] or [`row_line`]. The header
/// line is optional; blank lines are skipped.
pub fn parse_leaderboard(text: &str) -> Result<Vec<LeaderboardRow>> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: "leaderboard".into(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line == LEADERBOARD_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 13 {
            return Err(bad(i + 1, format!("expected 13 fields, found {}", f.len())));
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse()
                .map_err(|_| bad(i + 1, format!("field {} `{}` is not a number", j + 1, f[j])))
        };
        let int = |j: usize| -> Result<usize> {
            f[j].parse()
                .map_err(|_| bad(i + 1, format!("field {} `{}` is not an integer", j + 1, f[j])))
        };
        let cell = Cell {
            id: int(0)?,
            dropout_theta: num(1)?,
            dropout_xi: num(2)?,
            l2_theta: num(3)?,
            l2_xi: num(4)?,
            lr: num(5)?,
            mlp_layers: int(6)?,
            tie_gates: f[7]
                .parse()
                .map_err(|_| bad(i + 1, format!("`{}` is not a boolean", f[7])))?,
        };
        let status = if f[8] == "ok" {
            CellStatus::Ok {
                val_mean: num(9)?,
                val_std: num(10)?,
                test_mean: num(11)?,
                test_std: num(12)?,
            }
        } else if let Some(msg) = f[8].strip_prefix("failed: ") {
            CellStatus::Failed(msg.to_string())
        } else {
            return Err(bad(i + 1, format!("unknown status `{}`", f[8])));
        };
        rows.push(LeaderboardRow { cell, status });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Sorted leaderboard covering every selected cell.
    pub leaderboard: Vec<LeaderboardRow>,
    pub best: Option<Cell>,
}

impl GridOutcome {
    /// Base configs with the winning cell applied.
    pub fn best_configs(
        &self,
        model: &ModelConfig,
        train: &TrainConfig,
    ) -> Option<(ModelConfig, TrainConfig)> {
        self.best.map(|c| {
            let (mut m, mut t) = (model.clone(), train.clone());
            c.apply(&mut m, &mut t);
            (m, t)
        })
    }
}

/// Evaluates every selected cell not already in `completed` and returns
/// the merged, sorted leaderboard. `on_row` sees each newly finished row
/// (in completion order) so callers can persist progress.
///
/// Cells that fail are recorded with their error and do not stop the
/// search.
#[allow(clippy::too_many_arguments)]
pub fn grid_search<T: Real>(
    spec: &GridSpec,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    problem: &Problem<T>,
    splits: &[Split],
    budget: Option<usize>,
    completed: Vec<LeaderboardRow>,
    on_row: &(dyn Fn(&LeaderboardRow) -> Result<()> + Sync),
) -> Result<GridOutcome> {
    spec.validate()?;
    let selected = spec.selection(budget, base_train.seed);
    for row in &completed {
        if row.cell != spec.cell(row.cell.id) {
            return Err(Error::Versioning(format!(
                "completed cell {} does not match the grid specification",
                row.cell.id
            )));
        }
    }
    let done: std::collections::BTreeSet<usize> = completed.iter().map(|r| r.cell.id).collect();
    let pending: Vec<usize> = selected.iter().copied().filter(|id| !done.contains(id)).collect();
    let sink_error = Mutex::new(None);

    let fresh: Vec<LeaderboardRow> = pending
        .par_iter()
        .map(|&id| {
            let cell = spec.cell(id);
            let (mut m, mut t) = (base_model.clone(), base_train.clone());
            cell.apply(&mut m, &mut t);
            let status = match multi_split_report(&m, problem, splits, &t) {
                Ok(r) => CellStatus::Ok {
                    val_mean: r.val_mean,
                    val_std: r.val_std,
                    test_mean: r.test_mean,
                    test_std: r.test_std,
                },
                Err(e) => CellStatus::Failed(format!("cell {id}: {e}")),
            };
            let row = LeaderboardRow { cell, status };
            if let Err(e) = on_row(&row) {
                sink_error.lock().unwrap().get_or_insert(e);
            }
            row
        })
        .collect();
    if let Some(e) = sink_error.into_inner().unwrap() {
        return Err(e);
    }

    let keep: std::collections::BTreeSet<usize> = selected.into_iter().collect();
    let mut leaderboard: Vec<LeaderboardRow> = completed
        .into_iter()
        .filter(|r| keep.contains(&r.cell.id))
        .chain(fresh)
        .collect();
    sort_leaderboard(&mut leaderboard);
    let best = leaderboard
        .first()
        .filter(|r| r.val_mean().is_some())
        .map(|r| r.cell);
    Ok(GridOutcome { leaderboard, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridSpec {
        GridSpec {
            dropout_theta: vec![0.0, 0.5],
            dropout_xi: vec![0.0],
            l2_theta: vec![5e-4, 5e-8],
            l2_xi: vec![5e-4],
            lr: vec![0.01, 0.001, 0.005],
            mlp_layers: vec![1],
            tie_gates: vec![false, true],
        }
    }

    #[test]
    fn cells_enumerate_product() {
        let g = tiny();
        assert_eq!(g.len(), 24);
        let all: Vec<Cell> = (0..g.len()).map(|i| g.cell(i)).collect();
        assert!(!all[0].tie_gates);
        assert!(all[1].tie_gates);
        assert_eq!(all[2].lr, 0.001);
        assert_eq!(all[23].dropout_theta, 0.5);
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!((a.dropout_theta, a.l2_theta, a.lr, a.tie_gates)
                    != (b.dropout_theta, b.l2_theta, b.lr, b.tie_gates));
            }
        }
    }

    #[test]
    fn empty_axis_is_rejected() {
        let g = GridSpec {
            lr: vec![],
            mlp_layers: vec![],
            ..tiny()
        };
        match g.validate() {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_is_seeded() {
        let g = tiny();
        let a = g.selection(Some(5), 3);
        assert_eq!(a.len(), 5);
        assert_eq!(a, g.selection(Some(5), 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.selection(Some(100), 3).len(), 24);
    }

    #[test]
    fn leaderboard_round_trip_and_order() {
        let g = tiny();
        let mut rows = vec![
            LeaderboardRow {
                cell: g.cell(3),
                status: CellStatus::Failed("boom\tbad".into()),
            },
            LeaderboardRow {
                cell: g.cell(2),
                status: CellStatus::Ok {
                    val_mean: 0.5,
                    val_std: 0.1,
                    test_mean: 0.4,
                    test_std: 0.0,
                },
            },
            LeaderboardRow {
                cell: g.cell(1),
                status: CellStatus::Ok {
                    val_mean: 0.5,
                    val_std: 0.2,
                    test_mean: 1.0 / 3.0,
                    test_std: 0.0,
                },
            },
            LeaderboardRow {
                cell: g.cell(7),
                status: CellStatus::Ok {
                    val_mean: 0.9,
                    val_std: 0.0,
                    test_mean: 0.8,
                    test_std: 0.0,
                },
            },
        ];
        sort_leaderboard(&mut rows);
        let ids: Vec<usize> = rows.iter().map(|r| r.cell.id).collect();
        assert_eq!(ids, vec![7, 1, 2, 3]);
        let back = parse_leaderboard(&leaderboard_tsv(&rows)).unwrap();
        assert_eq!(back[..3], rows[..3]);
        assert_eq!(back[3].status, CellStatus::Failed("boom bad".into()));
    }
}
