//! Full-graph training with Adam, early stopping on validation accuracy,
//! multi-split reporting and depth sweeps.

mod adam;
pub mod grid;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, DecayMode, BETA1, BETA2, EPS};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Split};
use crate::matrix::{Matrix, Precision, Real};
use crate::model::{Group, ModelConfig, OrderedGnn, Pass};
use crate::rng::{derive_seed, RngStreams};
use crate::tensor::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2_theta: f64,
    pub l2_xi: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Single-threaded kernels. Results are bitwise identical either way;
    /// this only pins the thread count.
    pub deterministic: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            l2_theta: 5e-4,
            l2_xi: 5e-4,
            max_epochs: 2000,
            patience: 200,
            seed: 0,
            deterministic: false,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("train.lr must be > 0, got {}", self.lr));
        }
        for (name, v) in [("l2_theta", self.l2_theta), ("l2_xi", self.l2_xi)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("train.{name} must be >= 0, got {v}"));
            }
        }
        if self.max_epochs == 0 {
            out.push("train.max_epochs must be >= 1".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            out.push(format!(
                "train.patience ({}) must be in 1..=max_epochs ({})",
                self.patience, self.max_epochs
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    pub fn decay(&self, group: Group) -> f64 {
        match group {
            Group::Theta => self.l2_theta,
            Group::Xi => self.l2_xi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub best_val_acc: f64,
    /// Test accuracy of the parameters from the best validation epoch.
    pub test_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curve: Vec<EpochRecord>,
    pub wall_secs: f64,
}

/// Wall time is excluded so repeated runs compare equal.
impl PartialEq for RunResult {
    fn eq(&self, other: &Self) -> bool {
        self.best_val_acc == other.best_val_acc
            && self.test_acc == other.test_acc
            && self.best_epoch == other.best_epoch
            && self.epochs_run == other.epochs_run
            && self.curve == other.curve
    }
}

impl RunResult {
    /// One `epoch\ttrain_loss\tval_acc` line per epoch.
    pub fn epoch_lines(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_acc\n");
        for r in &self.curve {
            out.push_str(&format!("{}\t{}\t{}\n", r.epoch, r.train_loss, r.val_acc));
        }
        out
    }
}

/// Accuracy of row-wise argmax over `mask`. Ties go to the lowest class
/// index.
pub fn evaluate<T: Real>(logits: &Matrix<T>, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::Contract(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        total += 1;
        let row = logits.row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == labels[r] {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Contract("evaluation mask is empty".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Graph, features and labels prepared for one precision.
pub struct Problem<T> {
    pub graph: Arc<Graph>,
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Real> Problem<T> {
    pub fn new(graph: Arc<Graph>, data: &Dataset) -> Result<Self> {
        if graph.num_nodes() != data.num_nodes() {
            return Err(Error::Contract(format!(
                "graph has {} nodes, dataset {}",
                graph.num_nodes(),
                data.num_nodes()
            )));
        }
        Ok(Problem {
            graph,
            features: data.features.cast(),
            labels: data.labels.clone(),
            num_classes: data.num_classes,
        })
    }
}

/// Trains `model` in place on one split and leaves it holding the
/// parameters of the best validation epoch.
///
/// If the loss or a gradient turns non-finite the run aborts with the
/// model holding the last parameters that produced a finite loss.
pub fn train_run<T: Real>(
    model: &mut OrderedGnn<T>,
    problem: &Problem<T>,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    split.validate()?;
    if split.num_nodes() != problem.labels.len() {
        return Err(Error::Contract(format!(
            "split covers {} nodes, problem has {}",
            split.num_nodes(),
            problem.labels.len()
        )));
    }
    let start = Instant::now();
    let mut streams = RngStreams::new(derive_seed(cfg.seed, "dropout"));
    let mut state = AdamState::new(model.params());
    let mut best = (f64::NEG_INFINITY, 0usize, model.params().values());
    let mut curve = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut tape = new_tape(cfg);
        let mut pass = Pass {
            tape: &mut tape,
            rng: &mut streams,
            training: true,
        };
        let fwd = model.forward(&mut pass, &problem.graph, &problem.features, false)?;
        let loss = tape.cross_entropy(fwd.logits, &problem.labels, &split.train)?;
        let loss_value = tape.scalar(loss).to_f64_lossless();
        if !loss_value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: loss_value,
            });
        }
        tape.backward(loss)?;
        let grads: Vec<_> = fwd.params.iter().map(|&id| tape.grad(id)).collect();
        adam_step(model.params_mut(), &grads, &mut state, cfg.lr, |g| cfg.decay(g))?;

        let logits = model.predict(&problem.graph, &problem.features)?;
        let val_acc = evaluate(&logits, &problem.labels, &split.val)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: loss_value,
            val_acc,
        });
        if val_acc > best.0 {
            best = (val_acc, epoch, model.params().values());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }

    model.params_mut().set_values(best.2)?;
    let logits = model.predict(&problem.graph, &problem.features)?;
    let test_acc = evaluate(&logits, &problem.labels, &split.test)?;
    Ok(RunResult {
        best_val_acc: best.0,
        test_acc,
        best_epoch: best.1,
        epochs_run: curve.len(),
        curve,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn new_tape<T: Real>(cfg: &TrainConfig) -> Tape<T> {
    if cfg.deterministic {
        Tape::new().serial()
    } else {
        Tape::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSplitReport {
    pub runs: Vec<RunResult>,
    pub val_mean: f64,
    pub val_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

impl MultiSplitReport {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let val: Vec<f64> = runs.iter().map(|r| r.best_val_acc).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
        let (val_mean, val_std) = mean_std(&val);
        let (test_mean, test_std) = mean_std(&test);
        MultiSplitReport {
            runs,
            val_mean,
            val_std,
            test_mean,
            test_std,
        }
    }

    /// `mean ± std` of test accuracy in percent, population std.
    pub fn summary_line(&self) -> String {
        format!(
            "test accuracy {:.2} ± {:.2} over {} splits (population std)",
            100.0 * self.test_mean,
            100.0 * self.test_std,
            self.runs.len()
        )
    }
}

/// Seed used for split `index` of a run seeded with `seed`.
pub fn split_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &format!("split.{index}"))
}

/// Trains a fresh model on every split. Split `i` initializes and draws
/// dropout masks from [`split_seed`]`(cfg.seed, i)`; splits run in
/// parallel.
pub fn multi_split_report<T: Real>(
    model_cfg: &ModelConfig,
    problem: &Problem<T>,
    splits: &[Split],
    cfg: &TrainConfig,
) -> Result<MultiSplitReport> {
    if splits.is_empty() {
        return Err(Error::Contract("no splits given".into()));
    }
    let runs = splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            let seed = split_seed(cfg.seed, i);
            let mut model = OrderedGnn::new(model_cfg.clone(), seed)?;
            let run_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            train_run(&mut model, problem, split, &run_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiSplitReport::from_runs(runs))
}

/// One [`multi_split_report`] per depth, all other settings shared.
pub fn depth_sweep<T: Real>(
    template: &ModelConfig,
    depths: &[usize],
    problem: &Problem<T>,
    splits: &[Split],
    cfg: &TrainConfig,
) -> Result<Vec<(usize, MultiSplitReport)>> {
    if let Some(d) = depths.iter().find(|&&d| d == 0) {
        return Err(Error::Config(format!("depth {d} in sweep; depths must be >= 1")));
    }
    depths
        .iter()
        .map(|&layers| {
            let model_cfg = ModelConfig {
                layers,
                ..template.clone()
            };
            Ok((layers, multi_split_report(&model_cfg, problem, splits, cfg)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::two_cliques;

    #[test]
    fn evaluate_contract() {
        let labels = [0, 2, 1, 0];
        let onehot = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ]);
        assert_eq!(evaluate(&onehot, &labels, &[true; 4]).unwrap(), 1.0);
        let flat = Matrix::filled(4, 3, 0.3);
        assert_eq!(evaluate(&flat, &labels, &[true; 4]).unwrap(), 0.5);
        assert!(matches!(
            evaluate(&flat, &labels, &[false; 4]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[0.8, 0.9]);
        assert!((m - 0.85).abs() < 1e-15 && (s - 0.05).abs() < 1e-15);
    }

    #[test]
    fn config_problems() {
        let cfg = TrainConfig {
            lr: 0.0,
            patience: 5000,
            ..Default::default()
        };
        assert_eq!(cfg.problems().len(), 2);
    }

    fn toy() -> (Problem<f64>, Split, ModelConfig) {
        let (g, data) = two_cliques(4);
        let problem = Problem::new(Arc::new(g), &data).unwrap();
        let split = Split::from_indices(8, &[0, 4], &[1, 5], &[2, 3, 6, 7]).unwrap();
        let cfg = ModelConfig {
            layers: 2,
            hidden: 4,
            chunk: 2,
            num_features: 2,
            num_classes: 2,
            ..Default::default()
        };
        (problem, split, cfg)
    }

    #[test]
    fn patience_one_stops_at_epoch_two() {
        let (problem, split, mcfg) = toy();
        let mut model = OrderedGnn::new(mcfg, 1).unwrap();
        // steps this small leave every weight bitwise unchanged, so
        // validation accuracy never moves after the first epoch
        let cfg = TrainConfig {
            patience: 1,
            max_epochs: 50,
            lr: 1e-300,
            ..Default::default()
        };
        let r = train_run(&mut model, &problem, &split, &cfg).unwrap();
        assert_eq!(r.epochs_run, 2);
        assert_eq!(r.best_epoch, 1);
    }

    #[test]
    fn two_cliques_are_learned() {
        let (problem, split, mcfg) = toy();
        let mut model = OrderedGnn::new(mcfg, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 200,
            patience: 200,
            lr: 0.01,
            ..Default::default()
        };
        let r = train_run(&mut model, &problem, &split, &cfg).unwrap();
        assert_eq!(r.test_acc, 1.0);
        let again = evaluate(
            &model.predict(&problem.graph, &problem.features).unwrap(),
            &problem.labels,
            &split.val,
        )
        .unwrap();
        assert_eq!(again, r.best_val_acc);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (problem, split, mcfg) = toy();
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 30,
            deterministic: true,
            ..Default::default()
        };
        let run = || {
            let mut model = OrderedGnn::new(mcfg.clone(), 9).unwrap();
            train_run(&mut model, &problem, &split, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn depth_sweep_of_one_matches_direct_report() {
        let (problem, split, mcfg) = toy();
        let cfg = TrainConfig {
            max_epochs: 20,
            patience: 20,
            ..Default::default()
        };
        let splits = [split];
        let sweep = depth_sweep(&mcfg, &[2], &problem, &splits, &cfg).unwrap();
        let direct = multi_split_report(&mcfg, &problem, &splits, &cfg).unwrap();
        assert_eq!(sweep[0].1, direct);
        assert_eq!(direct.test_std, 0.0);
        assert!(depth_sweep(&mcfg, &[0], &problem, &splits, &cfg).is_err());
    }
}
