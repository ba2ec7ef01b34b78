//! Independent checks of the engine: finite-difference gradients,
//! receptive-field and permutation audits, and gate-law audits against
//! brute-force enumeration.
//!
//! Reference values here come from forward evaluations and plain scalar
//! code only; nothing in this module trusts a gradient computed by the
//! tape.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::synthetic::{random_features, random_graph};
use crate::graph::{EdgeOptions, Graph};
use crate::matrix::Matrix;
use crate::model::{cumax_left, softor, ModelConfig, OrderedGnn, Pass, Variant};
use crate::rng::RngStreams;
use crate::tensor::{OpKind, Tape, ValueId};

/// Relu inputs closer to zero than this make a point unusable for
/// finite differences.
pub const KINK_MARGIN: f64 = 1e-6;
/// Floor on the denominator of the relative error.
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// Builds a scalar loss from parameter values on a fresh tape. Returns the
/// loss and the tape leaves that hold each parameter, in input order.
pub trait LossBuilder: Fn(&mut Tape<f64>, &[Matrix<f64>]) -> Result<(ValueId, Vec<ValueId>)> {}
impl<F> LossBuilder for F where F: Fn(&mut Tape<f64>, &[Matrix<f64>]) -> Result<(ValueId, Vec<ValueId>)> {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub name: String,
    /// Largest relative error over the parameter's scalars.
    pub rel_err: f64,
    /// Flat index of that scalar.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    /// One entry per parameter, worst first.
    pub entries: Vec<GradEntry>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.rel_err)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

/// Why a point could not be checked.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Report(GradReport),
    /// A relu input was within [`KINK_MARGIN`] of zero.
    NearKink(f64),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn eval_loss(build: &impl LossBuilder, values: &[Matrix<f64>]) -> Result<(f64, f64)> {
    let mut tape = Tape::new().serial();
    let (loss, _) = build(&mut tape, values)?;
    Ok((tape.scalar(loss), tape.min_relu_margin()))
}

/// Compares tape gradients with central differences at `params`.
///
/// Each scalar `w` is stepped by `1e-5 * max(1, |w|)`. Fails if two
/// evaluations of the unperturbed loss disagree.
pub fn finite_diff_check(
    names: &[String],
    params: &[Matrix<f64>],
    build: impl LossBuilder,
    tolerance: f64,
) -> Result<CheckOutcome> {
    if names.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} names for {} parameters",
            names.len(),
            params.len()
        )));
    }
    let (base, margin) = eval_loss(&build, params)?;
    let (again, _) = eval_loss(&build, params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::State(format!(
            "loss builder is non-deterministic: {base} then {again}"
        )));
    }
    if margin < KINK_MARGIN {
        return Ok(CheckOutcome::NearKink(margin));
    }

    let mut tape = Tape::new().serial();
    let (loss, ids) = build(&mut tape, params)?;
    if ids.len() != params.len() {
        return Err(Error::Contract("builder returned wrong number of leaves".into()));
    }
    tape.backward(loss)?;
    let analytic: Vec<Matrix<f64>> = ids.iter().map(|&id| tape.grad(id)).collect();

    let mut entries = Vec::with_capacity(params.len());
    let mut values = params.to_vec();
    for (p, name) in names.iter().enumerate() {
        let mut worst = GradEntry {
            name: name.clone(),
            rel_err: 0.0,
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
            step: 0.0,
        };
        for j in 0..params[p].data().len() {
            let w = params[p].data()[j];
            let h = 1e-5 * w.abs().max(1.0);
            values[p].data_mut()[j] = w + h;
            let (up, _) = eval_loss(&build, &values)?;
            values[p].data_mut()[j] = w - h;
            let (down, _) = eval_loss(&build, &values)?;
            values[p].data_mut()[j] = w;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p].data()[j];
            let err = relative_error(a, numeric);
            if err > worst.rel_err || j == 0 {
                worst = GradEntry {
                    name: name.clone(),
                    rel_err: err,
                    index: j,
                    analytic: a,
                    numeric,
                    step: h,
                };
            }
        }
        entries.push(worst);
    }
    entries.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    Ok(CheckOutcome::Report(GradReport { entries, tolerance }))
}

/// Runs [`finite_diff_check`] at points from `sample(attempt)` until one is
/// away from every relu kink.
pub fn finite_diff_check_resampled(
    names: &[String],
    mut sample: impl FnMut(u64) -> Vec<Matrix<f64>>,
    build: impl LossBuilder,
    tolerance: f64,
    max_attempts: u64,
) -> Result<GradReport> {
    let mut closest = f64::NAN;
    for attempt in 0..max_attempts {
        match finite_diff_check(names, &sample(attempt), &build, tolerance)? {
            CheckOutcome::Report(r) => return Ok(r),
            CheckOutcome::NearKink(m) => closest = m,
        }
    }
    Err(Error::State(format!(
        "every sampled point lies within {KINK_MARGIN} of a relu kink (last margin {closest})"
    )))
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Values bounded away from zero, for relu inputs.
fn off_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.gen_range(0.1..1.0);
                if rng.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
}

/// Gradient check of one tape operation.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: OpKind,
    pub report: GradReport,
}

/// Tolerance for ops whose output is linear or piecewise linear in each
/// input.
pub const LINEAR_OP_TOL: f64 = 1e-6;
/// Tolerance for smooth nonlinear ops and the full model.
pub const NONLINEAR_OP_TOL: f64 = 1e-4;

/// Every differentiable tape operation, each checked through a loss
/// `sum(op(...) * R)` with a fixed random weighting `R`.
pub fn op_gradient_suite(seed: u64) -> Result<Vec<OpCheck>> {
    let graph = Arc::new(random_graph(9, 0.35, seed));
    let cases: Vec<(OpKind, f64)> = vec![
        (OpKind::MatMul, LINEAR_OP_TOL),
        (OpKind::RowSoftmax, NONLINEAR_OP_TOL),
        (OpKind::CumsumReverse, LINEAR_OP_TOL),
        (OpKind::LayerNorm, NONLINEAR_OP_TOL),
        (OpKind::Dropout, LINEAR_OP_TOL),
        (OpKind::Concat, LINEAR_OP_TOL),
        (OpKind::CrossEntropy, NONLINEAR_OP_TOL),
        (OpKind::Add, LINEAR_OP_TOL),
        (OpKind::Sub, LINEAR_OP_TOL),
        (OpKind::Mul, LINEAR_OP_TOL),
        (OpKind::OneMinus, LINEAR_OP_TOL),
        (OpKind::Relu, LINEAR_OP_TOL),
        (OpKind::Sigmoid, NONLINEAR_OP_TOL),
        (OpKind::RepeatRows, LINEAR_OP_TOL),
        (OpKind::RepeatCols, LINEAR_OP_TOL),
        (OpKind::NeighborMean, LINEAR_OP_TOL),
        (OpKind::Sum, LINEAR_OP_TOL),
    ];
    cases
        .into_iter()
        .map(|(op, tol)| {
            let report = check_op(op, tol, seed, &graph)?;
            Ok(OpCheck { op, report })
        })
        .collect()
}

/// Gradient check of a single op; `fault` flips that op's backward sign
/// first.
pub fn check_op_with_fault(op: OpKind, seed: u64, fault: Option<OpKind>) -> Result<GradReport> {
    let graph = Arc::new(random_graph(9, 0.35, seed));
    check_op_inner(op, NONLINEAR_OP_TOL, seed, &graph, fault)
}

fn check_op(op: OpKind, tol: f64, seed: u64, graph: &Arc<Graph>) -> Result<GradReport> {
    check_op_inner(op, tol, seed, graph, None)
}

fn check_op_inner(
    op: OpKind,
    tol: f64,
    seed: u64,
    graph: &Arc<Graph>,
    fault: Option<OpKind>,
) -> Result<GradReport> {
    let n = graph.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (op as u64).wrapping_mul(0x9e37_79b9));
    let (m, d) = (4, 5);
    let mut inputs: Vec<Matrix<f64>> = match op {
        OpKind::MatMul => vec![uniform(m, 3, &mut rng, -1.0, 1.0), uniform(3, d, &mut rng, -1.0, 1.0)],
        OpKind::LayerNorm => vec![
            uniform(m, d, &mut rng, -2.0, 2.0),
            uniform(1, d, &mut rng, 0.5, 1.5),
            uniform(1, d, &mut rng, -0.5, 0.5),
        ],
        OpKind::Concat | OpKind::Add | OpKind::Sub | OpKind::Mul => vec![
            uniform(m, d, &mut rng, -1.0, 1.0),
            uniform(m, d, &mut rng, -1.0, 1.0),
        ],
        OpKind::Relu => vec![off_zero(m, d, &mut rng)],
        OpKind::RepeatRows => vec![uniform(1, d, &mut rng, -1.0, 1.0)],
        OpKind::NeighborMean => vec![uniform(n, 3, &mut rng, -1.0, 1.0)],
        OpKind::CrossEntropy => vec![uniform(6, 4, &mut rng, -2.0, 2.0)],
        _ => vec![uniform(m, d, &mut rng, -2.0, 2.0)],
    };
    if op == OpKind::Leaf {
        return Err(Error::Contract("leaves have no gradient rule".into()));
    }
    let out_shape = match op {
        OpKind::MatMul => (m, d),
        OpKind::Concat => (m, 2 * d),
        OpKind::RepeatRows => (m, d),
        OpKind::RepeatCols => (m, 2 * d),
        OpKind::NeighborMean => (n, 3),
        OpKind::CrossEntropy | OpKind::Sum => (1, 1),
        _ => (m, d),
    };
    let weights = uniform(out_shape.0, out_shape.1, &mut rng, -1.0, 1.0);
    let labels = vec![0, 3, 1, 2, 2, 1];
    let mask = vec![true, true, false, true, true, true];
    let dropout_seed: u64 = rng.gen();
    let graph = Arc::clone(graph);
    let names: Vec<String> = (0..inputs.len()).map(|i| format!("{op:?}.input{i}")).collect();

    let build = move |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
        if let Some(kind) = fault {
            tape.inject_sign_fault(kind);
        }
        let ids: Vec<ValueId> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let out = match op {
            OpKind::MatMul => tape.matmul(ids[0], ids[1])?,
            OpKind::RowSoftmax => tape.row_softmax(ids[0])?,
            OpKind::CumsumReverse => tape.cumsum_reverse(ids[0]),
            OpKind::LayerNorm => tape.layer_norm(ids[0], ids[1], ids[2], 1e-5)?,
            OpKind::Dropout => {
                let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
                tape.dropout(ids[0], 0.4, &mut r, true)?
            }
            OpKind::Concat => tape.concat(ids[0], ids[1])?,
            OpKind::CrossEntropy => tape.cross_entropy(ids[0], &labels, &mask)?,
            OpKind::Add => tape.add(ids[0], ids[1])?,
            OpKind::Sub => tape.sub(ids[0], ids[1])?,
            OpKind::Mul => tape.mul(ids[0], ids[1])?,
            OpKind::OneMinus => tape.one_minus(ids[0]),
            OpKind::Relu => tape.relu(ids[0]),
            OpKind::Sigmoid => tape.sigmoid(ids[0]),
            OpKind::RepeatRows => tape.repeat_rows(ids[0], m)?,
            OpKind::RepeatCols => tape.repeat_cols(ids[0], 2)?,
            OpKind::NeighborMean => tape.neighbor_mean(&graph, ids[0])?,
            OpKind::Sum => tape.sum(ids[0]),
            OpKind::Leaf => unreachable!(),
        };
        let w = tape.constant(weights.clone());
        let weighted = tape.mul(out, w)?;
        Ok((tape.sum(weighted), ids))
    };
    let first = std::mem::take(&mut inputs);
    let mut first = Some(first);
    finite_diff_check_resampled(
        &names,
        |attempt| {
            first.take().unwrap_or_else(|| {
                let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
                names.iter().map(|_| off_zero(m, d, &mut r)).collect()
            })
        },
        build,
        tol,
        8,
    )
}

/// Shape of the model used by the full-model gradient check.
pub fn grad_check_model_config() -> ModelConfig {
    ModelConfig {
        layers: 3,
        hidden: 8,
        chunk: 2,
        mlp_layers: 2,
        tie_gates: false,
        layernorm_every: 2,
        dropout_theta: 0.0,
        dropout_xi: 0.0,
        variant: Variant::OrderedSoftor,
        num_features: 5,
        num_classes: 3,
    }
}

/// Finite-difference check of every parameter of an ordered-softor model
/// on a 12-node random graph, loss = masked cross-entropy.
pub fn model_gradient_check(config: &ModelConfig, seed: u64, tolerance: f64) -> Result<GradReport> {
    let n = 12;
    let graph = Arc::new(random_graph(n, 0.3, seed));
    let features = random_features(n, config.num_features, seed.wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..config.num_classes)).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 4 != 3).collect();
    let template = OrderedGnn::<f64>::new(config.clone(), seed)?;
    let names: Vec<String> = template.params().iter().map(|p| p.name.clone()).collect();

    let build = |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
        let mut model = template.clone();
        model.params_mut().set_values(vals.to_vec())?;
        let mut streams = RngStreams::new(0);
        let mut pass = Pass {
            tape,
            rng: &mut streams,
            training: false,
        };
        let fwd = model.forward(&mut pass, &graph, &features, false)?;
        let loss = tape.cross_entropy(fwd.logits, &labels, &mask)?;
        Ok((loss, fwd.params))
    };
    finite_diff_check_resampled(
        &names,
        |attempt| {
            OrderedGnn::<f64>::new(config.clone(), seed.wrapping_add(attempt * 7919))
                .expect("config validated above")
                .params()
                .values()
        },
        build,
        tolerance,
        16,
    )
}

/// Outcome of a property audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub property: String,
    pub trials: usize,
    pub failures: usize,
    /// JSON description of the first failure, or of a found example for
    /// existence properties.
    pub witness: Option<String>,
}

impl AuditReport {
    fn new(property: &str) -> Self {
        AuditReport {
            property: property.to_string(),
            trials: 0,
            failures: 0,
            witness: None,
        }
    }

    fn fail(&mut self, witness: impl Serialize) {
        self.failures += 1;
        if self.witness.is_none() {
            self.witness = serde_json::to_string(&witness).ok();
        }
    }

    fn merge(&mut self, other: AuditReport) {
        self.trials += other.trials;
        self.failures += other.failures;
        if self.witness.is_none() {
            self.witness = other.witness;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} trials, {} failures",
            if self.passed() { "PASS" } else { "FAIL" },
            self.property,
            self.trials,
            self.failures
        )
    }
}

/// Hop distances by Floyd–Warshall; `usize::MAX` for unreachable pairs.
pub fn all_pairs_distances(graph: &Graph) -> Vec<Vec<usize>> {
    let n = graph.num_nodes();
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
        for &u in graph.neighbors(v) {
            row[u] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == inf {
                continue;
            }
            for j in 0..n {
                if d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Everything needed to replay a receptive-field check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveWitness {
    pub config: ModelConfig,
    pub params: Vec<Matrix<f64>>,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: Matrix<f64>,
    pub v: usize,
    pub u: usize,
    pub k: usize,
    pub delta: Vec<f64>,
    /// Whether `u` lies inside the k-hop ball of `v`.
    pub inside: bool,
}

impl ReceptiveWitness {
    /// Recomputes whether perturbing `u` changed `h_v^(k)`.
    pub fn changed(&self) -> Result<bool> {
        let mut model = OrderedGnn::new(self.config.clone(), 0)?;
        model.params_mut().set_values(self.params.clone())?;
        let graph = Arc::new(Graph::from_edges(self.n, &self.edges, EdgeOptions::default())?);
        let (_, before, _) = model.inspect(&graph, &self.features)?;
        let mut x = self.features.clone();
        for (o, d) in x.row_mut(self.u).iter_mut().zip(&self.delta) {
            *o += d;
        }
        let (_, after, _) = model.inspect(&graph, &x)?;
        Ok(!bits_equal(before[self.k].row(self.v), after[self.k].row(self.v)))
    }

    /// True when the recorded outcome breaks the receptive-field law.
    pub fn violates(&self) -> Result<bool> {
        let changed = self.changed()?;
        Ok(changed != self.inside)
    }
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Perturbs features of random nodes and checks that `h_v^(k)` moves
/// exactly when the perturbed node lies in the k-hop ball of `v`.
///
/// The ball comes from Floyd–Warshall distances; BFS balls from
/// [`Graph::k_hop_ball`] are checked against it as well. Inside the ball a
/// failure means no sampled delta (out of three) changed `h_v^(k)`.
pub fn receptive_field_audit(
    model: &OrderedGnn<f64>,
    graph: &Arc<Graph>,
    features: &Matrix<f64>,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if k > model.config().layers {
        return Err(Error::Contract(format!(
            "k = {k} exceeds the model's {} layers",
            model.config().layers
        )));
    }
    let n = graph.num_nodes();
    let dist = all_pairs_distances(graph);
    let (_, base, _) = model.inspect(graph, features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport::new("receptive field");
    let edges: Vec<(usize, usize)> = graph.edges().collect();
    let witness = |v, u, delta: Vec<f64>, inside| ReceptiveWitness {
        config: model.config().clone(),
        params: model.params().values(),
        n,
        edges: edges.clone(),
        features: features.clone(),
        v,
        u,
        k,
        delta,
        inside,
    };
    for _ in 0..trials {
        report.trials += 1;
        let v = rng.gen_range(0..n);
        let ball: Vec<usize> = (0..n).filter(|&u| dist[v][u] <= k).collect();
        if graph.k_hop_ball(v, k)? != ball {
            report.fail(serde_json::json!({"bfs_ball_mismatch": {"v": v, "k": k}}));
            continue;
        }
        let u = rng.gen_range(0..n);
        let inside = dist[v][u] <= k;
        let mut changed = false;
        let mut last = Vec::new();
        for _ in 0..if inside { 3 } else { 1 } {
            let delta: Vec<f64> = (0..features.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = features.clone();
            for (o, d) in x.row_mut(u).iter_mut().zip(&delta) {
                *o += d;
            }
            let (_, after, _) = model.inspect(graph, &x)?;
            last = delta;
            if !bits_equal(base[k].row(v), after[k].row(v)) {
                changed = true;
                break;
            }
        }
        if changed != inside {
            report.fail(witness(v, u, last, inside));
        }
    }
    Ok(report)
}

/// Model used by the receptive-field and permutation suites.
pub fn audit_model_config(layers: usize, num_features: usize) -> ModelConfig {
    ModelConfig {
        layers,
        hidden: 8,
        chunk: 2,
        mlp_layers: 1,
        tie_gates: false,
        layernorm_every: 2,
        dropout_theta: 0.0,
        dropout_xi: 0.0,
        variant: Variant::OrderedSoftor,
        num_features,
        num_classes: 3,
    }
}

/// [`receptive_field_audit`] over `graphs` random graphs with up to 30
/// nodes and every `k` in `0..=max_k`.
pub fn receptive_field_suite(graphs: usize, max_k: usize, seed: u64) -> Result<AuditReport> {
    let reports = (0..graphs)
        .into_par_iter()
        .map(|g| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(g as u64));
            let n = rng.gen_range(2..=30);
            let p = rng.gen_range(0.03..0.3);
            let graph = Arc::new(random_graph(n, p, rng.gen()));
            let features = random_features(n, 3, rng.gen());
            let model = OrderedGnn::new(audit_model_config(max_k, 3), rng.gen())?;
            let mut total = AuditReport::new("receptive field");
            for k in 0..=max_k {
                total.merge(receptive_field_audit(&model, &graph, &features, k, 6, rng.gen())?);
            }
            Ok(total)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = AuditReport::new("receptive field");
    reports.into_iter().for_each(|r| total.merge(r));
    Ok(total)
}

/// Everything needed to replay a permutation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationWitness {
    pub config: ModelConfig,
    pub params: Vec<Matrix<f64>>,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: Matrix<f64>,
    pub perm: Vec<usize>,
}

impl PermutationWitness {
    /// Re-runs the check; true when logits are not permuted bitwise.
    pub fn violates(&self) -> Result<bool> {
        let mut model = OrderedGnn::new(self.config.clone(), 0)?;
        model.params_mut().set_values(self.params.clone())?;
        let graph = Arc::new(Graph::from_edges(self.n, &self.edges, EdgeOptions::default())?);
        Ok(!permutation_holds(&model, &graph, &self.features, &self.perm)?)
    }
}

/// Old node `v` becomes `perm[v]` in the relabeled graph and features.
pub fn permutation_holds(
    model: &OrderedGnn<f64>,
    graph: &Arc<Graph>,
    features: &Matrix<f64>,
    perm: &[usize],
) -> Result<bool> {
    let base = model.predict(graph, features)?;
    let permuted = Arc::new(graph.permute(perm)?);
    let mut x = Matrix::zeros(features.rows(), features.cols());
    for (v, &pv) in perm.iter().enumerate() {
        x.row_mut(pv).copy_from_slice(features.row(v));
    }
    let out = model.predict(&permuted, &x)?;
    Ok(perm
        .iter()
        .enumerate()
        .all(|(v, &pv)| bits_equal(base.row(v), out.row(pv))))
}

/// Random relabelings must permute logits bitwise. The first trial uses
/// the identity permutation.
pub fn permutation_audit(
    model: &OrderedGnn<f64>,
    graph: &Arc<Graph>,
    features: &Matrix<f64>,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    let n = graph.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport::new("permutation equivariance");
    for t in 0..trials {
        report.trials += 1;
        let mut perm: Vec<usize> = (0..n).collect();
        if t > 0 {
            perm.shuffle(&mut rng);
        }
        if !permutation_holds(model, graph, features, &perm)? {
            report.fail(PermutationWitness {
                config: model.config().clone(),
                params: model.params().values(),
                n,
                edges: graph.edges().collect(),
                features: features.clone(),
                perm,
            });
        }
    }
    Ok(report)
}

/// Reference softmax in plain scalar code.
fn softmax_ref(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Expected binary split gate by enumerating every split position `i`:
/// the gate for outcome `i` is 1 on positions `0..=i` and 0 after.
pub fn enumerate_expected_gate(logits: &[f64]) -> Vec<f64> {
    let p = softmax_ref(logits);
    let d = logits.len();
    let mut g = vec![0.0; d];
    for (i, &pi) in p.iter().enumerate() {
        for gl in g.iter_mut().take(i + 1) {
            *gl += pi;
        }
    }
    g
}

fn cumax_rows(logits: &Matrix<f64>) -> Result<Matrix<f64>> {
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone());
    let g = cumax_left(&mut tape, z)?;
    Ok(tape.value(g))
}

fn softor_rows(prev: &Matrix<f64>, next: &Matrix<f64>) -> Result<Matrix<f64>> {
    let mut tape = Tape::new();
    let a = tape.constant(prev.clone());
    let b = tape.constant(next.clone());
    let g = softor(&mut tape, a, b)?;
    Ok(tape.value(g))
}

fn random_logits(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Matrix<f64> {
    let scale = rng.gen_range(0.1..8.0);
    uniform(rows, d, rng, -scale, scale)
}

#[derive(Debug, Serialize)]
struct RowWitness {
    logits: Vec<f64>,
    got: Vec<f64>,
    expected: Vec<f64>,
}

/// Gate-law audits over `rows` random logit rows:
///
/// 1. cumax equals the enumerated expectation of the split gate (1e-12)
/// 2. cumax and soft-OR outputs lie in `[0, 1]`
/// 3. cumax rows, and soft-OR of two such rows, are non-increasing
/// 4. the first cumax entry is 1 within 1e-9
/// 5. accumulated gates never decrease across layers (1e-12 slack), and the increase is
///    `(1 - g) * g_hat`
/// 6. the increase can favor either of two indices (existence)
pub fn gate_law_audit(rows: usize, seed: u64) -> Result<Vec<AuditReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enumeration = AuditReport::new("cumax equals enumerated expectation");
    let mut range = AuditReport::new("gate range [0,1]");
    let mut monotone = AuditReport::new("index monotonicity");
    let mut first = AuditReport::new("first gate entry is 1");
    let mut layer = AuditReport::new("layer monotonicity");
    let mut flex = AuditReport::new("flexible increments");
    let mut found_gt = None;
    let mut found_lt = None;

    let batch = 100;
    let mut done = 0;
    while done < rows {
        let d = rng.gen_range(2..=16);
        let r = batch.min(rows - done);
        done += r;
        let z1 = random_logits(&mut rng, r, d);
        let z2 = random_logits(&mut rng, r, d);
        let g1 = cumax_rows(&z1)?;
        let g2 = cumax_rows(&z2)?;
        let acc1 = g1.clone();
        let acc2 = softor_rows(&acc1, &g2)?;
        for i in 0..r {
            let rows_to_check = [g1.row(i), g2.row(i), acc2.row(i)];
            enumeration.trials += 1;
            let expected = enumerate_expected_gate(z1.row(i));
            if g1
                .row(i)
                .iter()
                .zip(&expected)
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                enumeration.fail(RowWitness {
                    logits: z1.row(i).to_vec(),
                    got: g1.row(i).to_vec(),
                    expected,
                });
            }
            range.trials += 1;
            if rows_to_check
                .iter()
                .flat_map(|row| row.iter())
                .any(|&v| !(0.0..=1.0 + 1e-12).contains(&v))
            {
                range.fail(z1.row(i));
            }
            monotone.trials += 1;
            if rows_to_check
                .iter()
                .any(|row| row.windows(2).any(|w| w[1] > w[0]))
            {
                monotone.fail((z1.row(i), z2.row(i)));
            }
            first.trials += 1;
            if (g1.get(i, 0) - 1.0).abs() > 1e-9 || (acc2.get(i, 0) - 1.0).abs() > 1e-9 {
                first.fail(z1.row(i));
            }
            layer.trials += 1;
            let bad = (0..d).any(|l| {
                let inc = acc2.get(i, l) - acc1.get(i, l);
                let predicted = (1.0 - acc1.get(i, l)) * g2.get(i, l);
                inc < -1e-12 || (inc - predicted).abs() > 1e-12
            });
            if bad {
                layer.fail((z1.row(i), z2.row(i)));
            }
            for a in 0..d {
                for b in a + 1..d {
                    let da = acc2.get(i, a) - acc1.get(i, a);
                    let db = acc2.get(i, b) - acc1.get(i, b);
                    if da > db + 1e-6 && found_gt.is_none() {
                        found_gt = Some((z1.row(i).to_vec(), z2.row(i).to_vec(), a, b));
                    }
                    if da + 1e-6 < db && found_lt.is_none() {
                        found_lt = Some((z1.row(i).to_vec(), z2.row(i).to_vec(), a, b));
                    }
                }
            }
        }
    }
    let (gt, lt) = flexibility_witnesses()?;
    flex.trials = 2;
    let gt = found_gt.or(gt);
    let lt = found_lt.or(lt);
    if gt.is_none() || lt.is_none() {
        flex.failures = 1;
    }
    flex.witness = serde_json::to_string(&serde_json::json!({
        "greater_at_lower_index": gt,
        "greater_at_higher_index": lt,
    }))
    .ok();
    Ok(vec![enumeration, range, monotone, first, layer, flex])
}

type FlexWitness = Option<(Vec<f64>, Vec<f64>, usize, usize)>;

/// Hand-built pair: the same unsaturated previous gate followed by next-
/// layer logits concentrated at index 1 or at the last index orders the
/// increments at indices 1 and 2 both ways.
pub fn flexibility_witnesses() -> Result<(FlexWitness, FlexWitness)> {
    let prev_logits = vec![0.0, 2.0, 0.0, 0.0];
    let prev = cumax_rows(&Matrix::from_rows(std::slice::from_ref(&prev_logits)))?;
    let mut out = Vec::new();
    for next_logits in [vec![0.0, 30.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 30.0]] {
        let next = cumax_rows(&Matrix::from_rows(std::slice::from_ref(&next_logits)))?;
        let acc = softor_rows(&prev, &next)?;
        let inc: Vec<f64> = (0..4).map(|l| acc.get(0, l) - prev.get(0, l)).collect();
        out.push((inc, next_logits));
    }
    let (i, j) = (1, 2);
    let gt = (out[0].0[i] > out[0].0[j]).then(|| (prev_logits.clone(), out[0].1.clone(), i, j));
    let lt = (out[1].0[i] < out[1].0[j]).then(|| (prev_logits.clone(), out[1].1.clone(), i, j));
    Ok((gt, lt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_is_exact() {
        let w = Matrix::from_rows(&[vec![0.3, -1.2, 2.5]]);
        let build = |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
            let x = tape.param(vals[0].clone());
            let sq = tape.mul(x, x)?;
            Ok((tape.sum(sq), vec![x]))
        };
        match finite_diff_check(&["w".into()], &[w], build, 1e-10).unwrap() {
            CheckOutcome::Report(r) => assert!(r.max_rel_err() <= 1e-10, "{r:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nondeterministic_builder_is_rejected() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let build = |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
            let bump = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) as f64;
            let x = tape.param(vals[0].map(|v| v + bump));
            Ok((tape.sum(x), vec![x]))
        };
        let err = finite_diff_check(&["w".into()], &[Matrix::zeros(1, 1)], build, 1e-6);
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn kink_points_are_flagged() {
        let build = |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
            let x = tape.param(vals[0].clone());
            let r = tape.relu(x);
            Ok((tape.sum(r), vec![x]))
        };
        let out = finite_diff_check(&["w".into()], &[Matrix::from_rows(&[vec![1e-8]])], build, 1e-6)
            .unwrap();
        assert!(matches!(out, CheckOutcome::NearKink(_)));
    }

    #[test]
    fn enumeration_uniform_example() {
        assert_eq!(enumerate_expected_gate(&[0.0; 4]), vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn floyd_warshall_on_path() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], EdgeOptions::default()).unwrap();
        let d = all_pairs_distances(&g);
        assert_eq!(d[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn witnesses_exist() {
        let (gt, lt) = flexibility_witnesses().unwrap();
        assert!(gt.is_some() && lt.is_some());
    }
}
