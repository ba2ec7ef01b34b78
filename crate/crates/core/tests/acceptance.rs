// Acceptance criteria 1–11, one PASS/FAIL line each.
//
// Criteria 5–11 read raw datasets from `$ORDERED_GNN_DATA` (default:
// `<workspace>/data`):
//
//   cora/cora.content, cora/cora.cites
//   citeseer/citeseer.content, citeseer/citeseer.cites
//   {texas,wisconsin,squirrel}/out1_node_feature_label.txt
//   {texas,wisconsin,squirrel}/out1_graph_edges.txt
//   {texas,wisconsin}/<name>_split_0.6_0.2_<i>.npz, i = 0..9
//
// A criterion whose files are missing prints FAIL with the reason BLOCKED.
// The process exits non-zero when a criterion that could run failed, or,
// with ACCEPTANCE_STRICT=1, when any criterion did not pass.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ordered_gnn::graph::synthetic::{random_features, random_graph};
use ordered_gnn::graph::{
    edge_homophily, generate_splits, load_geom_gcn, load_linqs, load_npz_split, Dataset,
    EdgeOptions, Graph, RawCounts, Split, SplitRatios,
};
use ordered_gnn::oracle;
use ordered_gnn::train::{multi_split_report, train_run, MultiSplitReport, Problem, TrainConfig};
use ordered_gnn::{ModelConfig, OrderedGnn, Variant};

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn data_root() -> PathBuf {
    std::env::var_os("ORDERED_GNN_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ops = oracle::op_gradient_suite(1).expect("op suite runs");
    let model = oracle::model_gradient_check(&oracle::grad_check_model_config(), 1, 1e-4)
        .expect("model check runs");
    let secs = start.elapsed().as_secs_f64();
    let worst_op = ops
        .iter()
        .max_by(|a, b| a.report.max_rel_err().total_cmp(&b.report.max_rel_err()))
        .expect("suite is not empty");
    let ok = ops.iter().all(|c| c.report.passed()) && model.passed() && secs < 120.0;
    verdict(
        ok,
        format!(
            "{} ops, worst {:?} {:.2e}; full model {:.2e} (≤ 1e-4); {secs:.1}s",
            ops.len(),
            worst_op.op,
            worst_op.report.max_rel_err(),
            model.max_rel_err()
        ),
    )
}

fn criterion_2() -> Outcome {
    let reports = oracle::gate_law_audit(10_000, 2).expect("gate audit runs");
    let ok = reports.iter().all(|r| r.passed());
    let detail = reports
        .iter()
        .map(|r| format!("{} {}/{}", r.property, r.failures, r.trials))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(ok, format!("failures/trials: {detail}"))
}

fn criterion_3() -> Outcome {
    let r = oracle::receptive_field_suite(50, 4, 3).expect("receptive audit runs");
    verdict(r.passed(), format!("50 graphs, k ≤ 4: {} trials, {} failures", r.trials, r.failures))
}

fn criterion_4() -> Outcome {
    let n = 12;
    let graph = Arc::new(random_graph(n, 0.25, 4));
    let x = random_features(n, 3, 5);
    let model = OrderedGnn::new(oracle::audit_model_config(4, 3), 6).expect("model builds");
    let r = oracle::permutation_audit(&model, &graph, &x, 20, 7).expect("permutation audit runs");
    verdict(r.passed(), format!("N=12: {} permutations, {} failures", r.trials, r.failures))
}

struct Loaded {
    graph: Graph,
    data: Dataset,
    raw: RawCounts,
}

fn missing(paths: &[PathBuf]) -> Option<String> {
    paths
        .iter()
        .find(|p| !p.exists())
        .map(|p| format!("BLOCKED: dataset not present ({})", p.display()))
}

fn linqs(name: &str) -> Result<Loaded, String> {
    let dir = data_root().join(name);
    let content = dir.join(format!("{name}.content"));
    let cites = dir.join(format!("{name}.cites"));
    if let Some(m) = missing(&[content.clone(), cites.clone()]) {
        return Err(m);
    }
    let (graph, data, raw) =
        load_linqs(name, content, cites, EdgeOptions::default()).map_err(|e| e.to_string())?;
    Ok(Loaded { graph, data, raw })
}

fn geom(name: &str) -> Result<Loaded, String> {
    let dir = data_root().join(name);
    if let Some(m) = missing(&[
        dir.join("out1_node_feature_label.txt"),
        dir.join("out1_graph_edges.txt"),
    ]) {
        return Err(m);
    }
    let (graph, data, raw) =
        load_geom_gcn(name, &dir, EdgeOptions::default(), None).map_err(|e| e.to_string())?;
    Ok(Loaded { graph, data, raw })
}

fn published_splits(name: &str, n: usize) -> Result<Vec<Split>, String> {
    let dir = data_root().join(name);
    let paths: Vec<PathBuf> = (0..10)
        .map(|i| dir.join(format!("{name}_split_0.6_0.2_{i}.npz")))
        .collect();
    if let Some(m) = missing(&paths) {
        return Err(m);
    }
    paths
        .iter()
        .map(|p| load_npz_split(p, n).map_err(|e| e.to_string()))
        .collect()
}

/// (name, linqs?, nodes, edges, features, classes, homophily if checked)
type Row = (&'static str, bool, usize, usize, usize, usize, Option<f64>);

const TABLE_1: [Row; 5] = [
    ("cora", true, 2708, 5429, 1433, 7, Some(0.81)),
    ("citeseer", true, 3327, 4732, 3703, 6, Some(0.74)),
    ("texas", false, 183, 295, 1703, 5, Some(0.21)),
    ("wisconsin", false, 251, 466, 1703, 5, None),
    ("squirrel", false, 5201, 198493, 2089, 5, Some(0.22)),
];

fn criterion_5() -> Outcome {
    let mut problems = Vec::new();
    let mut blocked = Vec::new();
    for (name, is_linqs, nodes, edges, features, classes, h) in TABLE_1 {
        let loaded = if is_linqs { linqs(name) } else { geom(name) };
        let l = match loaded {
            Ok(l) => l,
            Err(e) if e.starts_with("BLOCKED") => {
                blocked.push(name);
                continue;
            }
            Err(e) => {
                problems.push(format!("{name}: {e}"));
                continue;
            }
        };
        // Citation sets are tabulated by raw citation records, web sets by
        // undirected edges.
        let got_edges = if is_linqs { l.raw.edge_records } else { l.graph.num_edges() };
        let got = (l.graph.num_nodes(), got_edges, l.data.num_features(), l.data.num_classes);
        if got != (nodes, edges, features, classes) {
            problems.push(format!("{name}: got {got:?}, expected {:?}", (nodes, edges, features, classes)));
        }
        if let Some(h) = h {
            let got = edge_homophily(&l.graph, &l.data.labels, l.data.num_classes).unwrap_or(f64::NAN);
            if (got - h).abs() > 0.01 || got.is_nan() {
                problems.push(format!("{name}: homophily {got:.4}, expected {h} ± 0.01"));
            }
        }
    }
    if !blocked.is_empty() {
        let mut msg = format!(
            "BLOCKED: dataset not present for {} under {}",
            blocked.join(", "),
            data_root().display()
        );
        if !problems.is_empty() {
            msg.push_str(&format!("; also {}", problems.join("; ")));
        }
        return Outcome::Blocked(msg);
    }
    verdict(problems.is_empty(), if problems.is_empty() { "all counts match".into() } else { problems.join("; ") })
}

struct Hyper {
    dropout_theta: f64,
    dropout_xi: f64,
    l2_xi: f64,
    l2_theta: f64,
    lr: f64,
    mlp_layers: usize,
    tie_gates: bool,
}

const TEXAS: Hyper = Hyper { dropout_theta: 0.3, dropout_xi: 0.1, l2_xi: 5e-6, l2_theta: 0.05, lr: 0.005, mlp_layers: 1, tie_gates: true };
const WISCONSIN: Hyper = Hyper { dropout_theta: 0.0, dropout_xi: 0.2, l2_xi: 5e-6, l2_theta: 0.05, lr: 0.005, mlp_layers: 1, tie_gates: false };
const CORA: Hyper = Hyper { dropout_theta: 0.1, dropout_xi: 0.2, l2_xi: 5e-6, l2_theta: 5e-6, lr: 0.005, mlp_layers: 1, tie_gates: false };
const CORA_K2: Hyper = Hyper { dropout_theta: 0.4, dropout_xi: 0.4, l2_xi: 5e-8, l2_theta: 5e-4, lr: 0.01, mlp_layers: 1, tie_gates: true };
const CORA_K16: Hyper = Hyper { dropout_theta: 0.2, dropout_xi: 0.1, l2_xi: 5e-6, l2_theta: 0.05, lr: 0.005, mlp_layers: 2, tie_gates: true };
const CORA_K32: Hyper = Hyper { dropout_theta: 0.5, dropout_xi: 0.0, l2_xi: 0.05, l2_theta: 0.05, lr: 0.001, mlp_layers: 2, tie_gates: false };

fn configs(h: &Hyper, layers: usize, variant: Variant, data: &Dataset) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        layers,
        hidden: 256,
        chunk: 4,
        mlp_layers: h.mlp_layers,
        tie_gates: h.tie_gates,
        dropout_theta: h.dropout_theta,
        dropout_xi: h.dropout_xi,
        variant,
        num_features: data.num_features(),
        num_classes: data.num_classes,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        lr: h.lr,
        l2_theta: h.l2_theta,
        l2_xi: h.l2_xi,
        ..TrainConfig::default()
    };
    (model, train)
}

fn run(h: &Hyper, layers: usize, variant: Variant, l: &Loaded, splits: &[Split]) -> Result<MultiSplitReport, String> {
    let (m, t) = configs(h, layers, variant, &l.data);
    let problem = Problem::<f32>::new(Arc::new(l.graph.clone()), &l.data).map_err(|e| e.to_string())?;
    multi_split_report(&m, &problem, splits, &t).map_err(|e| e.to_string())
}

fn heterophily_setup(name: &str) -> Result<(Loaded, Vec<Split>), String> {
    let l = geom(name)?;
    let splits = published_splits(name, l.graph.num_nodes())?;
    Ok((l, splits))
}

/// Cora uses ten seeded 48/32/20 splits.
fn cora_setup() -> Result<(Loaded, Vec<Split>), String> {
    let l = linqs("cora")?;
    let splits = generate_splits(l.graph.num_nodes(), &l.data.labels, 0, SplitRatios::default(), 10)
        .map_err(|e| e.to_string())?
        .splits;
    Ok((l, splits))
}

fn outcome_of(r: Result<Outcome, String>) -> Outcome {
    match r {
        Ok(o) => o,
        Err(e) if e.starts_with("BLOCKED") => Outcome::Blocked(e),
        Err(e) => Outcome::Fail(e),
    }
}

fn mean_threshold(setup: Result<(Loaded, Vec<Split>), String>, h: &Hyper, floor: f64, paper: &str) -> Outcome {
    outcome_of(setup.and_then(|(l, s)| {
        let r = run(h, 8, Variant::OrderedSoftor, &l, &s)?;
        let mean = 100.0 * r.test_mean;
        Ok(verdict(
            mean >= floor,
            format!("{} (need mean ≥ {floor}; paper {paper})", r.summary_line()),
        ))
    }))
}

fn criterion_9() -> Outcome {
    outcome_of(cora_setup().and_then(|(l, s)| {
        let a2 = run(&CORA_K2, 2, Variant::OrderedSoftor, &l, &s)?.test_mean * 100.0;
        let a16 = run(&CORA_K16, 16, Variant::OrderedSoftor, &l, &s)?.test_mean * 100.0;
        Ok(verdict(a16 >= a2 - 2.0, format!("acc(2) {a2:.2}, acc(16) {a16:.2}; need acc(16) ≥ acc(2) − 2.0")))
    }))
}

fn criterion_10() -> Outcome {
    outcome_of(heterophily_setup("wisconsin").and_then(|(l, s)| {
        let full = run(&WISCONSIN, 8, Variant::OrderedSoftor, &l, &s)?.test_mean * 100.0;
        let bare = run(&WISCONSIN, 8, Variant::Bare, &l, &s)?.test_mean * 100.0;
        let simple = run(&WISCONSIN, 8, Variant::SimpleGating, &l, &s)?.test_mean * 100.0;
        Ok(verdict(
            full - bare >= 25.0 && full >= simple - 1.0,
            format!("ordered-softor {full:.2}, bare {bare:.2}, simple gating {simple:.2}; need +25.0 over bare and ≥ simple − 1.0"),
        ))
    }))
}

fn saturated_fraction(stats: &[ordered_gnn::model::ChannelStats]) -> f64 {
    stats.iter().filter(|c| c.median > 0.99).count() as f64 / stats.len() as f64
}

fn criterion_11() -> Outcome {
    outcome_of(cora_setup().and_then(|(l, s)| {
        let (m, t) = configs(&CORA_K32, 32, Variant::OrderedSoftor, &l.data);
        let graph = Arc::new(l.graph.clone());
        let problem = Problem::<f32>::new(Arc::clone(&graph), &l.data).map_err(|e| e.to_string())?;
        let mut model = OrderedGnn::<f32>::new(m, 0).map_err(|e| e.to_string())?;
        train_run(&mut model, &problem, &s[0], &t).map_err(|e| e.to_string())?;
        let (_, _, trace) = model.inspect(&graph, &problem.features).map_err(|e| e.to_string())?;
        let f4 = saturated_fraction(&trace.layers[3].channel_stats());
        let f32_ = saturated_fraction(&trace.layers[31].channel_stats());
        Ok(verdict(
            f32_ > f4,
            format!("channels with median > 0.99: layer 4 {f4:.3}, layer 32 {f32_:.3}"),
        ))
    }))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<(usize, fn() -> Outcome)> = vec![
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, || mean_threshold(heterophily_setup("texas"), &TEXAS, 80.0, "86.22 ± 4.12")),
        (7, || mean_threshold(heterophily_setup("wisconsin"), &WISCONSIN, 83.0, "88.04 ± 3.63")),
        (8, || mean_threshold(cora_setup(), &CORA, 86.0, "88.37 ± 0.75")),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut hard_failures = 0;
    let mut not_passed = 0;
    for (id, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        match check() {
            Outcome::Pass(d) => println!("PASS criterion {id}: {d}"),
            Outcome::Fail(d) => {
                println!("FAIL criterion {id}: {d}");
                hard_failures += 1;
                not_passed += 1;
            }
            Outcome::Blocked(d) => {
                println!("FAIL criterion {id}: {d}");
                not_passed += 1;
            }
        }
    }
    if hard_failures > 0 || (strict && not_passed > 0) {
        std::process::exit(1);
    }
}
