//! The `ognn` command line: ingest, train, gates, grid, homophily and
//! verify.
//!
//! Exit codes: 0 success, 1 validation or usage error (including failed
//! audits), 2 runtime error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::checkpoint::{check_compatible, stored_precision, Checkpoint};
use crate::config::RunConfigFile;
use crate::error::{Error, Result};
use crate::graph::{
    edge_homophily, generate_splits, load_features, load_geom_gcn, load_linqs, load_npz_split,
    read_feature_container, read_labels, Bundle, Dataset, EdgeOptions, EmptyFeatures, Graph,
    RawCounts, SourceFormat, SplitRatios, SplitSet, SplitSource, FEATURE_MAGIC,
};
use crate::matrix::{Matrix, Precision, Real};
use crate::model::OrderedGnn;
use crate::oracle;
use crate::train::grid::{
    grid_search, leaderboard_tsv, parse_leaderboard, row_line, GridSpec, LeaderboardRow,
};
use crate::train::{split_seed, train_run, MultiSplitReport, Problem, RunResult, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "ognn", version, about = "Ordered gating GNN: ingest, train, inspect gates, search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw dataset files into a bundle directory.
    Ingest(IngestArgs),
    /// Train on every split selected by a run config.
    Train(TrainArgs),
    /// Export gate statistics of a checkpoint on a bundle.
    Gates(GatesArgs),
    /// Grid search over regularization and optimizer settings.
    Grid(GridArgs),
    /// Print the edge homophily of a bundle.
    Homophily(HomophilyArgs),
    /// Run the gradient, gate-law, receptive-field and permutation audits.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IngestFormat {
    Linqs,
    GeomGcn,
    EdgeList,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: IngestFormat,
    #[arg(long)]
    pub name: String,
    /// LINQS `.content` file.
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// LINQS `.cites` file.
    #[arg(long)]
    pub cites: Option<PathBuf>,
    /// Directory with the geom-gcn `out1_*` files.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Feature width for geom-gcn files listing active columns.
    #[arg(long)]
    pub sparse_width: Option<usize>,
    /// Edge list, one `u v` pair per line.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Labels, one class index per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Feature matrix: binary container or delimited text. Without it an
    /// identity feature matrix is used.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Published `.npz` split files, in order.
    #[arg(long = "npz-split")]
    pub npz_splits: Vec<PathBuf>,
    /// Generate this many seeded random splits instead.
    #[arg(long)]
    pub generate_splits: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Swap the endpoints of every edge record.
    #[arg(long)]
    pub reverse_edges: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by commands that read a run config.
#[derive(Debug, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub config: PathBuf,
    /// `section.key=value`, applied in order after the file.
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
}

impl RunFlags {
    /// Every override, with `--seed` and `--deterministic` last.
    pub fn overrides(&self) -> Vec<String> {
        let mut all = self.set.clone();
        if let Some(s) = self.seed {
            all.push(format!("train.seed={s}"));
        }
        if self.deterministic {
            all.push("train.deterministic=true".into());
        }
        all
    }

    pub fn load(&self) -> Result<RunConfigFile> {
        let mut cfg = RunConfigFile::load(&self.config, &self.overrides())?;
        if let Some(b) = &cfg.dataset.bundle {
            if let Ok(abs) = std::fs::canonicalize(b) {
                cfg.dataset.bundle = Some(abs);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GatesArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Run config the checkpoint must match.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridPreset {
    Standard,
    OverSmoothing,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// TOML grid specification.
    #[arg(long, conflicts_with = "preset")]
    pub grid: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<GridPreset>,
    /// Evaluate a seeded random subset of this many cells.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HomophilyArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fewer trials per audit.
    #[arg(long)]
    pub quick: bool,
}

/// Parses `args`, runs the command, and returns the exit code.
pub fn main_with<I, S>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<i32> {
    match cli.command {
        Command::Ingest(a) => ingest(&a, out).map(|_| 0),
        Command::Train(a) => train(&a, out).map(|_| 0),
        Command::Gates(a) => gates(&a, out).map(|_| 0),
        Command::Grid(a) => grid(&a, out).map(|_| 0),
        Command::Homophily(a) => homophily(&a, out).map(|_| 0),
        Command::Verify(a) => verify(&a, out),
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str, problems: &mut Vec<String>) -> Option<&'a PathBuf> {
    if v.is_none() {
        problems.push(format!("--{flag} is required for this format"));
    }
    v.as_ref()
}

/// Builds a bundle from raw files; see [`IngestArgs`].
pub fn ingest_bundle(a: &IngestArgs) -> Result<Bundle> {
    let opts = EdgeOptions {
        reverse: a.reverse_edges,
        ..EdgeOptions::default()
    };
    let mut problems = Vec::new();
    let (graph, dataset, raw, source) = match a.format {
        IngestFormat::Linqs => {
            let content = required(&a.content, "content", &mut problems);
            let cites = required(&a.cites, "cites", &mut problems);
            let (Some(content), Some(cites)) = (content, cites) else {
                return Err(Error::Validation(problems));
            };
            let (g, d, r) = load_linqs(&a.name, content, cites, opts)?;
            (g, d, r, SourceFormat::Linqs)
        }
        IngestFormat::GeomGcn => {
            let Some(dir) = required(&a.dir, "dir", &mut problems) else {
                return Err(Error::Validation(problems));
            };
            let (g, d, r) = load_geom_gcn(&a.name, dir, opts, a.sparse_width)?;
            (g, d, r, SourceFormat::GeomGcn)
        }
        IngestFormat::EdgeList => {
            let edges = required(&a.edges, "edges", &mut problems);
            let labels = required(&a.labels, "labels", &mut problems);
            let (Some(edges), Some(labels)) = (edges, labels) else {
                return Err(Error::Validation(problems));
            };
            let n = count_data_lines(labels)?;
            let labels = read_labels(labels, n)?;
            let graph = Graph::load_edge_list(edges, n, opts)?;
            let classes = labels.iter().max().map_or(1, |&m| m + 1);
            let features = match &a.features {
                Some(p) => read_any_features(p, n)?,
                None => EmptyFeatures::Identity { width: n }.materialize(n),
            };
            let dataset = Dataset::new(a.name.clone(), features, labels, classes)?;
            let raw = RawCounts {
                edge_records: count_data_lines(edges)?,
                dangling_records: 0,
            };
            (graph, dataset, raw, SourceFormat::EdgeList)
        }
    };
    let n = graph.num_nodes();
    let splits = if !a.npz_splits.is_empty() {
        if a.generate_splits.is_some() {
            return Err(Error::Validation(vec![
                "--npz-split and --generate-splits are mutually exclusive".into(),
            ]));
        }
        let splits = a
            .npz_splits
            .iter()
            .map(|p| load_npz_split(p, n))
            .collect::<Result<Vec<_>>>()?;
        Some(SplitSet {
            splits,
            source: SplitSource::Files {
                paths: a.npz_splits.clone(),
            },
            warnings: Vec::new(),
        })
    } else if let Some(count) = a.generate_splits {
        Some(generate_splits(
            n,
            &dataset.labels,
            a.seed,
            SplitRatios::default(),
            count,
        )?)
    } else {
        None
    };
    Bundle::new(graph, dataset, splits, source, raw)
}

fn count_data_lines(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .count())
}

fn read_any_features(path: &Path, n: usize) -> Result<Matrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        return read_feature_container(path);
    }
    let text = String::from_utf8_lossy(&bytes);
    let width = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map_or(0, |l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .count()
        });
    load_features(path, n, width)
}

fn ingest(a: &IngestArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let bundle = ingest_bundle(a)?;
    bundle.write(&a.out)?;
    let m = &bundle.manifest;
    let mut text = format!(
        "bundle {}: nodes {} edges {} (records {}, dangling {}) features {} classes {} homophily {:.2} splits {}\n",
        a.out.display(),
        m.nodes,
        m.edges,
        m.edge_records,
        m.dangling_records,
        m.features,
        m.classes,
        m.homophily,
        m.splits
    );
    if let Some(s) = &bundle.splits {
        for w in &s.warnings {
            text.push_str(&format!("warning: {w}\n"));
        }
    }
    emit(out, &text)
}

/// Everything `ognn train` produces for one config.
pub struct TrainOutput<T> {
    pub report: MultiSplitReport,
    /// Model trained on the first split.
    pub model: OrderedGnn<T>,
    pub train: TrainConfig,
}

/// Trains on every split, as [`crate::train::multi_split_report`] does,
/// keeping the first split's model.
pub fn train_splits<T: Real>(cfg: &RunConfigFile, bundle: &Bundle) -> Result<TrainOutput<T>> {
    let splits = cfg.resolve_splits(bundle)?;
    if splits.is_empty() {
        return Err(Error::Validation(vec!["no splits selected".into()]));
    }
    let d = &bundle.dataset;
    let model_cfg = cfg.model_config(d.num_features(), d.num_classes);
    let train_cfg = cfg.train_config();
    let problem = Problem::<T>::new(Arc::new(bundle.graph.clone()), d)?;
    let mut runs: Vec<(RunResult, OrderedGnn<T>)> = splits
        .splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            let seed = split_seed(train_cfg.seed, i);
            let mut model = OrderedGnn::new(model_cfg.clone(), seed)?;
            let run_cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let r = train_run(&mut model, &problem, split, &run_cfg)?;
            Ok((r, model))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(runs.len());
    let mut first = None;
    for (r, m) in runs.drain(..) {
        results.push(r);
        first.get_or_insert(m);
    }
    Ok(TrainOutput {
        report: MultiSplitReport::from_runs(results),
        model: first.expect("at least one split"),
        train: train_cfg,
    })
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Report text. The first line carries the start time; everything after
/// it depends only on inputs and seed.
pub fn train_report(cfg: &RunConfigFile, overrides: &[String], report: &MultiSplitReport) -> String {
    let mut s = format!("# ognn train report, started at unix time {}\n", unix_now());
    s.push_str(&format!(
        "overrides: {}\n",
        if overrides.is_empty() {
            "(none)".to_string()
        } else {
            overrides.join(" ")
        }
    ));
    s.push_str("--- resolved config ---\n");
    s.push_str(&cfg.to_toml());
    for (i, r) in report.runs.iter().enumerate() {
        s.push_str(&format!("--- split {i} ---\n"));
        s.push_str(&r.epoch_lines());
        s.push_str(&format!(
            "split {i}: best_epoch {} epochs_run {} val {} test {}\n",
            r.best_epoch, r.epochs_run, r.best_val_acc, r.test_acc
        ));
    }
    s.push_str("--- summary ---\n");
    s.push_str(&report.summary_line());
    s.push('\n');
    s
}

/// Deterministic JSON summary: per-split results without wall time.
pub fn summary_json(report: &MultiSplitReport) -> String {
    let runs: Vec<serde_json::Value> = report
        .runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "best_val_acc": r.best_val_acc,
                "test_acc": r.test_acc,
                "best_epoch": r.best_epoch,
                "epochs_run": r.epochs_run,
            })
        })
        .collect();
    let v = serde_json::json!({
        "val_mean": report.val_mean,
        "val_std": report.val_std,
        "test_mean": report.test_mean,
        "test_std": report.test_std,
        "runs": runs,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("summary serializes");
    s.push('\n');
    s
}

fn train(a: &TrainArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = a.run.load()?;
    let bundle = cfg.load_bundle()?;
    create_dir(&a.out)?;
    let overrides = a.run.overrides();
    let report = match cfg.train.precision {
        Precision::F64 => train_and_save::<f64>(&cfg, &bundle, &a.out)?,
        Precision::F32 => train_and_save::<f32>(&cfg, &bundle, &a.out)?,
    };
    write_file(&a.out.join("report.txt"), &train_report(&cfg, &overrides, &report))?;
    write_file(&a.out.join("summary.json"), &summary_json(&report))?;
    write_file(&a.out.join("config.toml"), &cfg.to_toml())?;
    emit(out, &format!("{}\n", report.summary_line()))
}

fn train_and_save<T: Real>(cfg: &RunConfigFile, bundle: &Bundle, dir: &Path) -> Result<MultiSplitReport> {
    let result = train_splits::<T>(cfg, bundle)?;
    let mut ck = Checkpoint::new(result.model);
    ck.train = Some(result.train.clone());
    ck.rng = Some((split_seed(result.train.seed, 0), Default::default()));
    ck.save(dir.join("model.ckpt"))?;
    Ok(result.report)
}

fn gates(a: &GatesArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let bundle = Bundle::read(&a.bundle)?;
    let expected = match &a.config {
        Some(p) => {
            let cfg = RunConfigFile::load(p, &a.set)?;
            let d = &bundle.dataset;
            Some(cfg.model_config(d.num_features(), d.num_classes))
        }
        None => None,
    };
    create_dir(&a.out)?;
    let (stats, points, layers) = match stored_precision(&a.checkpoint)? {
        Precision::F64 => gate_files::<f64>(&a.checkpoint, &bundle, expected.as_ref())?,
        Precision::F32 => gate_files::<f32>(&a.checkpoint, &bundle, expected.as_ref())?,
    };
    write_file(&a.out.join("gate_stats.tsv"), &stats)?;
    write_file(&a.out.join("split_points.tsv"), &points)?;
    emit(
        out,
        &format!(
            "wrote gate statistics for {layers} layers to {}\n",
            a.out.display()
        ),
    )
}

/// Gate statistics and split points of a checkpoint on a bundle, as
/// tab-separated text.
pub fn gate_files<T: Real>(
    checkpoint: &Path,
    bundle: &Bundle,
    expected: Option<&crate::model::ModelConfig>,
) -> Result<(String, String, usize)> {
    let ck = Checkpoint::<T>::load(checkpoint)?;
    let stored = ck.model.config();
    if let Some(e) = expected {
        check_compatible(stored, e)?;
    }
    let d = &bundle.dataset;
    if stored.num_features != d.num_features() || stored.num_classes != d.num_classes {
        return Err(Error::Versioning(format!(
            "checkpoint expects {} features and {} classes, bundle has {} and {}",
            stored.num_features,
            stored.num_classes,
            d.num_features(),
            d.num_classes
        )));
    }
    let graph = Arc::new(bundle.graph.clone());
    let (_, _, trace) = ck.model.inspect(&graph, &d.features.cast())?;
    Ok((trace.stats_tsv(), trace.split_points_tsv(), trace.layers.len()))
}

fn load_grid_spec(a: &GridArgs) -> Result<GridSpec> {
    match (&a.grid, a.preset) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                line: 0,
                msg: e.message().to_string(),
            })
        }
        (None, Some(GridPreset::Standard)) => Ok(GridSpec::standard()),
        (None, Some(GridPreset::OverSmoothing)) => Ok(GridSpec::over_smoothing()),
        (None, None) => Err(Error::Validation(vec!["one of --grid or --preset is required".into()])),
    }
}

fn grid(a: &GridArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = a.run.load()?;
    let spec = load_grid_spec(a)?;
    spec.validate()?;
    let bundle = cfg.load_bundle()?;
    create_dir(&a.out)?;
    let text = match cfg.train.precision {
        Precision::F64 => run_grid::<f64>(&cfg, &spec, a.budget, &bundle, &a.out)?,
        Precision::F32 => run_grid::<f32>(&cfg, &spec, a.budget, &bundle, &a.out)?,
    };
    emit(out, &text)
}

/// Runs the grid, resuming from `dir/progress.tsv` when present, and
/// writes `leaderboard.tsv` and `best.toml` into `dir`.
pub fn run_grid<T: Real>(
    cfg: &RunConfigFile,
    spec: &GridSpec,
    budget: Option<usize>,
    bundle: &Bundle,
    dir: &Path,
) -> Result<String> {
    let splits = cfg.resolve_splits(bundle)?;
    let d = &bundle.dataset;
    let model_cfg = cfg.model_config(d.num_features(), d.num_classes);
    let train_cfg = cfg.train_config();
    let problem = Problem::<T>::new(Arc::new(bundle.graph.clone()), d)?;
    let progress = dir.join("progress.tsv");
    let completed = if progress.exists() {
        let text = std::fs::read_to_string(&progress).map_err(|e| Error::io(&progress, e))?;
        parse_leaderboard(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: progress.clone(),
                line,
                msg,
            },
            other => other,
        })?
    } else {
        Vec::new()
    };
    let sink = std::sync::Mutex::new(());
    let on_row = |row: &LeaderboardRow| -> Result<()> {
        let _guard = sink.lock().unwrap();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&progress)
            .map_err(|e| Error::io(&progress, e))?;
        writeln!(f, "{}", row_line(row)).map_err(|e| Error::io(&progress, e))
    };
    let outcome = grid_search(
        spec,
        &model_cfg,
        &train_cfg,
        &problem,
        &splits.splits,
        budget,
        completed,
        &on_row,
    )?;
    write_file(&dir.join("leaderboard.tsv"), &leaderboard_tsv(&outcome.leaderboard))?;
    let mut summary = format!("{} cells evaluated\n", outcome.leaderboard.len());
    if let Some((m, t)) = outcome.best_configs(&model_cfg, &train_cfg) {
        let mut best = cfg.clone();
        best.set_from(&m, &t);
        write_file(&dir.join("best.toml"), &best.to_toml())?;
        let row = &outcome.leaderboard[0];
        summary.push_str(&format!("best: {}\n", row_line(row)));
    } else {
        summary.push_str("no cell finished successfully\n");
    }
    Ok(summary)
}

fn homophily(a: &HomophilyArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let bundle = Bundle::read(&a.bundle)?;
    let d = &bundle.dataset;
    let h = edge_homophily(&bundle.graph, &d.labels, d.num_classes)?;
    emit(out, &format!("{}\t{}\n", d.name, format_homophily(h)))
}

/// Two-decimal presentation of an edge homophily score.
pub fn format_homophily(h: f64) -> String {
    format!("{h:.2}")
}

/// Runs every audit; returns the report lines and whether all passed.
pub fn verify_suite(seed: u64, quick: bool) -> Result<(Vec<String>, bool)> {
    let mut lines = Vec::new();
    let mut ok = true;
    for c in oracle::op_gradient_suite(seed)? {
        ok &= c.report.passed();
        lines.push(format!(
            "{} gradient {:?}: max relative error {:.3e} (tolerance {:.0e})",
            if c.report.passed() { "PASS" } else { "FAIL" },
            c.op,
            c.report.max_rel_err(),
            c.report.tolerance
        ));
    }
    let r = oracle::model_gradient_check(
        &oracle::grad_check_model_config(),
        seed,
        oracle::NONLINEAR_OP_TOL,
    )?;
    ok &= r.passed();
    lines.push(format!(
        "{} gradient full model: max relative error {:.3e} (tolerance {:.0e})",
        if r.passed() { "PASS" } else { "FAIL" },
        r.max_rel_err(),
        r.tolerance
    ));
    let rows = if quick { 1000 } else { 10_000 };
    let mut audits = oracle::gate_law_audit(rows, seed)?;
    audits.push(oracle::receptive_field_suite(if quick { 10 } else { 50 }, 4, seed)?);
    let n = 12;
    let graph = Arc::new(crate::graph::synthetic::random_graph(n, 0.25, seed));
    let x = crate::graph::synthetic::random_features(n, 3, seed.wrapping_add(1));
    let model = OrderedGnn::new(oracle::audit_model_config(4, 3), seed)?;
    audits.push(oracle::permutation_audit(&model, &graph, &x, 20, seed)?);
    for a in audits {
        ok &= a.passed();
        lines.push(a.line());
        if let (false, Some(w)) = (a.passed(), &a.witness) {
            lines.push(format!("  witness: {w}"));
        }
    }
    Ok((lines, ok))
}

fn verify(a: &VerifyArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let (lines, ok) = verify_suite(a.seed, a.quick)?;
    emit(out, &(lines.join("\n") + "\n"))?;
    Ok(if ok { 0 } else { 1 })
}
