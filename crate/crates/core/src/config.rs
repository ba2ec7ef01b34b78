//! TOML run configuration.
//!
//! ```toml
//! [dataset]
//! bundle = "data/texas"
//!
//! [model]
//! layers = 8
//! hidden = 256
//! chunk = 4
//! variant = "ordered-softor"
//!
//! [train]
//! lr = 0.005
//! dropout_theta = 0.3
//! dropout_xi = 0.1
//! l2_theta = 5e-6
//! l2_xi = 0.05
//!
//! [splits]
//! mode = "bundle"
//! ```
//!
//! Every section and key is optional except `dataset.bundle`; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_splits, Bundle, SplitRatios, SplitSet};
use crate::matrix::Precision;
use crate::model::{ModelConfig, Variant};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub splits: SplitsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Directory written by `ognn ingest`.
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub layers: usize,
    pub hidden: usize,
    pub chunk: usize,
    pub mlp_layers: usize,
    pub tie_gates: bool,
    pub variant: Variant,
    pub layernorm_every: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            layers: m.layers,
            hidden: m.hidden,
            chunk: m.chunk,
            mlp_layers: m.mlp_layers,
            tie_gates: m.tie_gates,
            variant: m.variant,
            layernorm_every: m.layernorm_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub dropout_theta: f64,
    pub dropout_xi: f64,
    pub l2_theta: f64,
    pub l2_xi: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub deterministic: bool,
    pub precision: Precision,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.lr,
            dropout_theta: 0.0,
            dropout_xi: 0.0,
            l2_theta: t.l2_theta,
            l2_xi: t.l2_xi,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            deterministic: t.deterministic,
            precision: t.precision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Splits stored in the bundle.
    #[default]
    Bundle,
    /// Fresh seeded random splits.
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitsSection {
    pub mode: SplitMode,
    /// Generated mode only.
    pub count: usize,
    pub seed: u64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// Use only the first `limit` splits.
    pub limit: Option<usize>,
}

impl Default for SplitsSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitsSection {
            mode: SplitMode::Bundle,
            count: 10,
            seed: 0,
            train: r.train,
            val: r.val,
            test: r.test,
            limit: None,
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.message().to_string()]))
    }

    /// Reads `path`, applies `key=value` overrides in order, and validates.
    /// Relative dataset paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_of(&text, e.span().map_or(0, |s| s.start)),
            msg: e.message().to_string(),
        })?;
        apply_overrides(&mut value, overrides)?;
        let mut problems = strip_unknown_keys(&mut value);
        let mut cfg: RunConfigFile = match value.try_into() {
            Ok(c) => c,
            Err(e) => {
                let e: toml::de::Error = e;
                problems.push(e.message().to_string());
                return Err(Error::Validation(problems));
            }
        };
        if let (Some(b), Some(base)) = (&cfg.dataset.bundle, path.parent()) {
            if b.is_relative() {
                cfg.dataset.bundle = Some(base.join(b));
            }
        }
        if let Err(Error::Validation(more)) = cfg.validate() {
            problems.extend(more);
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn model_config(&self, num_features: usize, num_classes: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            layers: m.layers,
            hidden: m.hidden,
            chunk: m.chunk,
            mlp_layers: m.mlp_layers,
            tie_gates: m.tie_gates,
            layernorm_every: m.layernorm_every,
            dropout_theta: self.train.dropout_theta,
            dropout_xi: self.train.dropout_xi,
            variant: m.variant,
            num_features,
            num_classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            l2_theta: t.l2_theta,
            l2_xi: t.l2_xi,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            deterministic: t.deterministic,
            precision: t.precision,
        }
    }

    /// Writes the model and train settings of `model` and `train` back into
    /// this file's sections.
    pub fn set_from(&mut self, model: &ModelConfig, train: &TrainConfig) {
        self.model = ModelSection {
            layers: model.layers,
            hidden: model.hidden,
            chunk: model.chunk,
            mlp_layers: model.mlp_layers,
            tie_gates: model.tie_gates,
            variant: model.variant,
            layernorm_every: model.layernorm_every,
        };
        self.train = TrainSection {
            lr: train.lr,
            dropout_theta: model.dropout_theta,
            dropout_xi: model.dropout_xi,
            l2_theta: train.l2_theta,
            l2_xi: train.l2_xi,
            max_epochs: train.max_epochs,
            patience: train.patience,
            seed: train.seed,
            deterministic: train.deterministic,
            precision: train.precision,
        };
    }

    /// Every problem in the file, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dataset.bundle.is_none() {
            problems.push("dataset.bundle is required".to_string());
        }
        problems.extend(self.model_config(1, 1).problems());
        problems.extend(self.train_config().problems());
        if self.splits.mode == SplitMode::Generated && self.splits.count == 0 {
            problems.push("splits.count must be >= 1".into());
        }
        if self.splits.limit == Some(0) {
            problems.push("splits.limit must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn load_bundle(&self) -> Result<Bundle> {
        let dir = self
            .dataset
            .bundle
            .as_ref()
            .ok_or_else(|| Error::Validation(vec!["dataset.bundle is required".into()]))?;
        Bundle::read(dir)
    }

    /// Splits selected by the `[splits]` section.
    pub fn resolve_splits(&self, bundle: &Bundle) -> Result<SplitSet> {
        let s = &self.splits;
        let mut set = match s.mode {
            SplitMode::Bundle => bundle.splits.clone().ok_or_else(|| {
                Error::Validation(vec![format!(
                    "bundle `{}` has no stored splits; set splits.mode = \"generated\"",
                    bundle.manifest.name
                )])
            })?,
            SplitMode::Generated => generate_splits(
                bundle.graph.num_nodes(),
                &bundle.dataset.labels,
                s.seed,
                SplitRatios {
                    train: s.train,
                    val: s.val,
                    test: s.test,
                },
                s.count,
            )?,
        };
        if let Some(limit) = s.limit {
            set.splits.truncate(limit);
        }
        Ok(set)
    }
}

/// Removes keys the schema does not know and names each one.
fn strip_unknown_keys(doc: &mut toml::Table) -> Vec<String> {
    let schema = RunConfigFile {
        dataset: DatasetSection {
            bundle: Some(PathBuf::new()),
        },
        splits: SplitsSection {
            limit: Some(1),
            ..SplitsSection::default()
        },
        ..RunConfigFile::default()
    };
    let known = toml::Table::try_from(&schema).expect("schema serializes");
    let mut problems = Vec::new();
    doc.retain(|section, value| match (known.get(section), value) {
        (Some(toml::Value::Table(fields)), toml::Value::Table(given)) => {
            given.retain(|key, _| {
                let ok = fields.contains_key(key);
                if !ok {
                    problems.push(format!("unknown key `{section}.{key}`"));
                }
                ok
            });
            true
        }
        (Some(_), _) => true,
        (None, _) => {
            problems.push(format!("unknown section `{section}`"));
            false
        }
    });
    problems
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Applies dotted `section.key=value` overrides. Values parse as TOML
/// scalars; anything that does not parse is taken as a string.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    let mut problems = Vec::new();
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            problems.push(format!("override `{o}` is not key=value"));
            continue;
        };
        let parts: Vec<&str> = key.trim().split('.').collect();
        if let Err(p) = insert_path(doc, &parts, parse_scalar(raw.trim())) {
            problems.push(format!("override `{key}`: `{p}` is not a section"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

fn insert_path(table: &mut toml::Table, parts: &[&str], value: toml::Value) -> Result<(), String> {
    match parts {
        [] => Ok(()),
        [last] => {
            table.insert(last.to_string(), value);
            Ok(())
        }
        [head, rest @ ..] => match table
            .entry(head.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        {
            toml::Value::Table(t) => insert_path(t, rest, value),
            _ => Err(head.to_string()),
        },
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXAS: &str = r#"
[dataset]
bundle = "texas"

[model]
layers = 8
mlp_layers = 1
tie_gates = true

[train]
lr = 0.005
dropout_theta = 0.3
dropout_xi = 0.1
l2_theta = 5e-6
l2_xi = 0.05
"#;

    #[test]
    fn round_trip_is_identity() {
        let cfg = RunConfigFile::parse(TEXAS).unwrap();
        let again = RunConfigFile::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.train.l2_xi, 0.05);
        assert!(cfg.model.tie_gates);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfigFile::parse("[model]\nheads = 8\n").is_err());
        assert!(RunConfigFile::parse("[optimizer]\nlr = 1\n").is_err());
    }

    #[test]
    fn overrides_apply_and_relative_bundle_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, TEXAS).unwrap();
        let cfg = RunConfigFile::load(
            &p,
            &["train.lr=0.001".into(), "model.variant=bare".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.model.variant, Variant::Bare);
        assert_eq!(cfg.dataset.bundle.unwrap(), dir.path().join("texas"));
    }

    #[test]
    fn all_problems_reported_at_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[model]\nchunk = 3\n[train]\nlr = -1.0\n").unwrap();
        match RunConfigFile::load(&p, &[]) {
            Err(Error::Validation(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v[0].contains("dataset.bundle"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_override_shape() {
        let mut t = toml::Table::new();
        assert!(apply_overrides(&mut t, &["nokey".into()]).is_err());
        apply_overrides(&mut t, &["a.b=3".into(), "a.c=word".into()]).unwrap();
        assert_eq!(t["a"]["b"].as_integer(), Some(3));
        assert_eq!(t["a"]["c"].as_str(), Some("word"));
        assert!(apply_overrides(&mut t, &["a.b.c=1".into()]).is_err());
    }
}
