use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Combine-stage variant. The first three are ablations of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `h = mean(neighbors)`, no gate.
    Bare,
    /// Independent logistic gate per channel.
    SimpleGating,
    /// Cumax gate, no accumulation across layers.
    OrderedGating,
    /// Cumax gate accumulated with soft OR.
    #[default]
    OrderedSoftor,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Bare,
        Variant::SimpleGating,
        Variant::OrderedGating,
        Variant::OrderedSoftor,
    ];

    pub fn is_gated(self) -> bool {
        self != Variant::Bare
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Bare => "bare",
            Variant::SimpleGating => "simple-gating",
            Variant::OrderedGating => "ordered-gating",
            Variant::OrderedSoftor => "ordered-softor",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Message-passing layers K. Zero gives a plain MLP classifier.
    pub layers: usize,
    /// Hidden width D.
    pub hidden: usize,
    /// Neurons per gate C; the gate vector has D / C entries.
    pub chunk: usize,
    /// Linear maps in the input projection.
    pub mlp_layers: usize,
    /// Share one gate network across all layers.
    pub tie_gates: bool,
    /// LayerNorm after layers k with k % layernorm_every == 0; 0 disables.
    pub layernorm_every: usize,
    pub dropout_theta: f64,
    pub dropout_xi: f64,
    pub variant: Variant,
    pub num_features: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 8,
            hidden: 256,
            chunk: 4,
            mlp_layers: 1,
            tie_gates: false,
            layernorm_every: 2,
            dropout_theta: 0.0,
            dropout_xi: 0.0,
            variant: Variant::OrderedSoftor,
            num_features: 1,
            num_classes: 2,
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl ModelConfig {
    pub fn gate_dim(&self) -> usize {
        self.hidden / self.chunk.max(1)
    }

    pub fn has_norm_after(&self, k: usize) -> bool {
        self.layernorm_every > 0 && k.is_multiple_of(self.layernorm_every)
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hidden == 0 {
            out.push("model.hidden must be >= 1".to_string());
        }
        if self.chunk == 0 || !self.hidden.is_multiple_of(self.chunk) {
            out.push(format!(
                "model.chunk ({}) must divide model.hidden ({})",
                self.chunk, self.hidden
            ));
        }
        if self.mlp_layers == 0 {
            out.push("model.mlp_layers must be >= 1".to_string());
        }
        if self.layernorm_every > 0 && self.hidden < 2 {
            out.push("layer norm needs model.hidden >= 2".to_string());
        }
        for (name, r) in [
            ("dropout_theta", self.dropout_theta),
            ("dropout_xi", self.dropout_xi),
        ] {
            if !(0.0..1.0).contains(&r) {
                out.push(format!("{name} must be in [0,1), got {r}"));
            }
        }
        if self.num_features == 0 {
            out.push("num_features must be >= 1".to_string());
        }
        if self.num_classes == 0 {
            out.push("num_classes must be >= 1".to_string());
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
}
