use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};

/// Weight-decay group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// Input projection, layer norms, classifier head.
    Theta,
    /// Gate networks.
    Xi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub group: Group,
    pub value: Matrix<T>,
}

/// Positions of each parameter inside [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub mlp: Vec<(usize, usize)>,
    /// One entry per layer, or a single shared entry when gates are tied.
    pub gates: Vec<(usize, usize)>,
    /// `(layer, gain, bias)` for every normalized layer.
    pub norms: Vec<(usize, usize, usize)>,
    pub head: (usize, usize),
}

impl Layout {
    pub fn gate(&self, k: usize) -> (usize, usize) {
        if self.gates.len() == 1 {
            self.gates[0]
        } else {
            self.gates[k - 1]
        }
    }

    pub fn norm(&self, k: usize) -> Option<(usize, usize)> {
        self.norms
            .iter()
            .find(|n| n.0 == k)
            .map(|&(_, g, b)| (g, b))
    }
}

/// All learnable arrays of a model, in a fixed registration order.
///
/// Linear maps are stored input-major (`in × out`) so a layer computes
/// `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Matrix<T> {
        &mut self.params[i].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix<T>> {
        self.index_of(name).map(|i| &self.params[i].value)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Matrix<T>> {
        self.index_of(name).map(move |i| &mut self.params[i].value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn values(&self) -> Vec<Matrix<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_values(&mut self, values: Vec<Matrix<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} arrays for {} parameters",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Dimension {
                    op: "set_values",
                    left: p.value.shape(),
                    right: v.shape(),
                });
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn from_params(params: Vec<Param<T>>) -> Self {
        ParamStore { params }
    }

    /// Registers every parameter for `config` and draws initial values.
    ///
    /// Weights and biases of linear maps are uniform in
    /// `±1/sqrt(fan_in)`; layer-norm gains start at 1 and biases at 0.
    pub(crate) fn init(config: &ModelConfig, seed: u64) -> (Self, Layout) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut linear = |name: &str, group, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let mut draw = |r, c| {
                Matrix::from_vec(
                    r,
                    c,
                    (0..r * c)
                        .map(|_| T::lit(rng.gen_range(-bound..=bound)))
                        .collect(),
                )
            };
            let w = draw(fan_in, fan_out);
            let b = draw(1, fan_out);
            params.push(Param {
                name: format!("{name}.weight"),
                group,
                value: w,
            });
            params.push(Param {
                name: format!("{name}.bias"),
                group,
                value: b,
            });
            (params.len() - 2, params.len() - 1)
        };

        let d = config.hidden;
        let mut mlp = Vec::new();
        for i in 0..config.mlp_layers {
            let fan_in = if i == 0 { config.num_features } else { d };
            mlp.push(linear(&format!("theta.mlp.{i}"), Group::Theta, fan_in, d, &mut rng));
        }
        let mut gates = Vec::new();
        if config.variant.is_gated() && config.layers > 0 {
            if config.tie_gates {
                gates.push(linear("xi.gate.shared", Group::Xi, 2 * d, config.gate_dim(), &mut rng));
            } else {
                for k in 1..=config.layers {
                    gates.push(linear(
                        &format!("xi.gate.{k}"),
                        Group::Xi,
                        2 * d,
                        config.gate_dim(),
                        &mut rng,
                    ));
                }
            }
        }
        let head = linear("theta.head", Group::Theta, d, config.num_classes, &mut rng);
        let mut norms = Vec::new();
        for k in (1..=config.layers).filter(|&k| config.has_norm_after(k)) {
            params.push(Param {
                name: format!("theta.norm.{k}.gain"),
                group: Group::Theta,
                value: Matrix::filled(1, d, T::one()),
            });
            params.push(Param {
                name: format!("theta.norm.{k}.bias"),
                group: Group::Theta,
                value: Matrix::zeros(1, d),
            });
            norms.push((k, params.len() - 2, params.len() - 1));
        }
        (
            ParamStore { params },
            Layout {
                mlp,
                gates,
                norms,
                head,
            },
        )
    }
}
