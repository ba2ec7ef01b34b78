//! The ordered message-passing network.
//!
//! Per layer `k`, every node averages its neighbors' states into a message
//! `m`, predicts a split-point gate from `[h; m]`, accumulates it with the
//! previous layer's gate through a soft OR, and keeps the gated prefix of
//! its own state while the remaining neurons take the message:
//!
//! ```text
//! m      = mean(h_u for u in N(v))
//! g_hat  = cumax(W [h; m] + b)
//! g      = g_prev + (1 - g_prev) * g_hat
//! h_next = g * h + (1 - g) * m
//! ```
//!
//! Each gate entry controls `chunk` consecutive neurons.

mod config;
pub mod gates;
mod params;
mod trace;

use std::sync::Arc;

pub use config::{ModelConfig, Variant, LAYER_NORM_EPS};
pub use gates::{combine, cumax_left, expand_chunks, softor};
pub use params::{Group, Param, ParamStore};
pub use trace::{quantile, ChannelStats, GateTrace, LayerGates};

use params::Layout;

use crate::error::{Error, Result};
use crate::graph::{mean_aggregate, Graph};
use crate::matrix::{Matrix, Real};
use crate::rng::RngStreams;
use crate::tensor::{Tape, ValueId};

/// Logits, hidden states per layer, and recorded gates.
pub type Inspection<T> = (Matrix<T>, Vec<Matrix<T>>, GateTrace<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedGnn<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

/// Ids of one forward pass on the tape.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logits: ValueId,
    /// `h^(0)` through `h^(K)`.
    pub hidden: Vec<ValueId>,
    /// Tape leaves aligned with [`ParamStore`] order.
    pub params: Vec<ValueId>,
    pub trace: Option<GateTrace<T>>,
}

/// Mutable state for one forward pass.
pub struct Pass<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub rng: &'a mut RngStreams,
    pub training: bool,
}

struct LayerOut {
    h: ValueId,
    /// Gate used by the combine step, before chunk expansion.
    gate: Option<ValueId>,
    raw: Option<ValueId>,
}

impl<T: Real> OrderedGnn<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, layout) = ParamStore::init(&config, seed);
        Ok(OrderedGnn {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored arrays. Names, order and shapes must
    /// match what `config` registers.
    pub fn from_params(config: ModelConfig, params: Vec<Param<T>>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Versioning(format!(
                "{} stored parameters, configuration registers {}",
                params.len(),
                model.params.len()
            )));
        }
        for (expected, got) in model.params.iter().zip(&params) {
            if expected.name != got.name || expected.value.shape() != got.value.shape() {
                return Err(Error::Versioning(format!(
                    "stored parameter {} {:?} does not match expected {} {:?}",
                    got.name,
                    got.value.shape(),
                    expected.name,
                    expected.value.shape()
                )));
            }
        }
        model.params = ParamStore::from_params(params);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Sets the gate network for layer `k` (1-based, or the shared one) to zero
    /// weights and the given bias.
    pub fn force_gate_bias(&mut self, k: usize, bias: &[T]) -> Result<()> {
        if !self.config.variant.is_gated() || self.layout.gates.is_empty() {
            return Err(Error::Contract("model has no gate network".into()));
        }
        if k == 0 || k > self.config.layers {
            return Err(Error::Contract(format!(
                "layer {k} outside 1..={}",
                self.config.layers
            )));
        }
        if bias.len() != self.config.gate_dim() {
            return Err(Error::Dimension {
                op: "force_gate_bias",
                left: (1, self.config.gate_dim()),
                right: (1, bias.len()),
            });
        }
        let (w, b) = self.layout.gate(k);
        self.params
            .value_mut(w)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = T::zero());
        self.params.value_mut(b).data_mut().copy_from_slice(bias);
        Ok(())
    }

    fn linear(
        &self,
        tape: &mut Tape<T>,
        ids: &[ValueId],
        x: ValueId,
        (w, b): (usize, usize),
    ) -> Result<ValueId> {
        let xw = tape.matmul(x, ids[w])?;
        let n = tape.shape(x).0;
        let bias = tape.repeat_rows(ids[b], n)?;
        tape.add(xw, bias)
    }

    /// `f_theta`: linear maps with relu between them, dropout on the input
    /// and on every hidden activation.
    pub fn input_projection(
        &self,
        pass: &mut Pass<'_, T>,
        ids: &[ValueId],
        x: ValueId,
    ) -> Result<ValueId> {
        let f = pass.tape.shape(x).1;
        if f != self.config.num_features {
            return Err(Error::Dimension {
                op: "input_projection",
                left: (pass.tape.shape(x).0, self.config.num_features),
                right: pass.tape.shape(x),
            });
        }
        let rate = self.config.dropout_theta;
        let mut h = x;
        for (i, &lin) in self.layout.mlp.iter().enumerate() {
            if i > 0 {
                h = pass.tape.relu(h);
            }
            let rng = pass.rng.stream(&format!("dropout.theta.{i}"));
            h = pass.tape.dropout(h, rate, rng, pass.training)?;
            h = self.linear(pass.tape, ids, h, lin)?;
        }
        Ok(h)
    }

    /// Gate logits for layer `k` from `[h_prev; m]`.
    pub fn gate_logits(
        &self,
        pass: &mut Pass<'_, T>,
        ids: &[ValueId],
        k: usize,
        h_prev: ValueId,
        message: ValueId,
    ) -> Result<ValueId> {
        if !self.config.variant.is_gated() {
            return Err(Error::Contract("bare variant has no gate network".into()));
        }
        if k == 0 || k > self.config.layers {
            return Err(Error::Contract(format!(
                "layer {k} outside 1..={}",
                self.config.layers
            )));
        }
        let joined = pass.tape.concat(h_prev, message)?;
        let rng = pass.rng.stream(&format!("dropout.xi.{k}"));
        let joined = pass
            .tape
            .dropout(joined, self.config.dropout_xi, rng, pass.training)?;
        self.linear(pass.tape, ids, joined, self.layout.gate(k))
    }

    fn forward_layer(
        &self,
        pass: &mut Pass<'_, T>,
        ids: &[ValueId],
        graph: &Arc<Graph>,
        k: usize,
        g_prev: Option<ValueId>,
        h_prev: ValueId,
    ) -> Result<LayerOut> {
        let cfg = &self.config;
        let message = mean_aggregate(pass.tape, graph, h_prev)?;
        let (mut h, gate, raw) = if cfg.variant == Variant::Bare {
            (message, None, None)
        } else {
            let logits = self.gate_logits(pass, ids, k, h_prev, message)?;
            let (gate, raw) = match cfg.variant {
                Variant::SimpleGating => (pass.tape.sigmoid(logits), None),
                Variant::OrderedGating => {
                    let g = cumax_left(pass.tape, logits)?;
                    (g, Some(g))
                }
                Variant::OrderedSoftor => {
                    let g_hat = cumax_left(pass.tape, logits)?;
                    let prev = match g_prev {
                        Some(p) => p,
                        None => {
                            let (n, dm) = pass.tape.shape(g_hat);
                            pass.tape.constant(Matrix::zeros(n, dm))
                        }
                    };
                    (softor(pass.tape, prev, g_hat)?, Some(g_hat))
                }
                Variant::Bare => unreachable!(),
            };
            let wide = expand_chunks(pass.tape, gate, cfg.chunk, cfg.hidden)?;
            let h = combine(pass.tape, wide, h_prev, message)?;
            (h, Some(gate), raw)
        };
        if let Some((g, b)) = self.layout.norm(k) {
            h = pass.tape.layer_norm(h, ids[g], ids[b], LAYER_NORM_EPS)?;
        }
        Ok(LayerOut { h, gate, raw })
    }

    /// Full forward pass on `tape`. Gate traces are only recorded in eval
    /// mode.
    pub fn forward(
        &self,
        pass: &mut Pass<'_, T>,
        graph: &Arc<Graph>,
        features: &Matrix<T>,
        record_gates: bool,
    ) -> Result<Forward<T>> {
        if record_gates && pass.training {
            return Err(Error::Contract("gate traces are recorded in eval mode only".into()));
        }
        if features.rows() != graph.num_nodes() {
            return Err(Error::Dimension {
                op: "forward",
                left: (graph.num_nodes(), self.config.num_features),
                right: features.shape(),
            });
        }
        let ids: Vec<ValueId> = self
            .params
            .iter()
            .map(|p| pass.tape.param(p.value.clone()))
            .collect();
        let x = pass.tape.constant(features.clone());
        let mut h = self.input_projection(pass, &ids, x)?;
        let mut hidden = vec![h];
        let mut trace = record_gates.then(GateTrace::default);
        let mut g_prev = None;
        for k in 1..=self.config.layers {
            let out = self.forward_layer(pass, &ids, graph, k, g_prev, h)?;
            h = out.h;
            hidden.push(h);
            g_prev = out.gate;
            if let (Some(tr), Some(gate)) = (trace.as_mut(), out.gate) {
                tr.push(LayerGates::new(
                    out.raw.map(|r| pass.tape.value(r)),
                    pass.tape.value(gate),
                ));
            }
        }
        let logits = self.linear(pass.tape, &ids, h, self.layout.head)?;
        Ok(Forward {
            logits,
            hidden,
            params: ids,
            trace,
        })
    }

    /// Eval-mode logits on a fresh tape.
    pub fn predict(&self, graph: &Arc<Graph>, features: &Matrix<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = Pass {
            tape: &mut tape,
            rng: &mut rng,
            training: false,
        };
        let f = self.forward(&mut pass, graph, features, false)?;
        Ok(tape.value(f.logits))
    }

    /// Eval-mode forward returning logits, every hidden state and the gate
    /// trace.
    pub fn inspect(
        &self,
        graph: &Arc<Graph>,
        features: &Matrix<T>,
    ) -> Result<Inspection<T>> {
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = Pass {
            tape: &mut tape,
            rng: &mut rng,
            training: false,
        };
        let f = self.forward(&mut pass, graph, features, true)?;
        let hidden = f.hidden.iter().map(|&h| tape.value(h)).collect();
        Ok((tape.value(f.logits), hidden, f.trace.unwrap_or_default()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::{random_features, random_graph};
    use crate::graph::EdgeOptions;

    fn small(variant: Variant, layers: usize) -> ModelConfig {
        ModelConfig {
            layers,
            hidden: 8,
            chunk: 2,
            mlp_layers: 2,
            tie_gates: false,
            layernorm_every: 2,
            dropout_theta: 0.0,
            dropout_xi: 0.0,
            variant,
            num_features: 5,
            num_classes: 3,
        }
    }

    fn eval_pass<'a>(tape: &'a mut Tape<f64>, rng: &'a mut RngStreams) -> Pass<'a, f64> {
        Pass {
            tape,
            rng,
            training: false,
        }
    }

    #[test]
    fn identity_projection_passes_features_through() {
        let cfg = ModelConfig {
            layers: 0,
            hidden: 3,
            chunk: 1,
            mlp_layers: 1,
            num_features: 3,
            ..small(Variant::OrderedSoftor, 0)
        };
        let mut model = OrderedGnn::<f64>::new(cfg, 1).unwrap();
        *model.params_mut().by_name_mut("theta.mlp.0.weight").unwrap() = Matrix::identity(3);
        *model.params_mut().by_name_mut("theta.mlp.0.bias").unwrap() = Matrix::zeros(1, 3);
        let x = random_features(4, 3, 2);
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = eval_pass(&mut tape, &mut rng);
        let ids: Vec<_> = model
            .params()
            .iter()
            .map(|p| pass.tape.param(p.value.clone()))
            .collect();
        let xi = pass.tape.constant(x.clone());
        let z = model.input_projection(&mut pass, &ids, xi).unwrap();
        assert_eq!(tape.value(z), x);
    }

    #[test]
    fn zero_projection_gives_zero() {
        let mut model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 0), 1).unwrap();
        for name in ["theta.mlp.0.weight", "theta.mlp.0.bias", "theta.mlp.1.weight", "theta.mlp.1.bias"] {
            model
                .params_mut()
                .by_name_mut(name)
                .unwrap()
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let g = Arc::new(random_graph(6, 0.4, 1));
        let (_, hidden, _) = model.inspect(&g, &random_features(6, 5, 1)).unwrap();
        assert!(hidden[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_rejects_wrong_width() {
        let model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 1), 1).unwrap();
        let g = Arc::new(random_graph(4, 0.5, 1));
        assert!(matches!(
            model.predict(&g, &random_features(4, 6, 1)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_gate_weights_give_uniform_cumax() {
        let mut model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 1), 3).unwrap();
        model.force_gate_bias(1, &[0.0; 4]).unwrap();
        let g = Arc::new(random_graph(5, 0.5, 2));
        let (_, _, trace) = model.inspect(&g, &random_features(5, 5, 2)).unwrap();
        for r in 0..5 {
            assert_eq!(trace.layers[0].gates.row(r), &[1.0, 0.75, 0.5, 0.25]);
        }
    }

    #[test]
    fn tied_gates_share_logits() {
        let cfg = ModelConfig {
            tie_gates: true,
            ..small(Variant::OrderedSoftor, 2)
        };
        let model = OrderedGnn::<f64>::new(cfg, 4).unwrap();
        assert!(model.params().by_name("xi.gate.shared.weight").is_some());
        assert!(model.params().by_name("xi.gate.1.weight").is_none());
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = eval_pass(&mut tape, &mut rng);
        let ids: Vec<_> = model
            .params()
            .iter()
            .map(|p| pass.tape.param(p.value.clone()))
            .collect();
        let h = pass.tape.constant(random_features(3, 8, 1));
        let m = pass.tape.constant(random_features(3, 8, 2));
        let a = model.gate_logits(&mut pass, &ids, 1, h, m).unwrap();
        let b = model.gate_logits(&mut pass, &ids, 2, h, m).unwrap();
        assert_eq!(tape.data(a), tape.data(b));
    }

    #[test]
    fn bare_variant_has_no_gate_network() {
        let model = OrderedGnn::<f64>::new(small(Variant::Bare, 2), 4).unwrap();
        assert!(model.params().iter().all(|p| p.group == Group::Theta));
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = eval_pass(&mut tape, &mut rng);
        let h = pass.tape.constant(Matrix::zeros(2, 8));
        assert!(matches!(
            model.gate_logits(&mut pass, &[], 1, h, h),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn forced_first_split_freezes_ego_state() {
        let cfg = ModelConfig {
            layernorm_every: 0,
            ..small(Variant::OrderedSoftor, 3)
        };
        let mut model = OrderedGnn::<f64>::new(cfg, 5).unwrap();
        // all mass on the last position keeps every gate at 1
        for k in 1..=3 {
            model.force_gate_bias(k, &[0.0, 0.0, 0.0, 40.0]).unwrap();
        }
        let g = Arc::new(random_graph(7, 0.4, 3));
        let (_, hidden, _) = model.inspect(&g, &random_features(7, 5, 3)).unwrap();
        // cumsum of a softmax can round just below 1, so compare to 1e-15
        assert!(hidden[3].max_abs_diff(&hidden[0]) <= 1e-15);
    }

    #[test]
    fn saturated_gate_is_exact_with_ones() {
        let cfg = ModelConfig {
            layernorm_every: 0,
            ..small(Variant::OrderedSoftor, 2)
        };
        let mut model = OrderedGnn::<f64>::new(cfg, 5).unwrap();
        for k in 1..=2 {
            model.force_gate_bias(k, &[0.0, 0.0, 0.0, 800.0]).unwrap();
        }
        let g = Arc::new(random_graph(7, 0.4, 3));
        let (_, hidden, trace) = model.inspect(&g, &random_features(7, 5, 3)).unwrap();
        assert!(trace.layers[0].gates.data().iter().all(|&v| v == 1.0));
        assert_eq!(hidden[2], hidden[0]);
    }

    #[test]
    fn bare_constant_features_stay_constant() {
        let cfg = ModelConfig {
            layernorm_every: 0,
            ..small(Variant::Bare, 3)
        };
        let model = OrderedGnn::<f64>::new(cfg, 5).unwrap();
        let g = Arc::new(Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], EdgeOptions::default()).unwrap());
        let x = Matrix::filled(4, 5, 0.7);
        let (_, hidden, trace) = model.inspect(&g, &x).unwrap();
        assert!(trace.layers.is_empty());
        let last = &hidden[3];
        for r in 1..4 {
            assert!(last
                .row(r)
                .iter()
                .zip(last.row(0))
                .all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_layers_is_an_mlp() {
        let model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 0), 5).unwrap();
        assert!(model.params().iter().all(|p| p.group == Group::Theta));
        let x = random_features(6, 5, 8);
        let a = model.predict(&Arc::new(random_graph(6, 0.0, 1)), &x).unwrap();
        let b = model.predict(&Arc::new(random_graph(6, 0.9, 1)), &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_shapes_and_layer_monotonicity() {
        let model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 4), 6).unwrap();
        let g = Arc::new(random_graph(9, 0.3, 4));
        let (_, _, trace) = model.inspect(&g, &random_features(9, 5, 4)).unwrap();
        assert_eq!(trace.layers.len(), 4);
        for l in &trace.layers {
            assert_eq!(l.gates.shape(), (9, 4));
            assert!(l.gates.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        for w in trace.layers.windows(2) {
            assert!(w[1]
                .gates
                .data()
                .iter()
                .zip(w[0].gates.data())
                .all(|(b, a)| b >= a));
        }
    }

    #[test]
    fn record_in_training_mode_is_rejected() {
        let model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 1), 6).unwrap();
        let g = Arc::new(random_graph(4, 0.5, 4));
        let mut tape = Tape::new();
        let mut rng = RngStreams::new(0);
        let mut pass = Pass {
            tape: &mut tape,
            rng: &mut rng,
            training: true,
        };
        assert!(model
            .forward(&mut pass, &g, &random_features(4, 5, 1), true)
            .is_err());
    }

    #[test]
    fn from_params_checks_names_and_shapes() {
        let model = OrderedGnn::<f64>::new(small(Variant::OrderedSoftor, 2), 6).unwrap();
        let stored: Vec<_> = model.params().iter().cloned().collect();
        let back = OrderedGnn::from_params(model.config().clone(), stored.clone()).unwrap();
        assert_eq!(back, model);
        let other = ModelConfig {
            chunk: 4,
            ..model.config().clone()
        };
        assert!(matches!(
            OrderedGnn::<f64>::from_params(other, stored),
            Err(Error::Versioning(_))
        ));
    }
}
