use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::model::{Group, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// How weight decay enters the update. Only the coupled form is
/// implemented; the tag is stored with checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// `lambda * w` is added to the gradient before the moment updates.
    #[default]
    CoupledL2,
}

/// Moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One Adam update with per-group L2 coefficients.
///
/// Gradients are checked before anything is written, so a non-finite
/// gradient leaves both parameters and state untouched.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    lr: f64,
    decay: impl Fn(Group) -> f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let p = params.get(i);
        if g.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: p.value.shape(),
                right: g.shape(),
            });
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NanGradient {
                param: p.name.clone(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(lr), T::lit(EPS));
    for (i, g) in grads.iter().enumerate() {
        let lambda = T::lit(decay(params.get(i).group));
        let w = params.value_mut(i).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for j in 0..w.len() {
            let gj = g.data()[j] + lambda * w[j];
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            w[j] = w[j] - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, OrderedGnn, Param};

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let n = values.len();
        ParamStore::from_params(vec![Param {
            name: "w".into(),
            group: Group::Theta,
            value: Matrix::from_vec(1, n, values),
        }])
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = store(vec![0.0, 0.0, 0.0]);
        let mut s = AdamState::new(&p);
        let g = Matrix::from_vec(1, 3, vec![3.0, -0.2, 50.0]);
        adam_step(&mut p, &[g], &mut s, 0.01, |_| 0.0).unwrap();
        let got = p.get(0).value.data();
        for (x, e) in got.iter().zip([-0.01, 0.01, -0.01]) {
            assert!((x - e).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = store(vec![1.5, -2.0]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[Matrix::zeros(1, 2)], &mut s, 0.1, |_| 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn nan_gradient_names_param_and_leaves_state() {
        let mut p = store(vec![1.0]);
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &[Matrix::from_vec(1, 1, vec![f64::NAN])], &mut s, 0.1, |_| 0.0)
            .unwrap_err();
        assert!(matches!(err, Error::NanGradient { ref param } if param == "w"));
        assert_eq!(s.step, 0);
        assert_eq!(p.get(0).value.data(), &[1.0]);
    }

    #[test]
    fn groups_are_isolated() {
        let cfg = ModelConfig {
            layers: 2,
            hidden: 4,
            chunk: 2,
            num_features: 3,
            num_classes: 2,
            ..Default::default()
        };
        let model = OrderedGnn::<f64>::new(cfg, 3).unwrap();
        let grads: Vec<_> = model
            .params()
            .iter()
            .map(|p| p.value.map(|v| v * 0.3 + 0.01))
            .collect();
        let run = |l2_xi: f64| {
            let mut p = model.params().clone();
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &grads, &mut s, 0.01, |g| match g {
                Group::Theta => 5e-4,
                Group::Xi => l2_xi,
            })
            .unwrap();
            p
        };
        let (a, b) = (run(0.0), run(0.05));
        for (pa, pb) in a.iter().zip(b.iter()) {
            match pa.group {
                Group::Theta => assert_eq!(pa.value, pb.value),
                Group::Xi => assert_ne!(pa.value, pb.value),
            }
        }
    }

    #[test]
    fn step_is_pure_in_state_snapshot() {
        let p0 = store(vec![0.3, -0.7]);
        let g = Matrix::from_vec(1, 2, vec![0.1, 0.4]);
        let mut s0 = AdamState::new(&p0);
        let mut warm = p0.clone();
        adam_step(&mut warm, std::slice::from_ref(&g), &mut s0, 0.01, |_| 1e-3).unwrap();
        let snapshot = (warm.clone(), s0.clone());
        let mut runs = Vec::new();
        for _ in 0..2 {
            let (mut p, mut s) = snapshot.clone();
            adam_step(&mut p, std::slice::from_ref(&g), &mut s, 0.01, |_| 1e-3).unwrap();
            runs.push((p, s));
        }
        assert_eq!(runs[0], runs[1]);
    }
}
