use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::tensor::Real;

/// Rescales the accumulated gradients so that their global L2 norm is at most
/// `max_norm`. Returns the factor applied (1 when under the threshold).
pub fn clip_gradients<R: Real>(params: &mut ParamStore<R>, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        params.scale_grads(R::of(f));
        f
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, kept in `f64` regardless of `R`.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn is_zero(&self) -> bool {
        self.step == 0 && self.m.iter().chain(&self.v).all(|b| b.iter().all(|&x| x == 0.0))
    }
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam { hyper: AdamHyper, state: AdamState },
    Sgd,
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            hyper: AdamHyper::default(),
            state: AdamState::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Adam { .. } => "adam",
            Optimizer::Sgd => "sgd",
        }
    }

    /// Forgets all moment estimates.
    pub fn reset(&mut self) {
        if let Optimizer::Adam { state, .. } = self {
            *state = AdamState::default();
        }
    }

    /// Applies one update from the gradients stored in `params`.
    pub fn step<R: Real>(&mut self, params: &mut ParamStore<R>, lr: f64) {
        match self {
            Optimizer::Sgd => {
                for p in params.iter_mut() {
                    for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= R::of(lr * g.f64());
                    }
                }
            }
            Optimizer::Adam { hyper, state } => adam_step(params, lr, hyper, state),
        }
    }
}

pub fn adam_step<R: Real>(
    params: &mut ParamStore<R>,
    lr: f64,
    hyper: &AdamHyper,
    state: &mut AdamState,
) {
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, (w, &g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
            let g = g.f64();
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            *w -= R::of(lr * mhat / (vhat.sqrt() + hyper.eps));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: Vec<f64>, grad: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::vector(values));
        s.get_mut(id).grad = Tensor::vector(grad);
        s
    }

    fn grads(s: &ParamStore<f64>) -> Vec<f64> {
        s.iter().flat_map(|(_, p)| p.grad.data().to_vec()).collect()
    }

    #[test]
    fn clipping_examples() {
        let mut s = store(vec![0.0, 0.0], vec![0.3, 0.4]);
        assert_eq!(clip_gradients(&mut s, 1.0), 1.0);
        assert_eq!(grads(&s), [0.3, 0.4]);

        let mut s = store(vec![0.0, 0.0], vec![1.2, 1.6]);
        clip_gradients(&mut s, 1.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-6);

        let mut s = store(vec![0.0, 0.0], vec![3.0, 4.0]);
        assert!((clip_gradients(&mut s, 1.0) - 0.2).abs() < 1e-15);
        let g = grads(&s);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut s = store(vec![1.0, -2.0], vec![0.0, 0.0]);
        let mut opt = Optimizer::adam();
        opt.step(&mut s, 1e-3);
        assert_eq!(s.iter().next().unwrap().1.value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn adam_update_approaches_lr_for_constant_gradient() {
        // with g ≡ 1, mhat = vhat = 1 after bias correction, so each update is lr/(1+eps)
        let mut s = store(vec![0.0], vec![1.0]);
        let mut opt = Optimizer::adam();
        let mut prev = 0.0;
        for step in 0..200 {
            opt.step(&mut s, 1e-3);
            let w = s.iter().next().unwrap().1.value.data()[0];
            if step >= 100 {
                assert!(((prev - w) - 1e-3).abs() < 1e-8);
            }
            prev = w;
        }
    }

    #[test]
    fn reset_clears_moments() {
        let mut s = store(vec![0.0], vec![1.0]);
        let mut opt = Optimizer::adam();
        opt.step(&mut s, 1e-3);
        opt.reset();
        let Optimizer::Adam { state, .. } = &opt else {
            panic!()
        };
        assert!(state.is_zero());
    }

    #[test]
    fn sgd_step() {
        let mut s = store(vec![1.0, 1.0], vec![0.5, -1.0]);
        Optimizer::Sgd.step(&mut s, 0.1);
        let v = s.iter().next().unwrap().1.value.data().to_vec();
        assert!((v[0] - 0.95).abs() < 1e-15 && (v[1] - 1.1).abs() < 1e-15);
    }
}
