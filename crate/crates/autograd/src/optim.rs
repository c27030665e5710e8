//! First-order optimizers over a [`ParamStore`].

use std::collections::BTreeMap;

use crate::{ParamStore, Tensor};

/// Adaptive-moment optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: BTreeMap<String, Tensor>,
    pub second_moment: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    pub fn apply(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Stochastic gradient descent with classical momentum and L2 weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    pub fn apply(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let vel = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                let d = gv + self.weight_decay * *pv;
                *vv = self.momentum * *vv + d;
                *pv -= self.lr * *vv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grad(p: &ParamStore) -> BTreeMap<String, Tensor> {
        // d/dx of (x - 3)^2
        p.iter()
            .map(|(k, t)| (k.to_string(), t.map(|x| 2.0 * (x - 3.0))))
            .collect()
    }

    #[test]
    fn adam_and_sgd_minimize_a_quadratic() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::full(&[2], -1.0));
        let mut q = p.clone();
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        let mut sgd = Sgd::new(0.05, 0.9, 0.0);
        for _ in 0..500 {
            let g = quadratic_grad(&p);
            adam.apply(&mut p, &g);
            let g = quadratic_grad(&q);
            sgd.apply(&mut q, &g);
        }
        for v in p.get("x").unwrap().data().iter().chain(q.get("x").unwrap().data()) {
            assert!((v - 3.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::full(&[1], 0.0));
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::full(&[1], 5.0));
        let mut adam = Adam::new(0.01, 0.9, 0.999);
        adam.apply(&mut p, &g);
        assert!((p.get("w").unwrap().item() + 0.01).abs() < 1e-9);
    }
}
