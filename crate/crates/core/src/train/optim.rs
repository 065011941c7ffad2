//! Warmup/inverse-square-root learning rate and Adam.

use gt_autodiff::{Float, Matrix, ParamStore};

use crate::{Error, Result};

/// `d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)` for `step ≥ 1`.
pub fn lr_schedule(step: usize, d_model: usize, warmup: usize) -> f64 {
    let s = step.max(1) as f64;
    (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5))
}

/// Adam without weight decay. Moments are kept per parameter in store
/// order.
#[derive(Clone, Debug)]
pub struct Adam<F: Float> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Matrix<F>>,
    pub v: Vec<Matrix<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(store: &ParamStore<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| Matrix::zeros(store.value(id).dim()))
                .collect::<Vec<_>>()
        };
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update from the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<F>, lr: f64) {
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let c1 = F::one() - b1;
        let c2 = F::one() - b2;
        let bias1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bias2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = F::from_f64(lr);
        let eps = F::from_f64(self.eps);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            if !store.is_trainable(id) {
                continue;
            }
            let g = store.grad(id).clone();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            ndarray::Zip::from(&mut *m).and(&mut *v).and(&g).for_each(|m, v, &g| {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
            });
            ndarray::Zip::from(store.value_mut(id))
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bias1;
                    let vhat = v / bias2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }

    /// Moment tensors named after their parameters, for checkpoints.
    pub fn named_state<'a>(&'a self, store: &'a ParamStore<F>) -> Vec<(String, &'a Matrix<F>)> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (k, id) in store.ids().enumerate() {
            out.push((format!("adam.m/{}", store.name(id)), &self.m[k]));
            out.push((format!("adam.v/{}", store.name(id)), &self.v[k]));
        }
        out
    }

    /// Restores moments written by [`named_state`](Self::named_state).
    pub fn load_state(&mut self, store: &ParamStore<F>, tensors: &[(String, Matrix<F>)], t: u64) -> Result<()> {
        for (k, id) in store.ids().enumerate() {
            for (prefix, slot) in [("adam.m/", &mut self.m[k]), ("adam.v/", &mut self.v[k])] {
                let name = format!("{prefix}{}", store.name(id));
                let found = tensors
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::Version(format!("checkpoint lacks optimizer state `{name}`")))?;
                if found.1.dim() != slot.dim() {
                    return Err(Error::Version(format!("optimizer state `{name}` has the wrong shape")));
                }
                *slot = found.1.clone();
            }
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gt_autodiff::Init;

    #[test]
    fn schedule_crossover_and_decay() {
        let at = lr_schedule(400, 512, 400);
        assert!((at - 512f64.powf(-0.5) * 400f64.powf(-0.5)).abs() < 1e-15);
        assert!((at - 0.002210).abs() < 5e-7);
        assert!(lr_schedule(800, 512, 400) < at);
        assert!(lr_schedule(100, 512, 400) < at);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::<f64>::new(3);
        let id = store.add("w", (3, 4), Init::Xavier);
        let before = store.value(id).clone();
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-9);
        store.zero_grad();
        adam.step(&mut store, 0.01);
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::<f64>::new(3);
        let id = store.add("w", (1, 2), Init::Zeros);
        store.grad_mut(id).assign(&ndarray::arr2(&[[0.5, -2.0]]));
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-12);
        adam.step(&mut store, 0.1);
        let v = store.value(id);
        assert!((v[[0, 0]] + 0.1).abs() < 1e-9 && (v[[0, 1]] - 0.1).abs() < 1e-9);
    }
}
