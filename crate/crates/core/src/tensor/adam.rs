use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Real};
use crate::error::{Error, Result};

/// ADAM hyperparameters; the defaults are the reference values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected ADAM update of a single parameter buffer at step `t`
/// (1-based).
pub fn adam_update<T: Real>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(Error::dim(
            "adam_step",
            format!(
                "parameter of {} values, gradient of {}, moments of {}/{}",
                param.len(),
                grad.len(),
                m.len(),
                v.len()
            ),
        ));
    }
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.epsilon);
    let c1 = T::one() - T::of(cfg.beta1.powf(t as f64));
    let c2 = T::one() - T::of(cfg.beta2.powf(t as f64));
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// ADAM state over every trainable entry of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step_count: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |_| Vec::new();
        let mut m: Vec<Vec<T>> = (0..params.len()).map(zeros).collect();
        let mut v: Vec<Vec<T>> = (0..params.len()).map(zeros).collect();
        for id in params.trainable_ids() {
            let n = params.get(id).len();
            m[id.index()] = vec![T::zero(); n];
            v[id.index()] = vec![T::zero(); n];
        }
        Adam {
            config,
            step_count: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self, id: super::ParamId) -> (&[T], &[T]) {
        (&self.m[id.index()], &self.v[id.index()])
    }

    /// Applies one update. Parameters that received no gradient at all
    /// (they were not part of the loss) keep both their value and their
    /// moments; a present-but-zero gradient is a normal update.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        self.step_count += 1;
        let ids: Vec<_> = params.trainable_ids().collect();
        for id in ids {
            let Some(g) = grads.param(id) else { continue };
            let i = id.index();
            adam_update(
                params.get_mut(id).data_mut(),
                g,
                &mut self.m[i],
                &mut self.v[i],
                self.step_count,
                &self.config,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0f64, -2.0, 3.0];
        let g = [0.5, -4.0, 1e-3];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adam_update(&mut p, &g, &mut m, &mut v, 1, &cfg).unwrap();
        let expect = [1.0 - 0.001, -2.0 + 0.001, 3.0 - 0.001];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_and_moments_decay() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.25f64; 4];
        let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
        adam_update(&mut p, &[0.0; 4], &mut m, &mut v, 1, &cfg).unwrap();
        assert_eq!(p, vec![0.25; 4]);

        let mut m = vec![1.0f64; 4];
        let mut v = vec![1.0f64; 4];
        let mut q = vec![0.0f64; 4];
        adam_update(&mut q, &[0.0; 4], &mut m, &mut v, 3, &cfg).unwrap();
        assert!(m.iter().all(|&x| (x - 0.9).abs() < 1e-15));
        assert!(v.iter().all(|&x| (x - 0.999).abs() < 1e-15));
    }

    fn steps_to_reach(lr: f64, tol: f64, limit: u64) -> Option<u64> {
        let cfg = AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        let mut x = vec![5.0f64];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        for t in 1..=limit {
            let g = [2.0 * x[0]];
            adam_update(&mut x, &g, &mut m, &mut v, t, &cfg).unwrap();
            if x[0].abs() < tol {
                return Some(t);
            }
        }
        None
    }

    #[test]
    fn minimizes_a_parabola() {
        // Each step moves at most about lr, so the default rate cannot cover
        // the distance from 5 in 2000 steps; lr = 0.01 can.
        assert!(steps_to_reach(0.001, 0.1, 2000).is_none());
        assert!(steps_to_reach(0.001, 0.1, 10_000).is_some());
        assert!(steps_to_reach(0.01, 0.1, 2000).is_some());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0f32; 3];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        assert!(adam_update(&mut p, &[0.0; 2], &mut m, &mut v, 1, &cfg).is_err());
    }
}
