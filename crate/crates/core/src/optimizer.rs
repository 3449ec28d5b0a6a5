//! Adam with cosine annealing, and the conflict-free (ConFIG) combination
//! of per-loss gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gram eigenvalues below this are treated as zero in the pseudo-inverse.
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub grad: Vec<f64>,
    /// The least-squares system was singular and a plain sum was used.
    pub fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conflict-free update direction.
///
/// With unit gradients stacked as rows of `G`, the direction is
/// `u = normalize(pinv(G) 1)` and the update is `(sum_i g_i . u) u`, so that
/// every unit gradient has the same positive projection onto it. Zero
/// gradients take no part.
pub fn config_combine(grads: &[Vec<f64>]) -> Result<Combined> {
    let active: Vec<&Vec<f64>> = grads.iter().filter(|g| g.iter().any(|v| *v != 0.0)).collect();
    if active.is_empty() {
        return Err(Error::AllZeroGradients);
    }
    if active.iter().flat_map(|g| g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let dim = active[0].len();
    if active.iter().any(|g| g.len() != dim) {
        return Err(Error::LengthMismatch(dim, active.iter().map(|g| g.len()).find(|l| *l != dim).unwrap_or(dim)));
    }
    let m = active.len();
    let unit: Vec<Vec<f64>> = active
        .iter()
        .map(|g| {
            let norm = dot(g, g).sqrt();
            g.iter().map(|v| v / norm).collect()
        })
        .collect();
    let gram = DMatrix::from_fn(m, m, |i, j| dot(&unit[i], &unit[j]));
    let eig = gram.symmetric_eigen();
    let ones = DVector::from_element(m, 1.0);
    let proj = eig.eigenvectors.transpose() * &ones;
    let scaled = DVector::from_fn(m, |i, _| {
        let lambda = eig.eigenvalues[i];
        if lambda > EIGEN_FLOOR {
            proj[i] / lambda
        } else {
            0.0
        }
    });
    let alpha = &eig.eigenvectors * scaled;

    let mut dir = vec![0.0; dim];
    for (a, u) in alpha.iter().zip(&unit) {
        for (d, v) in dir.iter_mut().zip(u) {
            *d += a * v;
        }
    }
    let norm = dot(&dir, &dir).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        log::warn!("degenerate gradient system; falling back to the plain sum");
        let mut sum = vec![0.0; dim];
        for g in &active {
            for (s, v) in sum.iter_mut().zip(g.iter()) {
                *s += v;
            }
        }
        return Ok(Combined { grad: sum, fallback: true });
    }
    for d in &mut dir {
        *d /= norm;
    }
    let magnitude: f64 = active.iter().map(|g| dot(g, &dir)).sum();
    Ok(Combined { grad: dir.iter().map(|d| d * magnitude).collect(), fallback: false })
}

/// Plain sum of gradients, used when ConFIG is disabled.
pub fn sum_gradients(grads: &[Vec<f64>]) -> Vec<f64> {
    let dim = grads.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for g in grads {
        for (o, v) in out.iter_mut().zip(g) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Combine per-loss gradients with ConFIG instead of summing them.
    pub config: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { lr_max: 1e-3, lr_min: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8, config: true }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::InvalidConfig("need 0 <= lr_min <= lr_max, lr_max > 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, cfg: &OptimConfig) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }
}

/// Bias-corrected Adam update of `theta` in place.
pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if theta.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::LengthMismatch(theta.len(), grad.len()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("Adam gradient"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub t_max: usize,
}

/// Cosine annealing from `lr_max` at epoch 0 to `lr_min` at `t_max`.
pub fn cosine_lr(epoch: usize, sched: &LrSchedule) -> f64 {
    if sched.t_max == 0 {
        return sched.lr_max;
    }
    let frac = epoch.min(sched.t_max) as f64 / sched.t_max as f64;
    sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_gradient_passes_through() {
        let g = vec![0.3, -1.2, 4.0];
        let out = config_combine(std::slice::from_ref(&g)).unwrap();
        for (a, b) in out.grad.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_pair() {
        let out = config_combine(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!((out.grad[0] - 1.0).abs() < 1e-12);
        assert!((out.grad[1] - 1.0).abs() < 1e-12);
        assert!(out.grad[2].abs() < 1e-12);
    }

    #[test]
    fn collinear_pair() {
        let g1 = vec![1.0, 2.0, -1.0];
        let g2: Vec<f64> = g1.iter().map(|v| 2.0 * v).collect();
        let out = config_combine(&[g1.clone(), g2.clone()]).unwrap();
        assert!(!out.fallback);
        assert!(dot(&out.grad, &g1) > 0.0 && dot(&out.grad, &g2) > 0.0);
        // parallel to g1 with magnitude |g1| + |g2|
        let n1 = dot(&g1, &g1).sqrt();
        for (a, b) in out.grad.iter().zip(&g1) {
            assert!((a - 3.0 * b).abs() < 1e-9 * n1);
        }
    }

    #[test]
    fn zero_gradients() {
        assert!(matches!(config_combine(&[vec![0.0; 3], vec![0.0; 3]]), Err(Error::AllZeroGradients)));
        let out = config_combine(&[vec![0.0; 2], vec![0.0, 2.0]]).unwrap();
        assert_eq!(out.grad, vec![0.0, 2.0]);
    }

    proptest! {
        #[test]
        fn equal_positive_projections(seed in 0u64..10_000, m in 2usize..=8, extra in 0usize..=56) {
            use rand::{Rng, SeedableRng};
            let dim = (m + extra).max(4);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grads: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
                    (0..dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
                })
                .collect();
            let out = config_combine(&grads).unwrap();
            let proj: Vec<f64> = grads.iter().map(|g| dot(g, &out.grad) / dot(g, g).sqrt()).collect();
            for p in &proj {
                prop_assert!(*p > 0.0);
                prop_assert!((p - proj[0]).abs() <= 1e-8 * proj[0].abs());
            }
        }
    }

    #[test]
    fn adam_examples() {
        let cfg = OptimConfig::default();
        let mut theta = vec![1.0, -2.0];
        let mut st = AdamState::new(2, &cfg);
        for _ in 0..5 {
            adam_step(&mut theta, &[0.0, 0.0], &mut st, 1e-3).unwrap();
        }
        assert_eq!(theta, vec![1.0, -2.0]);

        let mut theta = vec![0.0];
        let mut st = AdamState::new(1, &cfg);
        adam_step(&mut theta, &[1.0], &mut st, 1e-3).unwrap();
        assert!((theta[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);

        let run = || {
            let mut theta = vec![0.5, 0.25, -1.0];
            let mut st = AdamState::new(3, &cfg);
            for k in 0..50 {
                let g: Vec<f64> = theta.iter().map(|t| (t * k as f64).sin()).collect();
                adam_step(&mut theta, &g, &mut st, 1e-2).unwrap();
            }
            theta
        };
        assert_eq!(run(), run());
        assert!(adam_step(&mut [0.0], &[f64::NAN], &mut AdamState::new(1, &cfg), 1e-3).is_err());
    }

    #[test]
    fn adam_step_is_bounded_by_lr() {
        let cfg = OptimConfig::default();
        let mut st = AdamState::new(3, &cfg);
        let mut theta = vec![0.0; 3];
        for k in 0..200 {
            let before = theta.clone();
            let g = [1e6 * (k as f64).sin(), -1e-6, 3.0];
            adam_step(&mut theta, &g, &mut st, 1e-3).unwrap();
            for (a, b) in theta.iter().zip(&before) {
                // |m_hat| <= sqrt(v_hat) up to the bias-correction slack
                assert!((a - b).abs() <= 1e-3 * 3.2);
            }
        }
    }

    #[test]
    fn cosine_examples() {
        let s = LrSchedule { lr_max: 1e-3, lr_min: 1e-5, t_max: 100 };
        assert_eq!(cosine_lr(0, &s), 1e-3);
        assert!((cosine_lr(100, &s) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, &s) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for e in 0..=100 {
            let lr = cosine_lr(e, &s);
            assert!(lr <= prev && lr >= s.lr_min && lr <= s.lr_max);
            prev = lr;
        }
    }
}
