//! Adam and SGD with global-norm gradient clipping.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Adam with bias correction. Moment accumulators mirror parameter shapes;
/// `t` increments by exactly one per step.
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(params: &[&Tensor], cfg: AdamConfig) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            cfg,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "param/grad/state counts differ: {}/{}/{}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::dim(
                    "adam_step",
                    format!("param {i}: shape {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for j in 0..pd.len() {
                let gj = g.data()[j];
                let mj = c.beta1 * m.data()[j] + (1.0 - c.beta1) * gj;
                let vj = c.beta2 * v.data()[j] + (1.0 - c.beta2) * gj * gj;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                pd[j] -= c.lr * (mj / bc1) / ((vj / bc2).sqrt() + c.eps);
            }
        }
        for (i, p) in params.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite parameter after adam step {} (param {i})",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Plain gradient descent; kept for the simple convex test cases.
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("sgd_step", "param/grad counts differ"));
        }
        for (p, g) in params.iter_mut().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim("sgd_step", "shape mismatch"));
            }
            for (pj, gj) in p.data_mut().iter_mut().zip(g.data()) {
                *pj -= self.lr * gj;
            }
        }
        Ok(())
    }
}

/// Scale all gradients if their joint L2 norm exceeds `max_norm`.
/// Returns the pre-clip norm. All training loops clip at 5.0.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

pub const GRAD_CLIP_NORM: f64 = 5.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let g = Tensor::zeros(&[3]);
        let mut adam = AdamState::new(&[&p], AdamConfig::default());
        let before = p.clone();
        adam.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.t(), 1);
    }

    #[test]
    fn first_step_moves_by_minus_lr() {
        // Fresh state, g = 1: bias-corrected m-hat = v-hat = 1, so the
        // update is -lr / (1 + eps) = -lr to within ~1e-8 relative.
        let lr = 0.1;
        let mut p = Tensor::scalar(2.0);
        let g = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&[&p], AdamConfig::with_lr(lr));
        adam.step(&mut [&mut p], &[g]).unwrap();
        let delta = p.item() - 2.0;
        assert!(((delta + lr) / lr).abs() < 1e-7, "delta = {delta}");
    }

    #[test]
    fn descends_a_convex_quadratic() {
        // f(x) = x^2 from x = 5, lr = 0.1: |x| strictly decreases for the
        // first 20 steps.
        let mut x = Tensor::scalar(5.0);
        let mut adam = AdamState::new(&[&x], AdamConfig::with_lr(0.1));
        let mut prev = x.item().abs();
        for _ in 0..20 {
            let mut tape = Tape::new();
            let xv = tape.param(x.clone());
            let loss = tape.square(xv);
            let grads = tape.backward(loss).unwrap();
            let g = grads.wrt(&tape, xv);
            adam.step(&mut [&mut x], &[g]).unwrap();
            let cur = x.item().abs();
            assert!(cur < prev, "|x| did not decrease: {cur} >= {prev}");
            prev = cur;
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut p = Tensor::vector(vec![0.0; 3]);
        let g = Tensor::vector(vec![0.0; 2]);
        let mut adam = AdamState::new(&[&p], AdamConfig::default());
        assert!(matches!(
            adam.step(&mut [&mut p], &[g]),
            Err(Error::Dim { .. })
        ));
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut gs = vec![Tensor::vector(vec![3.0, 0.0]), Tensor::vector(vec![0.0, 4.0])];
        let norm = clip_global_norm(&mut gs, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped: f64 = gs
            .iter()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);
    }
}
