use super::tensor::{Param, Real};

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Updates every parameter in place from its gradient, then zeroes the gradient.
    pub fn step<T: Real>(&self, params: &mut [&mut Param<T>]) {
        for p in params.iter_mut() {
            p.step_count += 1;
            let t = p.step_count as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
            let Param {
                value, grad, m, v, ..
            } = &mut **p;
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i].as_f64() / c1;
                let v_hat = v[i].as_f64() / c2;
                let delta = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                value[i] -= T::of(delta);
                grad[i] = T::zero();
            }
        }
    }
}

/// Free-function form of [`Adam::step`].
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], lr: f64, beta1: f64, beta2: f64, eps: f64) {
    Adam {
        lr,
        beta1,
        beta2,
        eps,
    }
    .step(params)
}
