//! Adamax: Adam with an infinity-norm second moment.
//!
//! m_t = b1 m + (1-b1) g, u_t = max(b2 u, |g|),
//! theta -= lr / (1 - b1^t) * m_t / (u_t + eps).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamaxParams {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamaxParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

macro_rules! adamax_impl {
    ($name:ident, $t:ty) => {
        #[allow(clippy::too_many_arguments)]
        pub fn $name(
            params: &mut [$t],
            grads: &[$t],
            m: &mut [$t],
            u: &mut [$t],
            step: u64,
            lr: $t,
            beta1: $t,
            beta2: $t,
            eps: $t,
        ) {
            debug_assert_eq!(params.len(), grads.len());
            debug_assert_eq!(params.len(), m.len());
            debug_assert_eq!(params.len(), u.len());
            let bias = 1.0 - beta1.powi(step as i32);
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
                u[i] = (beta2 * u[i]).max(grads[i].abs());
                params[i] -= lr / bias * m[i] / (u[i] + eps);
            }
        }
    };
}

adamax_impl!(adamax_step_f32, f32);
adamax_impl!(adamax_step_f64, f64);

/// Per-tensor optimizer state.
#[derive(Debug, Clone)]
pub struct AdamaxState {
    m: Vec<f32>,
    u: Vec<f32>,
    t: u64,
}

impl AdamaxState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            u: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32, hp: &AdamaxParams) {
        self.t += 1;
        adamax_step_f32(
            params, grads, &mut self.m, &mut self.u, self.t, lr, hp.beta1, hp.beta2, hp.eps,
        );
    }
}
