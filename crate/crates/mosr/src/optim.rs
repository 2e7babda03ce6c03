//! First-order adaptive-moment optimizer with bias-corrected estimates
//! (decay rates 0.9/0.999, ε = 1e-8).

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    bc1: f64,
    bc2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            bc1: 1.0,
            bc2: 1.0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Advance the step counter and bias corrections. Call once per
    /// optimizer step, before the `update_slice` walk.
    pub fn begin_step(&mut self) {
        self.t += 1;
        self.bc1 = 1.0 - self.beta1.powi(self.t as i32);
        self.bc2 = 1.0 - self.beta2.powi(self.t as i32);
    }

    /// Update one parameter slice whose moments live at `offset`. Slices
    /// must tile the full parameter vector exactly once per step.
    pub fn update_slice(&mut self, params: &mut [f64], grads: &[f64], offset: usize) {
        assert_eq!(params.len(), grads.len());
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / self.bc1;
            let v_hat = v[i] / self.bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.begin_step();
        self.update_slice(params, grads, 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_a_quadratic_within_budget() {
        // f(x) = (x − 3)², ∇f = 2(x − 3).
        let mut adam = Adam::new(0.05, 1);
        let mut x = [0.0f64];
        let mut converged_at = None;
        for step in 1..=5000 {
            let g = [2.0 * (x[0] - 3.0)];
            adam.step(&mut x, &g);
            if (x[0] - 3.0).abs() <= 1e-3 {
                converged_at = Some(step);
                break;
            }
        }
        assert!(
            converged_at.is_some(),
            "no convergence within 5000 steps, final x = {}",
            x[0]
        );
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut adam = Adam::new(0.0, 3);
        let mut p = [1.0, -2.0, 0.5];
        let before = p;
        for _ in 0..10 {
            adam.step(&mut p, &[0.3, -0.1, 4.0]);
        }
        assert_eq!(p, before);
    }
}
