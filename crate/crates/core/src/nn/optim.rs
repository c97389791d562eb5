pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam over a flat parameter vector. Weight decay is classic L2: `λθ` is added to the
/// gradient before the moment updates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64, weight_decay: f64) -> Self {
        Adam {
            learning_rate,
            weight_decay,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step on `params` given the loss gradient.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_on_quadratic() {
        // f(θ) = ½‖θ‖², ∇ = θ; with decay λ the effective gradient is (1+λ)θ.
        let theta0 = [1.5, -0.25, 0.0];
        let (lr, wd) = (0.01, 0.1);
        let mut theta = theta0;
        let mut opt = Adam::new(3, lr, wd);
        opt.step(&mut theta, &theta0.clone());
        for i in 0..3 {
            let g = (1.0 + wd) * theta0[i];
            let m_hat = (1.0 - ADAM_BETA1) * g / (1.0 - ADAM_BETA1);
            let v_hat = (1.0 - ADAM_BETA2) * g * g / (1.0 - ADAM_BETA2);
            let expected = theta0[i] - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            assert!((theta[i] - expected).abs() <= 1e-12, "{} vs {expected}", theta[i]);
        }
    }

    #[test]
    fn second_step_bias_correction() {
        let mut theta = [2.0];
        let mut opt = Adam::new(1, 0.1, 0.0);
        opt.step(&mut theta, &[2.0]);
        let t1 = theta[0];
        opt.step(&mut theta, &[t1]);
        let m = 0.9 * 0.1 * 2.0 + 0.1 * t1;
        let v = 0.999 * 0.001 * 4.0 + 0.001 * t1 * t1;
        let expected = t1 - 0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + ADAM_EPS);
        assert!((theta[0] - expected).abs() <= 1e-12);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut theta = [0.3, 0.7];
        Adam::new(2, 0.0, 0.0).step(&mut theta, &[5.0, -1.0]);
        assert_eq!(theta, [0.3, 0.7]);
    }
}
