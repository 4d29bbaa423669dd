use super::matrix::{Matrix, Parameter};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Apply weight decay directly to the values (`true`) or fold
    /// `weight_decay · value` into the gradient before the moment updates.
    pub decoupled: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decoupled: true,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&mut Parameter]) -> Self {
        let zeros = |p: &&mut Parameter| Matrix::zeros(p.value.rows(), p.value.cols());
        AdamState {
            config,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update over `params`, which must be passed in
    /// the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed between steps");
        self.t += 1;
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            decoupled,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let value = p.value.as_mut_slice();
            let grad = p.grad.as_slice();
            for (((w, &g0), m), v) in value
                .iter_mut()
                .zip(grad)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                let g = if decoupled {
                    *w -= lr * weight_decay * *w;
                    g0
                } else {
                    g0 + weight_decay * *w
                };
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64) -> Parameter {
        Parameter::new(Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        let mut p = param(0.75);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[&mut p]);
        for _ in 0..5 {
            st.step(&mut [&mut p]);
        }
        assert_eq!(p.value.get(0, 0), 0.75);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // f(w) = w²/2, so g = w = 1 and the bias-corrected step is lr·g/(|g| + ε).
        let mut p = param(1.0);
        p.grad.set(0, 0, 1.0);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[&mut p]);
        st.step(&mut [&mut p]);
        let delta = 1.0 - p.value.get(0, 0);
        assert!(delta > 0.9 * cfg.lr && delta < 1.1 * cfg.lr, "{delta}");
    }

    #[test]
    fn zero_lr_leaves_values() {
        let mut p = param(-2.0);
        p.grad.set(0, 0, 3.0);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[&mut p]);
        st.step(&mut [&mut p]);
        st.step(&mut [&mut p]);
        assert_eq!(p.value.get(0, 0), -2.0);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn decoupled_and_folded_decay_differ() {
        let run = |decoupled| {
            let mut p = param(2.0);
            p.grad.set(0, 0, 0.1);
            let cfg = AdamConfig {
                weight_decay: 0.1,
                decoupled,
                ..AdamConfig::default()
            };
            let mut st = AdamState::new(cfg, &[&mut p]);
            for _ in 0..3 {
                st.step(&mut [&mut p]);
            }
            p.value.get(0, 0)
        };
        assert_ne!(run(true), run(false));
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut p = Parameter::new(Matrix::from_vec(1, 3, vec![0.3, -0.1, 2.0]).unwrap());
            let mut st = AdamState::new(AdamConfig::default(), &[&mut p]);
            for k in 0..20 {
                for (i, g) in p.grad.as_mut_slice().iter_mut().enumerate() {
                    *g = ((k * 3 + i) as f64).sin();
                }
                st.step(&mut [&mut p]);
            }
            p.value.into_vec()
        };
        let a: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}
