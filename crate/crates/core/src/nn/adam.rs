use serde::{Deserialize, Serialize};

use super::{shape_err, NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.00002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update; `t` is incremented before use.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Vec<T>]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(shape_err(
                "adam",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(shape_err("adam", format!("parameter {i} size differs")));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let bc1 = T::one() - b1.powi(self.t as i32);
        let bc2 = T::one() - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::<f64>::zeros(&[1])];
        let mut st = AdamState::new(cfg, &params);
        st.step(&mut params, &[vec![1.0]]).unwrap();
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((params[0].data()[0] - expected).abs() < 1e-12);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let mut params = vec![Tensor::<f64>::filled(&[3], 0.25)];
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params, &[vec![0.0; 3]]).unwrap();
        assert_eq!(params[0].data(), &[0.25; 3]);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut params = vec![Tensor::<f32>::filled(&[2], 1.0)];
            let mut st = AdamState::new(AdamConfig::default(), &params);
            for _ in 0..2 {
                st.step(&mut params, &[vec![0.3, -0.7]]).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![Tensor::<f64>::zeros(&[2])];
        let mut st = AdamState::new(AdamConfig::default(), &params);
        assert!(matches!(
            st.step(&mut params, &[vec![1.0]]),
            Err(NnError::ShapeMismatch { .. })
        ));
    }
}
