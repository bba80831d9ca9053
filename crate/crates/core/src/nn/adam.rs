use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BETA1: f64 = 0.95;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Per-parameter first and second moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the default constants
    /// (momentum 0.95, beta2 0.999, epsilon 1e-8).
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self::with_constants(params, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_constants<'a>(
        params: impl IntoIterator<Item = &'a Tensor>,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        let first_moment: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second_moment = first_moment.clone();
        Self {
            first_moment,
            second_moment,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Input(format!("learning rate {lr} must be positive")));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[k].shape() {
            return Err(Error::Dimension(format!(
                "adam: parameter {k} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    state.step_count += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let t = state.step_count as f64;
    let correction1 = 1.0 - b1.powf(t);
    let correction2 = 1.0 - b2.powf(t);
    for (k, p) in params.iter_mut().enumerate() {
        let m = state.first_moment[k].data_mut();
        let v = state.second_moment[k].data_mut();
        for (((w, &g), mi), vi) in p.data_mut().iter_mut().zip(grads[k].data()).zip(m).zip(v) {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut state, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        // With constant g, m_hat = g and v_hat = g^2 after bias correction, so
        // each step moves by lr * |g| / (|g| + eps) -> lr.
        let lr = 1e-3;
        for g in [0.3, -2.0] {
            let mut p = Tensor::zeros(&[1]);
            let mut state = AdamState::new([&p]);
            let grad = Tensor::full(&[1], g);
            let mut prev = 0.0;
            for step in 0..2000 {
                adam_step(&mut [&mut p], std::slice::from_ref(&grad), &mut state, lr).unwrap();
                let delta = p.data()[0] - prev;
                prev = p.data()[0];
                if step > 100 {
                    assert!((delta.abs() - lr).abs() < 1e-9, "{delta}");
                    assert_eq!(delta.signum(), -g.signum());
                }
            }
            assert_eq!(state.step_count, 2000);
        }
    }

    #[test]
    fn rejects_mismatches_and_bad_lr() {
        let mut p = Tensor::zeros(&[2]);
        let mut state = AdamState::new([&p]);
        assert!(matches!(
            adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut state, 1e-3),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut state, 0.0),
            Err(Error::Input(_))
        ));
        assert_eq!(state.step_count, 0);
    }
}
