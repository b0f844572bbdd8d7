use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Momentum buffer for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub velocity: Vec<f64>,
}

impl SgdState {
    pub fn new(len: usize) -> Self {
        Self {
            velocity: vec![0.0; len],
        }
    }
}

/// Classical momentum: `v <- momentum*v - lr*grad; w <- w + v`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], state: &mut SgdState, lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.velocity.len() {
        return Err(Error::shape(format!(
            "sgd step with {} params, {} gradients, {} velocities",
            params.len(),
            grad.len(),
            state.velocity.len()
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!("momentum {momentum} outside [0, 1)")));
    }
    for ((w, &g), v) in params.iter_mut().zip(grad).zip(&mut state.velocity) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
    Ok(())
}
