//! Log transform from phase density `u` to the viscous signed distance
//! `w = -√ε log(1 - |u|) sign(u)`, its gradient, and the eikonal residual diagnostic.

use crate::error::{Error, Result};
use crate::field::{FieldEval, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub epsilon: f64,
    /// Largest `|u|` allowed inside the logarithm.
    pub clamp: f64,
}

impl TransformConfig {
    pub const DEFAULT_CLAMP: f64 = 1.0 - 1e-7;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            clamp: Self::DEFAULT_CLAMP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive (got {})", self.epsilon)));
        }
        if !(self.clamp > 0.0 && self.clamp < 1.0) {
            return Err(Error::Config(format!("clamp must lie in (0, 1) (got {})", self.clamp)));
        }
        Ok(())
    }
}

#[inline]
fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `w(u)`; odd, strictly increasing on the clamped range, zero exactly at `u = 0`.
pub fn log_transform(u: f64, cfg: &TransformConfig) -> f64 {
    let a = u.abs().min(cfg.clamp);
    -cfg.epsilon.sqrt() * (-a).ln_1p() * sign(u)
}

/// `∇w = √ε ∇u / (1 - |u|)` with `|u|` clamped.
pub fn log_transform_grad(u: f64, grad_u: &[f64], cfg: &TransformConfig) -> Vec<f64> {
    let s = cfg.epsilon.sqrt() / (1.0 - u.abs().min(cfg.clamp));
    grad_u.iter().map(|g| s * g).collect()
}

/// Fills `w` and `grad_w` of a field evaluation.
pub fn with_transform(mut e: FieldEval, cfg: &TransformConfig) -> FieldEval {
    e.w = Some(log_transform(e.u, cfg));
    e.grad_w = Some(log_transform_grad(e.u, &e.grad_x, cfg));
    e
}

/// Default finite-difference step of [`eikonal_residual`].
pub const EIKONAL_FD_STEP: f64 = 1e-4;

/// `-√ε Δw + sign(u)(‖∇w‖² - 1)` at `x`, with `Δw` from central differences of `∇w`.
pub fn eikonal_residual(
    field: &dyn ScalarField,
    x: &[f64],
    cfg: &TransformConfig,
    h: f64,
) -> Result<f64> {
    let e = field.value_and_grad(x)?;
    if e.u == 0.0 {
        return Err(Error::invalid("eikonal residual is undefined where u = 0"));
    }
    let gw = log_transform_grad(e.u, &e.grad_x, cfg);
    let mut lap = 0.0;
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let ep = field.value_and_grad(&xp)?;
        xp[j] = x[j] - h;
        let em = field.value_and_grad(&xp)?;
        xp[j] = x[j];
        let gp = log_transform_grad(ep.u, &ep.grad_x, cfg)[j];
        let gm = log_transform_grad(em.u, &em.grad_x, cfg)[j];
        lap += (gp - gm) / (2.0 * h);
    }
    let n2: f64 = gw.iter().map(|g| g * g).sum();
    Ok(-cfg.epsilon.sqrt() * lap + sign(e.u) * (n2 - 1.0))
}

/// Rounded occupancy: `+1` outside, `-1` inside, `0` on the interface.
pub fn occupancy(u: f64) -> i8 {
    sign(u) as i8
}
