//! Network-free references: closed-form 1D solutions, grid solvers for the screened
//! Poisson problem and its viscous-distance limit, the well constant, and a direct grid
//! minimiser of the discretised phase-field energy.

mod gridmin;
mod poisson;

pub use gridmin::{
    minimize_grid_functional, wch_grid_energy, GridInit, GridMinConfig, GridMinResult,
};
pub use poisson::{
    distance_to_boundary, solve_screened_poisson, varadhan_error, viscous_distance, NodeKind,
    RegionMask,
};

use crate::error::{Error, Result};
use crate::loss::double_well;

/// `log cosh t` without overflow.
pub fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Solution of `-εu'' + u - 1 = 0` on `(-L, L)` with `u(±L) = 0`, and its transform
/// `w = -√ε log(1 - u)`. Both are computed from log-cosh so large `L/√ε` stays finite.
pub fn analytic_interval_solution(x: f64, half_length: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive (got {epsilon})")));
    }
    if !(x.abs() <= half_length) {
        return Err(Error::invalid(format!("|x| = {} exceeds L = {half_length}", x.abs())));
    }
    let s = epsilon.sqrt();
    // log(1 - u) = log cosh(x/√ε) - log cosh(L/√ε) <= 0
    let log_v = log_cosh(x / s) - log_cosh(half_length / s);
    Ok((-log_v.exp_m1(), -s * log_v))
}

/// `σ₀ = 2 ∫₋₁¹ √W(s) ds` by the composite trapezoid rule with `quad_points` nodes on each
/// half interval (the integrand has a kink at 0 and is linear on each half).
pub fn sigma0_quadrature(quad_points: usize) -> Result<f64> {
    Ok(2.0 * (half_integral(-1.0, quad_points)? + half_integral(1.0, quad_points)?))
}

/// Trapezoid `∫ √W` over `[0, 1]` (`side = 1`) or `[-1, 0]` (`side = -1`).
fn half_integral(side: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("quad_points must be at least 2 (got {n})")));
    }
    let h = 1.0 / (n - 1) as f64;
    let f = |i: usize| double_well(side * i as f64 * h).sqrt();
    let inner: f64 = (1..n - 1).map(f).sum();
    Ok(h * (0.5 * (f(0) + f(n - 1)) + inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_examples() {
        let (u, w) = analytic_interval_solution(1.0, 1.0, 0.01).unwrap();
        assert!(u.abs() < 1e-15 && w.abs() < 1e-15);
        let (u, _) = analytic_interval_solution(-1.0, 1.0, 0.01).unwrap();
        assert!(u.abs() < 1e-15);
        let (u, _) = analytic_interval_solution(0.0, 1.0, 0.01).unwrap();
        assert!((u - (1.0 - 1.0 / 10f64.cosh())).abs() < 1e-14);
        assert!((u - 0.9999092).abs() < 1e-7);
        let (_, w) = analytic_interval_solution(0.5, 1.0, 0.01).unwrap();
        assert!((w - 0.5).abs() <= 1e-3, "{w}");
        assert!(analytic_interval_solution(1.5, 1.0, 0.01).is_err());
        assert!(analytic_interval_solution(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn interval_solution_stays_finite_for_tiny_epsilon() {
        let (u, w) = analytic_interval_solution(0.0, 1.0, 1e-8).unwrap();
        assert_eq!(u, 1.0);
        assert!((w - (1.0 - 1e-4 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn interval_solution_solves_the_ode() {
        let eps = 0.05;
        let h = 1e-4;
        for i in 1..20 {
            let x = -0.95 + 0.1 * i as f64;
            let u = |x| analytic_interval_solution(x, 1.0, eps).unwrap().0;
            let upp = (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
            assert!((-eps * upp + u(x) - 1.0).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn sigma0_examples() {
        assert!((sigma0_quadrature(2).unwrap() - 2.0).abs() <= 1e-6);
        assert!((sigma0_quadrature(1_000_000).unwrap() - 2.0).abs() <= 1e-6);
        let full = sigma0_quadrature(101).unwrap();
        let half = 2.0 * 2.0 * half_integral(1.0, 101).unwrap();
        assert!((full - half).abs() <= 1e-12);
        assert!(sigma0_quadrature(1).is_err());
    }
}
