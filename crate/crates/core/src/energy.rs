//! The convex stage energy minimized at every time step, its gradients, the
//! element-wise pressure recovery, and the norms in which coupling iterations
//! are measured.
//!
//! The stage problem is the first-order optimality system of
//! `E(u, q) = 1/(2 dt^2) <M_u u, u> + t1/2 <K_C u, u> + t1 t2 dt / 2 <M_k q, q> +
//! t1/2 <M_p^{-1} r, r> - <f, u> - t1 t2 dt <g, q>` with the flow residual
//! `r = h - A u - t2 dt D q`, where `t1, t2` are the stage weights. Pressure
//! is recovered element-wise as `p = M_p^{-1} r`, which is well defined
//! because the constrained-storage coefficient is strictly positive.

use nalgebra::DVector;

use crate::assemble::OperatorSet;
use crate::model::ThetaParams;

/// Dual data of one stage problem (time-step information already folded in).
#[derive(Clone, Debug)]
pub struct StageRhs {
    pub f_hat: DVector<f64>,
    pub h_hat: DVector<f64>,
    pub g_hat: DVector<f64>,
}

/// Primal unknowns of the stage problem.
#[derive(Clone, Debug, PartialEq)]
pub struct StageState {
    pub u: DVector<f64>,
    pub q: DVector<f64>,
}

impl StageState {
    pub fn zeros(ops: &OperatorSet) -> Self {
        Self {
            u: DVector::zeros(ops.n_u),
            q: DVector::zeros(ops.n_q),
        }
    }
}

/// Flow residual `r = h - A u - t2 dt D q` (a dual pressure vector).
pub fn flow_residual(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
) -> DVector<f64> {
    let mut r = rhs.h_hat.clone();
    r -= &ops.a_a * &state.u;
    r -= (&ops.d * &state.q) * (theta.theta2 * theta.dt);
    r
}

/// Element-wise pressure recovery `p = M_p^{-1} (h - A u - t2 dt D q)`.
pub fn recover_pressure(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
) -> DVector<f64> {
    let mut r = flow_residual(ops, theta, rhs, state);
    for i in 0..ops.n_p {
        r[i] /= ops.m_p[i];
    }
    r
}

/// Value of the stage energy at `state`.
pub fn evaluate_energy(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
) -> f64 {
    let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
    let r = flow_residual(ops, theta, rhs, state);
    let r_mp: f64 = (0..ops.n_p).map(|i| r[i] * r[i] / ops.m_p[i]).sum();
    0.5 / (dt * dt) * (&ops.m_u * &state.u).dot(&state.u)
        + 0.5 * t1 * (&ops.k_c * &state.u).dot(&state.u)
        + 0.5 * t1 * t2 * dt * (&ops.m_k * &state.q).dot(&state.q)
        + 0.5 * t1 * r_mp
        - rhs.f_hat.dot(&state.u)
        - t1 * t2 * dt * rhs.g_hat.dot(&state.q)
}

/// Gradient of the stage energy in the displacement block:
/// `1/dt^2 M_u u + t1 K_C u - t1 A^T p - f`.
pub fn grad_u(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
) -> DVector<f64> {
    let p = recover_pressure(ops, theta, rhs, state);
    let mut g = &ops.m_u * &state.u / (theta.dt * theta.dt);
    g += (&ops.k_c * &state.u) * theta.theta1;
    g -= ops.a_a.transpose() * p * theta.theta1;
    g -= &rhs.f_hat;
    g
}

/// Gradient of the stage energy in the flux block:
/// `t1 t2 dt (M_k q - D^T p - g)`.
pub fn grad_q(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
) -> DVector<f64> {
    let p = recover_pressure(ops, theta, rhs, state);
    let mut g = &ops.m_k * &state.q;
    g -= ops.d.transpose() * p;
    g -= &rhs.g_hat;
    g * (theta.theta1 * theta.theta2 * theta.dt)
}

fn mp_inv_norm_sq(ops: &OperatorSet, s: &DVector<f64>) -> f64 {
    (0..ops.n_p).map(|i| s[i] * s[i] / ops.m_p[i]).sum()
}

/// Squared coupled norm of an increment `(v, w)`:
/// `1/dt^2 |v|_{M_u}^2 + t1 |v|_{K_C}^2 + t1 t2 dt |w|_{M_k}^2 +
/// t1 |A v + t2 dt D w|_{M_p^{-1}}^2`.
/// It is exactly the quadratic form of the stage Hessian, so the energy gap
/// to the minimizer equals one half of this quantity.
pub fn triple_norm_sq(ops: &OperatorSet, theta: &ThetaParams, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
    let s = &ops.a_a * v + (&ops.d * w) * (t2 * dt);
    (&ops.m_u * v).dot(v) / (dt * dt)
        + t1 * (&ops.k_c * v).dot(v)
        + t1 * t2 * dt * (&ops.m_k * w).dot(w)
        + t1 * mp_inv_norm_sq(ops, &s)
}

/// Coupled norm of an increment; see [`triple_norm_sq`].
pub fn triple_norm(ops: &OperatorSet, theta: &ThetaParams, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    triple_norm_sq(ops, theta, v, w).sqrt()
}

/// Squared mechanics norm
/// `1/dt^2 |v|_{M_u}^2 + t1 |v|_{K_C}^2 + t1 |A v|_{M_p^{-1}}^2`.
pub fn mech_norm_sq(ops: &OperatorSet, theta: &ThetaParams, v: &DVector<f64>) -> f64 {
    let (t1, dt) = (theta.theta1, theta.dt);
    let av = &ops.a_a * v;
    (&ops.m_u * v).dot(v) / (dt * dt) + t1 * (&ops.k_c * v).dot(v) + t1 * mp_inv_norm_sq(ops, &av)
}

/// Mechanics norm of a displacement increment; see [`mech_norm_sq`].
pub fn mech_norm(ops: &OperatorSet, theta: &ThetaParams, v: &DVector<f64>) -> f64 {
    mech_norm_sq(ops, theta, v).sqrt()
}

/// Squared flux norm
/// `t1 t2 dt |w|_{M_k}^2 + t1 (t2 dt)^2 |D w|_{M_p^{-1}}^2`.
pub fn flux_norm_sq(ops: &OperatorSet, theta: &ThetaParams, w: &DVector<f64>) -> f64 {
    let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
    let dw = &ops.d * w;
    t1 * t2 * dt * (&ops.m_k * w).dot(w) + t1 * (t2 * dt) * (t2 * dt) * mp_inv_norm_sq(ops, &dw)
}

/// Flux norm of a flux increment; see [`flux_norm_sq`].
pub fn flux_norm(ops: &OperatorSet, theta: &ThetaParams, w: &DVector<f64>) -> f64 {
    flux_norm_sq(ops, theta, w).sqrt()
}
