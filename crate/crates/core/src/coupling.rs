//! Stage solvers: the monolithic SPD solve and the two equivalent coupled
//! iterations (undrained split and alternating block minimization), with
//! per-iteration convergence records.
//!
//! Both iterations are Gauss-Seidel sweeps over the mechanics and flow
//! blocks. The undrained-split sweep keeps the fluid content frozen during
//! the mechanics solve; the alternating-minimization sweep minimizes the
//! stage energy over one block at a time. With the pressure of the previous
//! iterate recovered element-wise the two produce identical iterates, which
//! is checked by tests rather than assumed: the two paths assemble their
//! matrices and right-hand sides independently.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::assemble::OperatorSet;
use crate::energy::{evaluate_energy, recover_pressure, triple_norm, StageRhs, StageState};
use crate::error::{Error, Result};
use crate::linalg::{InnerMethod, SpdSolver};
use crate::model::ThetaParams;

/// Iteration and linear-solver controls.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative decrease of the coupled increment norm that stops the outer
    /// iteration.
    pub tol_outer: f64,
    /// Hard cap on outer iterations per time step.
    pub max_outer: usize,
    /// Relative residual target of iterative inner solves.
    pub tol_lin: f64,
    /// Inner linear solver.
    pub inner: InnerMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_outer: 1e-10,
            max_outer: 200,
            tol_lin: 1e-12,
            inner: InnerMethod::Direct,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_outer > 0.0 && self.tol_outer < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tol_outer must lie in (0, 1), got {}",
                self.tol_outer
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max_outer must be at least 1".into()));
        }
        if !(self.tol_lin > 0.0 && self.tol_lin < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tol_lin must lie in (0, 1), got {}",
                self.tol_lin
            )));
        }
        Ok(())
    }
}

/// Why the outer iteration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

/// Convergence data of one outer iteration.
///
/// The reference-based fields (`energy_gap`, `err_norm`, `factor`) are filled
/// only when the exact stage solution was supplied; `factor` is additionally
/// withheld for the first iteration and whenever the previous error is within
/// a factor `1e3 eps` of the initial error, where rounding noise would make
/// the quotient meaningless.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub k: usize,
    /// Stage energy after the full sweep.
    pub energy: f64,
    /// Stage energy after the mechanics half-sweep.
    pub energy_after_mech: f64,
    /// Coupled norm of the difference to the previous iterate.
    pub increment: f64,
    pub mech_iters: usize,
    pub flow_iters: usize,
    pub energy_gap: Option<f64>,
    pub err_norm: Option<f64>,
    pub factor: Option<f64>,
}

/// Outcome of a coupled stage solve.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub stop: StopReason,
    /// A-priori contraction bound `x / (c0 + x)`.
    pub theory_rate: f64,
    /// Measured mean of `energy_gap / err_norm^2` over iterations where the
    /// gap is numerically resolvable; constant for an exact quadratic.
    pub gap_to_norm: Option<f64>,
}

/// Stage solution together with its convergence history.
#[derive(Clone, Debug)]
pub struct CoupledSolveResult {
    pub state: StageState,
    pub pressure: DVector<f64>,
    pub report: IterationReport,
}

/// Residuals of the three coupled equations at a stage state; the mass
/// residual is identically zero when the pressure comes from the element-wise
/// recovery, so a nonzero value flags an inconsistent triple.
#[derive(Clone, Copy, Debug)]
pub struct ResidualNorms {
    pub momentum: f64,
    pub mass: f64,
    pub darcy: f64,
}

/// Max-norm residuals of momentum, mass and Darcy equations at `(state, p)`.
pub fn residual_norms(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
    p: &DVector<f64>,
) -> ResidualNorms {
    let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
    let momentum = (&ops.m_u * &state.u / (dt * dt) + (&ops.k_c * &state.u) * t1
        - ops.a_a.transpose() * p * t1
        - &rhs.f_hat)
        .amax();
    let mass = (DVector::from_fn(ops.n_p, |i, _| ops.m_p[i] * p[i]) + &ops.a_a * &state.u
        + (&ops.d * &state.q) * (t2 * dt)
        - &rhs.h_hat)
        .amax();
    let darcy = (&ops.m_k * &state.q - ops.d.transpose() * p - &rhs.g_hat).amax();
    ResidualNorms {
        momentum,
        mass,
        darcy,
    }
}

/// Scale rows of `m` by `w` (diagonal left-multiplication).
fn scale_rows(m: &CsrMatrix<f64>, w: impl Fn(usize) -> f64) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        coo.push(i, j, v * w(i));
    }
    CsrMatrix::from(&coo)
}

fn add_block(coo: &mut CooMatrix<f64>, m: &CsrMatrix<f64>, ri: usize, ci: usize, scale: f64) {
    for (i, j, v) in m.triplet_iter() {
        coo.push(ri + i, ci + j, v * scale);
    }
}

/// Cached factorizations for all stage solves of a fixed operator set and
/// stage weights.
pub struct StageSolver<'a> {
    ops: &'a OperatorSet,
    theta: ThetaParams,
    settings: SolverSettings,
    /// `D^T` cached for right-hand-side products.
    d_t: CsrMatrix<f64>,
    /// `A^T` cached for right-hand-side products.
    a_t: CsrMatrix<f64>,
    mech: Option<SpdSolver>,
    flow: Option<SpdSolver>,
    am_mech: Option<SpdSolver>,
    am_flow: Option<SpdSolver>,
    mono: Option<SpdSolver>,
}

impl<'a> StageSolver<'a> {
    pub fn new(ops: &'a OperatorSet, theta: ThetaParams, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            ops,
            theta,
            settings,
            d_t: ops.d.transpose(),
            a_t: ops.a_a.transpose(),
            mech: None,
            flow: None,
            am_mech: None,
            am_flow: None,
            mono: None,
        })
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn mp_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.ops.n_p, |i, _| v[i] / self.ops.m_p[i])
    }

    fn make_solver(&self, m: &CsrMatrix<f64>) -> Result<SpdSolver> {
        SpdSolver::new(m, self.settings.inner, self.settings.tol_lin)
    }

    /// Mechanics block `1/dt^2 M_u + t1 (K_C + K_aa)`, shared by the split
    /// iteration's mechanics step; uses the directly assembled coupling
    /// stiffness.
    fn ensure_mech(&mut self) -> Result<&SpdSolver> {
        if self.mech.is_none() {
            let (t1, dt) = (self.theta.theta1, self.theta.dt);
            let ops = self.ops;
            let mut coo = CooMatrix::new(ops.n_u, ops.n_u);
            add_block(&mut coo, &ops.m_u, 0, 0, 1.0 / (dt * dt));
            add_block(&mut coo, &ops.k_c, 0, 0, t1);
            add_block(&mut coo, &ops.k_aa, 0, 0, t1);
            self.mech = Some(self.make_solver(&CsrMatrix::from(&coo))?);
        }
        Ok(self.mech.as_ref().unwrap())
    }

    /// Flow block `M_k + t2 dt D^T M_p^{-1} D` of the split iteration.
    fn ensure_flow(&mut self) -> Result<&SpdSolver> {
        if self.flow.is_none() {
            let (t2, dt) = (self.theta.theta2, self.theta.dt);
            let ops = self.ops;
            let mp_d = scale_rows(&ops.d, |i| 1.0 / ops.m_p[i]);
            let dtd = &self.d_t * &mp_d;
            let mut coo = CooMatrix::new(ops.n_q, ops.n_q);
            add_block(&mut coo, &ops.m_k, 0, 0, 1.0);
            add_block(&mut coo, &dtd, 0, 0, t2 * dt);
            self.flow = Some(self.make_solver(&CsrMatrix::from(&coo))?);
        }
        Ok(self.flow.as_ref().unwrap())
    }

    /// Mechanics block of the energy-minimization sweep; algebraically equal
    /// to [`Self::ensure_mech`] but assembled through the sparse product
    /// `A^T M_p^{-1} A` so the two routes stay independent.
    fn ensure_am_mech(&mut self) -> Result<&SpdSolver> {
        if self.am_mech.is_none() {
            let (t1, dt) = (self.theta.theta1, self.theta.dt);
            let ops = self.ops;
            let mp_a = scale_rows(&ops.a_a, |i| 1.0 / ops.m_p[i]);
            let ata = &self.a_t * &mp_a;
            let mut coo = CooMatrix::new(ops.n_u, ops.n_u);
            add_block(&mut coo, &ops.m_u, 0, 0, 1.0 / (dt * dt));
            add_block(&mut coo, &ops.k_c, 0, 0, t1);
            add_block(&mut coo, &ata, 0, 0, t1);
            self.am_mech = Some(self.make_solver(&CsrMatrix::from(&coo))?);
        }
        Ok(self.am_mech.as_ref().unwrap())
    }

    /// Flux Hessian `t1 t2 dt M_k + t1 (t2 dt)^2 D^T M_p^{-1} D` of the
    /// energy-minimization sweep.
    fn ensure_am_flow(&mut self) -> Result<&SpdSolver> {
        if self.am_flow.is_none() {
            let (t1, t2, dt) = (self.theta.theta1, self.theta.theta2, self.theta.dt);
            let ops = self.ops;
            let mp_d = scale_rows(&ops.d, |i| 1.0 / ops.m_p[i]);
            let dtd = &self.d_t * &mp_d;
            let mut coo = CooMatrix::new(ops.n_q, ops.n_q);
            add_block(&mut coo, &ops.m_k, 0, 0, t1 * t2 * dt);
            add_block(&mut coo, &dtd, 0, 0, t1 * (t2 * dt) * (t2 * dt));
            self.am_flow = Some(self.make_solver(&CsrMatrix::from(&coo))?);
        }
        Ok(self.am_flow.as_ref().unwrap())
    }

    /// Full SPD system in `(u, q)` with the pressure eliminated.
    fn ensure_mono(&mut self) -> Result<&SpdSolver> {
        if self.mono.is_none() {
            let (t1, t2, dt) = (self.theta.theta1, self.theta.theta2, self.theta.dt);
            let ops = self.ops;
            let (nu, nq) = (ops.n_u, ops.n_q);
            let mp_d = scale_rows(&ops.d, |i| 1.0 / ops.m_p[i]);
            let a_mp_d = &self.a_t * &mp_d;
            let dtd = &self.d_t * &mp_d;
            let mut coo = CooMatrix::new(nu + nq, nu + nq);
            add_block(&mut coo, &ops.m_u, 0, 0, 1.0 / (dt * dt));
            add_block(&mut coo, &ops.k_c, 0, 0, t1);
            add_block(&mut coo, &ops.k_aa, 0, 0, t1);
            add_block(&mut coo, &a_mp_d, 0, nu, t1 * t2 * dt);
            for (i, j, v) in a_mp_d.triplet_iter() {
                coo.push(nu + j, i, v * t1 * t2 * dt);
            }
            add_block(&mut coo, &ops.m_k, nu, nu, t1 * t2 * dt);
            add_block(&mut coo, &dtd, nu, nu, t1 * (t2 * dt) * (t2 * dt));
            self.mono = Some(self.make_solver(&CsrMatrix::from(&coo))?);
        }
        Ok(self.mono.as_ref().unwrap())
    }

    /// One undrained mechanics step: solve for the displacement holding the
    /// fluid content of the previous iterate `(u_prev, p_prev)` fixed.
    pub fn mechanics_step(
        &mut self,
        rhs: &StageRhs,
        u_prev: &DVector<f64>,
        p_prev: &DVector<f64>,
    ) -> Result<(DVector<f64>, usize)> {
        let t1 = self.theta.theta1;
        let ops = self.ops;
        let b = &rhs.f_hat + (&self.a_t * p_prev) * t1 + (&ops.k_aa * u_prev) * t1;
        self.ensure_mech()?;
        self.mech.as_ref().unwrap().solve(&b)
    }

    /// One flow step at fixed displacement: solve for the flux and recover
    /// the element pressure.
    pub fn flow_step(
        &mut self,
        rhs: &StageRhs,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, usize)> {
        let (t2, dt) = (self.theta.theta2, self.theta.dt);
        let ops = self.ops;
        let s = self.mp_inv(&(&rhs.h_hat - &ops.a_a * u));
        let b = &rhs.g_hat + &self.d_t * &s;
        self.ensure_flow()?;
        let (q, iters) = self.flow.as_ref().unwrap().solve(&b)?;
        let p = self.mp_inv(&(&rhs.h_hat - &ops.a_a * u - (&ops.d * &q) * (t2 * dt)));
        Ok((q, p, iters))
    }

    /// Solve the full stage problem at once. Returns the state, the recovered
    /// pressure and the inner iteration count.
    pub fn monolithic_solve(&mut self, rhs: &StageRhs) -> Result<(StageState, DVector<f64>, usize)> {
        let (t1, t2, dt) = (self.theta.theta1, self.theta.theta2, self.theta.dt);
        let ops = self.ops;
        let (nu, nq) = (ops.n_u, ops.n_q);
        let hp = self.mp_inv(&rhs.h_hat);
        let mut b = DVector::zeros(nu + nq);
        b.rows_mut(0, nu)
            .copy_from(&(&rhs.f_hat + (&self.a_t * &hp) * t1));
        b.rows_mut(nu, nq)
            .copy_from(&((&rhs.g_hat + &self.d_t * &hp) * (t1 * t2 * dt)));
        self.ensure_mono()?;
        let (x, iters) = self.mono.as_ref().unwrap().solve(&b)?;
        let state = StageState {
            u: x.rows(0, nu).into_owned(),
            q: x.rows(nu, nq).into_owned(),
        };
        let p = recover_pressure(ops, &self.theta, rhs, &state);
        Ok((state, p, iters))
    }

    /// Undrained-split iteration, warm-started from `init` (the pressure of
    /// the initial iterate is recovered from the flow equation, which is what
    /// makes the sweep identical to exact block minimization).
    pub fn undrained_split_solve(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        reference: Option<&StageState>,
    ) -> Result<CoupledSolveResult> {
        self.coupled_iteration(rhs, init, reference, Sweep::UndrainedSplit)
    }

    /// Alternating exact minimization of the stage energy over the
    /// displacement and flux blocks.
    pub fn alternating_minimization_solve(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        reference: Option<&StageState>,
    ) -> Result<CoupledSolveResult> {
        self.coupled_iteration(rhs, init, reference, Sweep::AlternatingMinimization)
    }

    /// One Gauss-Seidel sweep (mechanics then flow) from `(state, p)`.
    fn sweep_once(
        &mut self,
        rhs: &StageRhs,
        state: &StageState,
        p: &DVector<f64>,
        sweep: Sweep,
    ) -> Result<SweepOutcome> {
        let theta = self.theta;
        let ops = self.ops;
        let (u_new, mech_iters) = match sweep {
            Sweep::UndrainedSplit => self.mechanics_step(rhs, &state.u, p)?,
            Sweep::AlternatingMinimization => {
                let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
                let s = self.mp_inv(&(&rhs.h_hat - (&ops.d * &state.q) * (t2 * dt)));
                let b = &rhs.f_hat + (&self.a_t * &s) * t1;
                self.ensure_am_mech()?;
                self.am_mech.as_ref().unwrap().solve(&b)?
            }
        };
        let energy_after_mech = evaluate_energy(
            ops,
            &theta,
            rhs,
            &StageState {
                u: u_new.clone(),
                q: state.q.clone(),
            },
        );
        let (q_new, p_new, flow_iters) = match sweep {
            Sweep::UndrainedSplit => self.flow_step(rhs, &u_new)?,
            Sweep::AlternatingMinimization => {
                let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
                let s = self.mp_inv(&(&rhs.h_hat - &ops.a_a * &u_new));
                let b = (&rhs.g_hat + &self.d_t * &s) * (t1 * t2 * dt);
                self.ensure_am_flow()?;
                let (q, flow_iters) = self.am_flow.as_ref().unwrap().solve(&b)?;
                let p =
                    self.mp_inv(&(&rhs.h_hat - &ops.a_a * &u_new - (&ops.d * &q) * (t2 * dt)));
                (q, p, flow_iters)
            }
        };
        Ok(SweepOutcome {
            state: StageState { u: u_new, q: q_new },
            p: p_new,
            mech_iters,
            flow_iters,
            energy_after_mech,
        })
    }

    /// The first `n_sweeps` iterates of the undrained-split iteration,
    /// without any stopping test; used to compare sweeps iterate by iterate.
    pub fn undrained_split_iterates(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        n_sweeps: usize,
    ) -> Result<Vec<StageState>> {
        self.iterates(rhs, init, n_sweeps, Sweep::UndrainedSplit)
    }

    /// The first `n_sweeps` iterates of the alternating minimization.
    pub fn alternating_minimization_iterates(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        n_sweeps: usize,
    ) -> Result<Vec<StageState>> {
        self.iterates(rhs, init, n_sweeps, Sweep::AlternatingMinimization)
    }

    fn iterates(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        n_sweeps: usize,
        sweep: Sweep,
    ) -> Result<Vec<StageState>> {
        let mut state = init.clone();
        let mut p = recover_pressure(self.ops, &self.theta, rhs, &state);
        let mut out = Vec::with_capacity(n_sweeps);
        for _ in 0..n_sweeps {
            let o = self.sweep_once(rhs, &state, &p, sweep)?;
            state = o.state;
            p = o.p;
            out.push(state.clone());
        }
        Ok(out)
    }

    fn coupled_iteration(
        &mut self,
        rhs: &StageRhs,
        init: &StageState,
        reference: Option<&StageState>,
        sweep: Sweep,
    ) -> Result<CoupledSolveResult> {
        let theta = self.theta;
        let ops = self.ops;
        let e_ref = reference.map(|r| evaluate_energy(ops, &theta, rhs, r));
        let err_of = |s: &StageState| {
            reference.map(|r| triple_norm(ops, &theta, &(&s.u - &r.u), &(&s.q - &r.q)))
        };

        let mut state = init.clone();
        let mut p = recover_pressure(ops, &theta, rhs, &state);
        let err0 = err_of(&state);
        let mut err_prev = err0;

        let mut records: Vec<IterationRecord> = Vec::new();
        let mut first_increment = None;
        let mut stop = StopReason::MaxIterations;

        for k in 1..=self.settings.max_outer {
            let SweepOutcome {
                state: new_state,
                p: p_new,
                mech_iters,
                flow_iters,
                energy_after_mech,
            } = self.sweep_once(rhs, &state, &p, sweep)?;
            let increment = triple_norm(
                ops,
                &theta,
                &(&new_state.u - &state.u),
                &(&new_state.q - &state.q),
            );
            let energy = evaluate_energy(ops, &theta, rhs, &new_state);
            let err_norm = err_of(&new_state);
            let energy_gap = e_ref.map(|e| energy - e);
            // The quotient of successive errors only means something while
            // the previous error is well above the rounding floor of the
            // initial error.
            let factor = match (err_prev, err0) {
                (Some(prev), Some(e0)) if e0 > 0.0 && prev >= 1e3 * f64::EPSILON * e0 => {
                    err_norm.map(|e| e / prev)
                }
                _ => None,
            };

            records.push(IterationRecord {
                k,
                energy,
                energy_after_mech,
                increment,
                mech_iters,
                flow_iters,
                energy_gap,
                err_norm,
                factor,
            });

            state = new_state;
            p = p_new;
            err_prev = err_norm;

            let first = *first_increment.get_or_insert(increment);
            let floor = 100.0 * f64::EPSILON * triple_norm(ops, &theta, &state.u, &state.q);
            if increment <= f64::max(self.settings.tol_outer * first, floor) {
                stop = StopReason::Converged;
                break;
            }
        }

        let gap_to_norm = gap_to_norm_ratio(&records, e_ref);
        let iterations = records.len();
        Ok(CoupledSolveResult {
            state,
            pressure: p,
            report: IterationReport {
                records,
                iterations,
                stop,
                theory_rate: ops.theory_rate(),
                gap_to_norm,
            },
        })
    }
}

#[derive(Clone, Copy)]
enum Sweep {
    UndrainedSplit,
    AlternatingMinimization,
}

struct SweepOutcome {
    state: StageState,
    p: DVector<f64>,
    mech_iters: usize,
    flow_iters: usize,
    energy_after_mech: f64,
}

/// Mean of `gap / err^2` over iterations where the gap is numerically
/// resolvable against the reference energy.
fn gap_to_norm_ratio(records: &[IterationRecord], e_ref: Option<f64>) -> Option<f64> {
    let e_ref = e_ref?;
    let gap0 = records.first().and_then(|r| r.energy_gap)?;
    let floor = 1e10 * f64::EPSILON * (e_ref.abs() + gap0.abs());
    let mut sum = 0.0;
    let mut n = 0;
    for r in records {
        if let (Some(gap), Some(err)) = (r.energy_gap, r.err_norm) {
            if gap >= floor && err > 0.0 {
                sum += gap / (err * err);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Check that a stage state together with a pressure satisfies all three
/// coupled equations to the given absolute tolerance.
pub fn is_stage_solution(
    ops: &OperatorSet,
    theta: &ThetaParams,
    rhs: &StageRhs,
    state: &StageState,
    p: &DVector<f64>,
    tol: f64,
) -> bool {
    let r = residual_norms(ops, theta, rhs, state, p);
    r.momentum <= tol && r.mass <= tol && r.darcy <= tol
}
