//! Time integration: the implicit one-parameter family of stage problems
//! (backward Euler as the unit-weight member), history management, and the
//! time loop driving one coupled stage solve per step.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assemble::{assemble_loads, assemble_operators, OperatorSet};
use crate::coupling::{SolverSettings, StageSolver, StopReason};
use crate::dofmap::{build_spaces, DofMap};
use crate::energy::{evaluate_energy, StageRhs, StageState};
use crate::error::{Error, Result};
use crate::linalg::SpdSolver;
use crate::loads::LoadSpec;
use crate::mesh::Mesh;
use crate::model::{MaterialField, ThetaParams};
use crate::BcSpec;

/// Uniform time grid `t_n = n dt`, `n = 0..=n_steps`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.n_steps)
    }
}

/// Which stage solver advances each time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingScheme {
    Monolithic,
    UndrainedSplit,
    AlternatingMinimization,
}

/// Mesh, boundary conditions, dof maps and assembled operators of one
/// problem; everything that is fixed across time steps.
pub struct Discretization {
    pub mesh: Mesh,
    pub bc: BcSpec,
    pub dofs: DofMap,
    pub ops: OperatorSet,
}

impl Discretization {
    pub fn new(mesh: Mesh, bc: BcSpec, material: &MaterialField) -> Result<Self> {
        let dofs = build_spaces(&mesh, &bc)?;
        let ops = assemble_operators(&mesh, &dofs, material)?;
        Ok(Self {
            mesh,
            bc,
            dofs,
            ops,
        })
    }
}

/// Initial displacement, velocity and pressure on the reduced dof sets.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub u0: DVector<f64>,
    pub v0: DVector<f64>,
    pub p0: DVector<f64>,
}

impl InitialData {
    pub fn zeros(ops: &OperatorSet) -> Self {
        Self {
            u0: DVector::zeros(ops.n_u),
            v0: DVector::zeros(ops.n_u),
            p0: DVector::zeros(ops.n_p),
        }
    }
}

/// Time-history entering one stage problem. The second displacement level
/// discretizes the acceleration; the flux level feeds the lagged storage
/// term of the partial-weight scheme.
#[derive(Clone, Debug)]
pub struct History {
    pub u_prev: DVector<f64>,
    pub u_prev2: DVector<f64>,
    pub p_prev: DVector<f64>,
    pub q_prev: DVector<f64>,
    pub t_prev: f64,
}

/// Build the step-one history from initial data: the pre-initial
/// displacement level is extrapolated backwards with the initial velocity,
/// and the initial flux is recovered from the Darcy equation at `t = 0`.
pub fn init_history(
    disc: &Discretization,
    loads: &LoadSpec,
    settings: &SolverSettings,
    dt: f64,
    init: &InitialData,
) -> Result<History> {
    let ops = &disc.ops;
    if init.u0.len() != ops.n_u || init.v0.len() != ops.n_u || init.p0.len() != ops.n_p {
        return Err(Error::DimensionMismatch(format!(
            "initial data sized ({}, {}, {}), expected ({}, {}, {})",
            init.u0.len(),
            init.v0.len(),
            init.p0.len(),
            ops.n_u,
            ops.n_u,
            ops.n_p
        )));
    }
    let (_, _, g0) = assemble_loads(&disc.mesh, &disc.dofs, &disc.bc, loads, 0.0);
    let rhs = g0 + ops.d.transpose() * &init.p0;
    let solver = SpdSolver::new(&ops.m_k, settings.inner, settings.tol_lin)?;
    let (q0, _) = solver.solve(&rhs)?;
    Ok(History {
        u_prev: init.u0.clone(),
        u_prev2: &init.u0 - &init.v0 * dt,
        p_prev: init.p0.clone(),
        q_prev: q0,
        t_prev: 0.0,
    })
}

/// Load vectors `(f, h, g)` assembled at one time.
pub struct LoadsAt {
    pub f: DVector<f64>,
    pub h: DVector<f64>,
    pub g: DVector<f64>,
}

pub fn loads_at(disc: &Discretization, loads: &LoadSpec, t: f64) -> LoadsAt {
    let (f, h, g) = assemble_loads(&disc.mesh, &disc.dofs, &disc.bc, loads, t);
    LoadsAt { f, h, g }
}

/// Stage data of the weighted scheme:
/// `f = t1 F(t_n) + (1 - t1) F(t_{n-1}) + 1/dt^2 M_u (2 u_{n-1} - u_{n-2})
///      - (1 - t1) (K_C u_{n-1} - A^T p_{n-1})`,
/// `h = dt (t2 H(t_n) + (1 - t2) H(t_{n-1})) + M_p p_{n-1} + A u_{n-1}
///      - (1 - t2) dt D q_{n-1}`,
/// `g = G(t_n)`.
pub fn theta_rhs(
    ops: &OperatorSet,
    theta: &ThetaParams,
    now: &LoadsAt,
    prev: &LoadsAt,
    history: &History,
) -> StageRhs {
    let (t1, t2, dt) = (theta.theta1, theta.theta2, theta.dt);
    let mut f_hat = &now.f * t1 + &prev.f * (1.0 - t1);
    f_hat += &ops.m_u * &(&history.u_prev * 2.0 - &history.u_prev2) / (dt * dt);
    f_hat -= (&ops.k_c * &history.u_prev - ops.a_a.transpose() * &history.p_prev) * (1.0 - t1);

    let mut h_hat = (&now.h * t2 + &prev.h * (1.0 - t2)) * dt;
    h_hat += DVector::from_fn(ops.n_p, |i, _| ops.m_p[i] * history.p_prev[i]);
    h_hat += &ops.a_a * &history.u_prev;
    h_hat -= (&ops.d * &history.q_prev) * ((1.0 - t2) * dt);

    StageRhs {
        f_hat,
        h_hat,
        g_hat: now.g.clone(),
    }
}

/// Backward Euler stage data; the unit-weight member of [`theta_rhs`].
pub fn backward_euler_rhs(
    ops: &OperatorSet,
    dt: f64,
    now: &LoadsAt,
    history: &History,
) -> StageRhs {
    let theta = ThetaParams {
        theta1: 1.0,
        theta2: 1.0,
        dt,
    };
    theta_rhs(ops, &theta, now, now, history)
}

/// Solution snapshot at one time level.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub u: DVector<f64>,
    pub p: DVector<f64>,
    pub q: DVector<f64>,
}

/// Per-step solve summary.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub energy: f64,
}

/// Trajectory and per-step convergence summaries of one run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepReport>,
}

impl RunResult {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("run produces at least the initial snapshot")
    }
}

/// March the coupled system over `grid`, solving one stage problem per step
/// with the selected scheme. Coupled schemes warm-start from the previous
/// step and abort with [`Error::NonConvergence`] when the iteration cap is
/// hit.
#[allow(clippy::too_many_arguments)]
pub fn run(
    disc: &Discretization,
    grid: &TimeGrid,
    theta1: f64,
    theta2: f64,
    scheme: CouplingScheme,
    settings: &SolverSettings,
    loads: &LoadSpec,
    init: &InitialData,
) -> Result<RunResult> {
    let theta = ThetaParams::new(theta1, theta2, grid.dt)?;
    let ops = &disc.ops;
    let mut solver = StageSolver::new(ops, theta, *settings)?;
    let mut history = init_history(disc, loads, settings, grid.dt, init)?;

    let mut snapshots = Vec::with_capacity(grid.n_steps + 1);
    snapshots.push(Snapshot {
        t: 0.0,
        u: init.u0.clone(),
        p: init.p0.clone(),
        q: history.q_prev.clone(),
    });
    let mut steps = Vec::with_capacity(grid.n_steps);

    let mut prev_loads = loads_at(disc, loads, 0.0);
    for n in 1..=grid.n_steps {
        let t = grid.time(n);
        let now_loads = loads_at(disc, loads, t);
        let rhs = theta_rhs(ops, &theta, &now_loads, &prev_loads, &history);

        let warm = StageState {
            u: history.u_prev.clone(),
            q: history.q_prev.clone(),
        };
        let (state, pressure, iterations, stop) = match scheme {
            CouplingScheme::Monolithic => {
                let (state, p, _) = solver.monolithic_solve(&rhs)?;
                (state, p, 1, StopReason::Converged)
            }
            CouplingScheme::UndrainedSplit => {
                let res = solver.undrained_split_solve(&rhs, &warm, None)?;
                (res.state, res.pressure, res.report.iterations, res.report.stop)
            }
            CouplingScheme::AlternatingMinimization => {
                let res = solver.alternating_minimization_solve(&rhs, &warm, None)?;
                (res.state, res.pressure, res.report.iterations, res.report.stop)
            }
        };
        if stop == StopReason::MaxIterations {
            return Err(Error::NonConvergence {
                step: n,
                iterations,
            });
        }

        let energy = evaluate_energy(ops, &theta, &rhs, &state);
        steps.push(StepReport {
            step: n,
            t,
            iterations,
            stop,
            energy,
        });
        history = History {
            u_prev2: std::mem::replace(&mut history.u_prev, state.u.clone()),
            u_prev: state.u.clone(),
            p_prev: pressure.clone(),
            q_prev: state.q.clone(),
            t_prev: t,
        };
        snapshots.push(Snapshot {
            t,
            u: state.u,
            p: pressure,
            q: state.q,
        });
        prev_loads = now_loads;
    }

    Ok(RunResult { snapshots, steps })
}
