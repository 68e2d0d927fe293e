//! Integration tests of the transient driver: an exactly representable
//! manufactured solution, scheme agreement along a trajectory, and a long
//! bounded run.

use nalgebra::DVector;
use porosplit::coupling::{SolverSettings, StopReason};
use porosplit::dofmap::{DisplacementBc, FlowBc, SideBc};
use porosplit::linalg::InnerMethod;
use porosplit::loads::{LoadSpec, ScalarLoad, TimeProfile, VectorLoad};
use porosplit::mesh::{build_mesh, Mesh};
use porosplit::timestep::{run, CouplingScheme, Discretization, InitialData, RunResult, TimeGrid};
use porosplit::{
    BcSpec, BiotTensor, ElasticityTensor, MaterialField, PermeabilityTensor, ThetaParams,
};

fn settings() -> SolverSettings {
    SolverSettings {
        tol_outer: 1e-10,
        max_outer: 500,
        tol_lin: 1e-12,
        inner: InnerMethod::Direct,
    }
}

/// Linear-in-time, affine-in-space fields that the discretization reproduces
/// without error: `u = 0.4 t (x, y)`, `p = 0.8 t`, `q = (0.3, -0.2)`.
/// With unit material parameters the matching sources are `f = 0`,
/// `h = 1.6`, `g = q`, boundary traction `0.8 t n` and boundary pressure
/// `0.8 t` on all four sides.
mod ramp {
    use super::*;

    pub const Q: [f64; 2] = [0.3, -0.2];

    pub fn bc() -> BcSpec {
        let side = |tx: f64, ty: f64| SideBc {
            displacement: DisplacementBc::Traction(VectorLoad {
                value: [tx, ty],
                profile: TimeProfile::Ramp,
            }),
            flow: FlowBc::Drained(ScalarLoad {
                value: 0.8,
                profile: TimeProfile::Ramp,
            }),
        };
        BcSpec {
            bottom: side(0.0, -0.8),
            right: side(0.8, 0.0),
            top: side(0.0, 0.8),
            left: side(-0.8, 0.0),
        }
    }

    pub fn loads() -> LoadSpec {
        LoadSpec {
            body_force: None,
            mass_source: Some(ScalarLoad::constant(1.6)),
            darcy_force: Some(VectorLoad::constant(Q[0], Q[1])),
        }
    }

    pub fn material(n: usize) -> MaterialField {
        MaterialField::homogeneous(
            n,
            1.0,
            1.0,
            ElasticityTensor::isotropic(1.0, 1.0).unwrap(),
            BiotTensor::isotropic(1.0).unwrap(),
            PermeabilityTensor::isotropic(1.0).unwrap(),
        )
    }

    pub fn exact_u(mesh: &Mesh, t: f64) -> DVector<f64> {
        let mut u = DVector::zeros(2 * mesh.n_vertices());
        for (v, pos) in mesh.vertices.iter().enumerate() {
            u[2 * v] = 0.4 * t * pos[0];
            u[2 * v + 1] = 0.4 * t * pos[1];
        }
        u
    }

    /// Flux dofs are normal components on edges (unit-density basis).
    pub fn exact_q(mesh: &Mesh) -> DVector<f64> {
        DVector::from_fn(mesh.n_edges(), |e, _| {
            let n = mesh.edge_normal(e);
            Q[0] * n[0] + Q[1] * n[1]
        })
    }
}

#[test]
fn ramp_solution_is_reproduced_exactly() {
    let mesh = build_mesh(4, 3, 1.2, 0.9).unwrap();
    let mat = ramp::material(mesh.n_triangles());
    let disc = Discretization::new(mesh.clone(), ramp::bc(), &mat).unwrap();
    assert_eq!(disc.ops.n_u, 2 * mesh.n_vertices());
    assert_eq!(disc.ops.n_q, mesh.n_edges());

    let init = InitialData {
        u0: DVector::zeros(disc.ops.n_u),
        v0: ramp::exact_u(&mesh, 1.0),
        p0: DVector::zeros(disc.ops.n_p),
    };
    let grid = TimeGrid::new(0.02, 5).unwrap();
    let q_exact = ramp::exact_q(&mesh);

    for scheme in [
        CouplingScheme::Monolithic,
        CouplingScheme::UndrainedSplit,
        CouplingScheme::AlternatingMinimization,
    ] {
        for (t1, t2) in [(1.0, 1.0), (0.7, 0.6)] {
            let result = run(
                &disc,
                &grid,
                t1,
                t2,
                scheme,
                &settings(),
                &ramp::loads(),
                &init,
            )
            .unwrap();
            for (n, snap) in result.snapshots.iter().enumerate() {
                let t = grid.time(n);
                let du = (&snap.u - ramp::exact_u(&mesh, t)).amax();
                let dp = (&snap.p - DVector::from_element(disc.ops.n_p, 0.8 * t)).amax();
                let dq = (&snap.q - &q_exact).amax();
                assert!(
                    du <= 1e-8 && dp <= 1e-8 && dq <= 1e-8,
                    "{scheme:?} theta ({t1}, {t2}) step {n}: du {du:.3e} dp {dp:.3e} dq {dq:.3e}"
                );
            }
        }
    }
}

fn column_problem() -> (Discretization, LoadSpec, InitialData) {
    let mesh = build_mesh(4, 16, 0.25, 1.0).unwrap();
    let wall = SideBc {
        displacement: DisplacementBc::TractionFree,
        flow: FlowBc::Impermeable,
    };
    let bc = BcSpec {
        bottom: SideBc {
            displacement: DisplacementBc::Fixed,
            flow: FlowBc::Impermeable,
        },
        right: wall,
        top: SideBc {
            displacement: DisplacementBc::Traction(VectorLoad {
                value: [0.0, -1.0],
                profile: TimeProfile::Sinusoid { omega: 20.0 },
            }),
            flow: FlowBc::Drained(ScalarLoad::constant(0.0)),
        },
        left: wall,
    };
    let mat = ramp::material(mesh.n_triangles());
    let disc = Discretization::new(mesh, bc, &mat).unwrap();
    let init = InitialData::zeros(&disc.ops);
    (disc, LoadSpec::default(), init)
}

#[test]
fn schemes_agree_along_the_trajectory() {
    let (disc, loads, init) = column_problem();
    let grid = TimeGrid::new(0.01, 20).unwrap();
    let theta = ThetaParams::new(0.7, 0.6, grid.dt).unwrap();

    let solve = |scheme| -> RunResult {
        run(&disc, &grid, theta.theta1, theta.theta2, scheme, &settings(), &loads, &init).unwrap()
    };
    let mono = solve(CouplingScheme::Monolithic);
    let split = solve(CouplingScheme::UndrainedSplit);
    let altmin = solve(CouplingScheme::AlternatingMinimization);

    let scale = mono.last().u.amax() + mono.last().q.amax() + mono.last().p.amax();
    for other in [&split, &altmin] {
        for (a, b) in mono.snapshots.iter().zip(&other.snapshots) {
            let d = (&a.u - &b.u).amax().max((&a.q - &b.q).amax()).max((&a.p - &b.p).amax());
            assert!(d <= 1e-7 * scale, "trajectory deviation {d:.3e} at t = {}", a.t);
        }
    }
}

#[test]
fn long_oscillatory_run_stays_bounded_and_converged() {
    let (disc, loads, init) = column_problem();
    let grid = TimeGrid::new(0.005, 100) .unwrap();
    let result = run(
        &disc,
        &grid,
        1.0,
        1.0,
        CouplingScheme::UndrainedSplit,
        &settings(),
        &loads,
        &init,
    )
    .unwrap();

    assert_eq!(result.steps.len(), 100);
    assert_eq!(result.snapshots.len(), 101);
    let mut peak = 0.0_f64;
    for step in &result.steps {
        assert_eq!(step.stop, StopReason::Converged);
        assert!(step.energy.is_finite());
        assert!(step.iterations <= settings().max_outer);
    }
    for snap in &result.snapshots {
        let m = snap.u.amax().max(snap.p.amax()).max(snap.q.amax());
        assert!(m.is_finite());
        peak = peak.max(m);
    }
    // A bounded forcing at unit material parameters must not blow up.
    assert!(peak <= 1e3, "peak state magnitude {peak:.3e}");
}
