//! Configuration-driven experiment runs for the command-line harness.
//!
//! A scenario file is a JSON document selecting one of four studies
//! (`contraction_study`, `equivalence_check`, `time_convergence`, `column`)
//! together with mesh, material, boundary, load, time-grid and solver
//! settings. Each run writes CSV data, a `summary.json` with pass/fail gates,
//! and a `manifest.json` with SHA-256 checksums of every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::coupling::{SolverSettings, StageSolver, StopReason};
use crate::dofmap::{DisplacementBc, FlowBc, SideBc};
use crate::energy::StageState;
use crate::error::{Error, Result};
use crate::loads::{LoadSpec, ScalarLoad};
use crate::mesh::build_mesh;
use crate::model::{
    validate_material, BiotTensor, ElasticityTensor, MaterialField, PermeabilityTensor,
    ThetaParams,
};
use crate::timestep::{
    init_history, loads_at, run, theta_rhs, CouplingScheme, Discretization, InitialData,
    RunResult, TimeGrid,
};
use crate::BcSpec;

/// Structured rectangle mesh parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

fn one() -> f64 {
    1.0
}

/// Homogeneous isotropic material parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub rho: f64,
    pub c0: f64,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub kappa: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            c0: 1.0,
            mu: 1.0,
            lambda: 1.0,
            alpha: 1.0,
            kappa: 1.0,
        }
    }
}

impl MaterialConfig {
    pub fn build(&self, n_elements: usize) -> Result<MaterialField> {
        let field = MaterialField::homogeneous(
            n_elements,
            self.rho,
            self.c0,
            ElasticityTensor::isotropic(self.mu, self.lambda)?,
            BiotTensor::isotropic(self.alpha)?,
            PermeabilityTensor::isotropic(self.kappa)?,
        );
        let issues = validate_material(&field);
        if let Some(first) = issues.first() {
            return Err(Error::InvalidMaterial(first.to_string()));
        }
        Ok(field)
    }
}

/// The study to run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Per-iteration convergence records of the coupled iteration on the
    /// first time step, swept over storage coefficients.
    ContractionStudy { c0_list: Vec<f64> },
    /// Trajectory agreement of the three stage solvers.
    EquivalenceCheck {},
    /// Self-convergence order of the time discretization under step halving.
    TimeConvergence {
        #[serde(default = "default_levels")]
        n_levels: usize,
        #[serde(default = "one")]
        expected_order: f64,
    },
    /// Dynamic consolidation of a loaded column; writes a time series.
    Column {},
}

fn default_levels() -> usize {
    3
}

/// Full scenario description as read from a JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    pub time: TimeGrid,
    #[serde(default = "one")]
    pub theta1: f64,
    #[serde(default = "one")]
    pub theta2: f64,
    #[serde(default = "default_scheme")]
    pub scheme: CouplingScheme,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_bc")]
    pub bc: BcSpec,
    #[serde(default)]
    pub loads: LoadSpec,
}

fn default_scheme() -> CouplingScheme {
    CouplingScheme::UndrainedSplit
}

/// Clamped impermeable base, free impermeable walls, drained free surface.
fn default_bc() -> BcSpec {
    let wall = SideBc {
        displacement: DisplacementBc::TractionFree,
        flow: FlowBc::Impermeable,
    };
    BcSpec {
        bottom: SideBc {
            displacement: DisplacementBc::Fixed,
            flow: FlowBc::Impermeable,
        },
        right: wall,
        top: SideBc {
            displacement: DisplacementBc::TractionFree,
            flow: FlowBc::Drained(ScalarLoad::constant(0.0)),
        },
        left: wall,
    }
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Check parameter ranges without running anything expensive.
    pub fn validate(&self) -> Result<()> {
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(Error::Config("mesh must have at least one cell per side".into()));
        }
        if !(self.mesh.lx > 0.0 && self.mesh.ly > 0.0) {
            return Err(Error::Config("mesh extents must be positive".into()));
        }
        TimeGrid::new(self.time.dt, self.time.n_steps)?;
        ThetaParams::new(self.theta1, self.theta2, self.time.dt)?;
        self.solver.validate()?;
        self.material.build(1)?;
        match &self.scenario {
            Scenario::ContractionStudy { c0_list } => {
                if c0_list.is_empty() {
                    return Err(Error::Config("c0_list must not be empty".into()));
                }
                if c0_list.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                    return Err(Error::Config("c0_list entries must be positive".into()));
                }
                if self.scheme == CouplingScheme::Monolithic {
                    return Err(Error::Config(
                        "contraction_study needs an iterative scheme, not monolithic".into(),
                    ));
                }
            }
            Scenario::TimeConvergence { n_levels, expected_order } => {
                if *n_levels < 2 {
                    return Err(Error::Config("time_convergence needs at least 2 levels".into()));
                }
                if !(expected_order.is_finite() && *expected_order > 0.0) {
                    return Err(Error::Config("expected_order must be positive".into()));
                }
            }
            Scenario::EquivalenceCheck {} | Scenario::Column {} => {}
        }
        Ok(())
    }

    fn discretization(&self, material: &MaterialField) -> Result<Discretization> {
        let mesh = build_mesh(self.mesh.nx, self.mesh.ny, self.mesh.lx, self.mesh.ly)?;
        Discretization::new(mesh, self.bc, material)
    }
}

/// Files written by a scenario run and whether every gate passed.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    pub gates: BTreeMap<String, bool>,
}

/// Run `config` and write all artifacts into `out_dir` (created if missing).
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut sink = ArtifactSink::new(out_dir);
    let gates = match &config.scenario {
        Scenario::ContractionStudy { c0_list } => {
            contraction_study(config, c0_list, &mut sink)?
        }
        Scenario::EquivalenceCheck {} => equivalence_check(config, &mut sink)?,
        Scenario::TimeConvergence { n_levels, expected_order } => {
            time_convergence(config, *n_levels, *expected_order, &mut sink)?
        }
        Scenario::Column {} => column(config, &mut sink)?,
    };
    let passed = gates.values().all(|&g| g);
    sink.write_manifest()?;
    Ok(ScenarioOutcome {
        files: sink.files,
        passed,
        gates,
    })
}

/// Collects artifacts and writes the closing checksum manifest.
struct ArtifactSink {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl ArtifactSink {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn write_manifest(&mut self) -> Result<()> {
        let mut entries = Vec::new();
        let mut files = self.files.clone();
        files.sort();
        for path in &files {
            let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            entries.push(json!({ "path": name, "sha256": digest }));
        }
        self.write_json("manifest.json", &json!({ "files": entries }))?;
        Ok(())
    }
}

/// Shortest round-trip float formatting used in all CSV output.
fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)
        .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    for row in rows {
        wtr.write_record(row)
            .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv not utf-8: {e}")))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

/// Sweep the storage coefficient and record the per-iteration convergence of
/// the coupled iteration on the first time step, measured against the
/// monolithic stage solution.
fn contraction_study(
    config: &ScenarioConfig,
    c0_list: &[f64],
    sink: &mut ArtifactSink,
) -> Result<BTreeMap<String, bool>> {
    let mut cases = Vec::new();
    let mut all_converged = true;
    let mut all_below_bound = true;
    for (i, &c0) in c0_list.iter().enumerate() {
        let mat_config = MaterialConfig {
            c0,
            ..config.material
        };
        let material = mat_config.build(2 * config.mesh.nx * config.mesh.ny)?;
        let disc = config.discretization(&material)?;
        let theta = ThetaParams::new(config.theta1, config.theta2, config.time.dt)?;
        let init = InitialData::zeros(&disc.ops);
        let history = init_history(&disc, &config.loads, &config.solver, config.time.dt, &init)?;
        let now = loads_at(&disc, &config.loads, config.time.dt);
        let prev = loads_at(&disc, &config.loads, 0.0);
        let rhs = theta_rhs(&disc.ops, &theta, &now, &prev, &history);

        let mut solver = StageSolver::new(&disc.ops, theta, config.solver)?;
        let (reference, _, _) = solver.monolithic_solve(&rhs)?;
        let warm = StageState {
            u: history.u_prev.clone(),
            q: history.q_prev.clone(),
        };
        let res = match config.scheme {
            CouplingScheme::UndrainedSplit => {
                solver.undrained_split_solve(&rhs, &warm, Some(&reference))?
            }
            CouplingScheme::AlternatingMinimization => {
                solver.alternating_minimization_solve(&rhs, &warm, Some(&reference))?
            }
            CouplingScheme::Monolithic => unreachable!("rejected by validate"),
        };
        let report = &res.report;

        let mut rows = Vec::new();
        for r in &report.records {
            rows.push(vec![
                r.k.to_string(),
                r.energy_gap.map(fmt).unwrap_or_default(),
                r.err_norm.map(fmt).unwrap_or_default(),
                r.factor.map(fmt).unwrap_or_default(),
                fmt(report.theory_rate),
            ]);
        }
        let csv_name = format!("contraction_{i}.csv");
        let text = csv_text(&["k", "energy_gap", "err_norm", "factor", "theory_rate"], &rows)?;
        sink.write(&csv_name, &text)?;

        let mut factors: Vec<f64> = report.records.iter().filter_map(|r| r.factor).collect();
        let max_factor = factors.iter().cloned().fold(f64::NAN, f64::max);
        let observed = median(&mut factors);
        let converged = report.stop == StopReason::Converged;
        all_converged &= converged;
        if let Some(obs) = observed {
            all_below_bound &= obs <= report.theory_rate * (1.0 + 1e-3) + 1e-9;
        }
        if max_factor.is_finite() {
            all_below_bound &= max_factor <= report.theory_rate * (1.0 + 1e-3) + 1e-9;
        }
        cases.push(json!({
            "c0": c0,
            "file": csv_name,
            "iterations": report.iterations,
            "converged": converged,
            "theory_rate": report.theory_rate,
            "observed_rate": observed,
            "max_factor": if max_factor.is_finite() { Some(max_factor) } else { None },
            "gap_to_norm": report.gap_to_norm,
        }));
    }
    let gates = BTreeMap::from([
        ("all_converged".to_string(), all_converged),
        ("factors_below_theory".to_string(), all_below_bound),
    ]);
    sink.write_json(
        "summary.json",
        &json!({
            "scenario": "contraction_study",
            "scheme": config.scheme,
            "cases": cases,
            "gates": gates,
            "passed": gates.values().all(|&g| g),
        }),
    )?;
    Ok(gates)
}

fn trajectory_scale(a: &RunResult) -> f64 {
    a.snapshots
        .iter()
        .map(|s| {
            let mx = |v: &DVector<f64>| if v.is_empty() { 0.0 } else { v.amax() };
            mx(&s.u).max(mx(&s.p)).max(mx(&s.q))
        })
        .fold(0.0, f64::max)
}

fn snapshot_diff(a: &RunResult, b: &RunResult, n: usize) -> f64 {
    let (sa, sb) = (&a.snapshots[n], &b.snapshots[n]);
    let d = |x: &DVector<f64>, y: &DVector<f64>| if x.is_empty() { 0.0 } else { (x - y).amax() };
    d(&sa.u, &sb.u).max(d(&sa.p, &sb.p)).max(d(&sa.q, &sb.q))
}

/// Integrate the same problem with all three stage solvers and compare the
/// trajectories step by step.
fn equivalence_check(config: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<BTreeMap<String, bool>> {
    let material = config.material.build(2 * config.mesh.nx * config.mesh.ny)?;
    let disc = config.discretization(&material)?;
    let init = InitialData::zeros(&disc.ops);
    let mut results = Vec::new();
    for scheme in [
        CouplingScheme::UndrainedSplit,
        CouplingScheme::AlternatingMinimization,
        CouplingScheme::Monolithic,
    ] {
        results.push(run(
            &disc,
            &config.time,
            config.theta1,
            config.theta2,
            scheme,
            &config.solver,
            &config.loads,
            &init,
        )?);
    }
    let (us, am, mono) = (&results[0], &results[1], &results[2]);
    let scale = trajectory_scale(us).max(1e-300);

    let mut rows = Vec::new();
    let mut max_us_am: f64 = 0.0;
    let mut max_us_mono: f64 = 0.0;
    for n in 0..=config.time.n_steps {
        let d_am = snapshot_diff(us, am, n);
        let d_mono = snapshot_diff(us, mono, n);
        max_us_am = max_us_am.max(d_am);
        max_us_mono = max_us_mono.max(d_mono);
        rows.push(vec![
            n.to_string(),
            fmt(us.snapshots[n].t),
            fmt(d_am),
            fmt(d_mono),
        ]);
    }
    let text = csv_text(&["step", "t", "diff_split_vs_min", "diff_split_vs_mono"], &rows)?;
    sink.write("equivalence.csv", &text)?;

    // The two sweeps are algebraically identical, so they may differ only by
    // rounding; the split differs from the monolithic solution by the outer
    // stopping tolerance accumulated over the steps.
    let tol_sweeps = 1e-9 * scale;
    let tol_mono = 100.0 * config.solver.tol_outer * (config.time.n_steps as f64).max(1.0) * scale;
    let gates = BTreeMap::from([
        ("sweeps_identical".to_string(), max_us_am <= tol_sweeps),
        ("split_matches_monolithic".to_string(), max_us_mono <= tol_mono),
    ]);
    sink.write_json(
        "summary.json",
        &json!({
            "scenario": "equivalence_check",
            "state_scale": scale,
            "max_diff_split_vs_min": max_us_am,
            "max_diff_split_vs_mono": max_us_mono,
            "tol_split_vs_min": tol_sweeps,
            "tol_split_vs_mono": tol_mono,
            "mean_outer_iterations": us.steps.iter().map(|s| s.iterations).sum::<usize>() as f64
                / us.steps.len().max(1) as f64,
            "gates": gates,
            "passed": gates.values().all(|&g| g),
        }),
    )?;
    Ok(gates)
}

/// Mass-weighted norm of the difference between two final-time snapshots;
/// independent of the time step so errors across levels are comparable.
fn state_error(disc: &Discretization, a: &RunResult, b: &RunResult) -> f64 {
    let (sa, sb) = (a.last(), b.last());
    let ops = &disc.ops;
    let du = &sa.u - &sb.u;
    let dp = &sa.p - &sb.p;
    let dq = &sa.q - &sb.q;
    let mut sq = (&ops.m_u * &du).dot(&du) + (&ops.m_k * &dq).dot(&dq);
    for i in 0..ops.n_p {
        sq += ops.m_p[i] * dp[i] * dp[i];
    }
    sq.sqrt()
}

/// Halve the step repeatedly against a fine-step reference run and measure
/// the observed convergence order of the full scheme.
fn time_convergence(
    config: &ScenarioConfig,
    n_levels: usize,
    expected_order: f64,
    sink: &mut ArtifactSink,
) -> Result<BTreeMap<String, bool>> {
    let material = config.material.build(2 * config.mesh.nx * config.mesh.ny)?;
    let disc = config.discretization(&material)?;
    let init = InitialData::zeros(&disc.ops);
    let do_run = |grid: &TimeGrid| {
        run(
            &disc,
            grid,
            config.theta1,
            config.theta2,
            config.scheme,
            &config.solver,
            &config.loads,
            &init,
        )
    };
    let refine = 1usize << (n_levels + 1);
    let reference = do_run(&TimeGrid {
        dt: config.time.dt / refine as f64,
        n_steps: config.time.n_steps * refine,
    })?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut orders = Vec::new();
    for level in 0..n_levels {
        let k = 1usize << level;
        let grid = TimeGrid {
            dt: config.time.dt / k as f64,
            n_steps: config.time.n_steps * k,
        };
        let result = do_run(&grid)?;
        let err = state_error(&disc, &result, &reference);
        let order = if level > 0 {
            let o = f64::log2(errors[level - 1] / err);
            orders.push(o);
            Some(o)
        } else {
            None
        };
        errors.push(err);
        rows.push(vec![
            level.to_string(),
            fmt(grid.dt),
            fmt(err),
            order.map(fmt).unwrap_or_default(),
        ]);
    }
    let text = csv_text(&["level", "dt", "error", "order"], &rows)?;
    sink.write("convergence.csv", &text)?;

    let mean_order = orders.iter().sum::<f64>() / orders.len().max(1) as f64;
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let gates = BTreeMap::from([
        ("errors_decrease".to_string(), decreasing),
        (
            "order_matches".to_string(),
            (mean_order - expected_order).abs() <= 0.35,
        ),
    ]);
    sink.write_json(
        "summary.json",
        &json!({
            "scenario": "time_convergence",
            "expected_order": expected_order,
            "errors": errors,
            "orders": orders,
            "mean_order": mean_order,
            "gates": gates,
            "passed": gates.values().all(|&g| g),
        }),
    )?;
    Ok(gates)
}

/// Time series of base pressure and surface settlement for a loaded column.
fn column(config: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<BTreeMap<String, bool>> {
    let material = config.material.build(2 * config.mesh.nx * config.mesh.ny)?;
    let disc = config.discretization(&material)?;
    let init = InitialData::zeros(&disc.ops);
    let result = run(
        &disc,
        &config.time,
        config.theta1,
        config.theta2,
        config.scheme,
        &config.solver,
        &config.loads,
        &init,
    )?;

    // Probe dofs: the pressure of the first base element and the vertical
    // displacement of the mid vertex of the free surface.
    let top_mid = config.mesh.ny * (config.mesh.nx + 1) + config.mesh.nx / 2;
    let settle_dof = disc.dofs.u_map[2 * top_mid + 1];
    let mut rows = Vec::new();
    for (n, step) in result.steps.iter().enumerate() {
        let snap = &result.snapshots[n + 1];
        let settlement = settle_dof.map_or(0.0, |g| snap.u[g]);
        rows.push(vec![
            step.step.to_string(),
            fmt(step.t),
            step.iterations.to_string(),
            fmt(snap.p[0]),
            fmt(settlement),
        ]);
    }
    let text = csv_text(&["step", "t", "iterations", "p_base", "settlement"], &rows)?;
    sink.write("column.csv", &text)?;

    let max_iter = result.steps.iter().map(|s| s.iterations).max().unwrap_or(0);
    let finite = result
        .snapshots
        .iter()
        .all(|s| s.u.iter().chain(s.p.iter()).chain(s.q.iter()).all(|x| x.is_finite()));
    let gates = BTreeMap::from([
        ("all_steps_converged".to_string(), true), // run() errors otherwise
        ("solution_finite".to_string(), finite),
    ]);
    sink.write_json(
        "summary.json",
        &json!({
            "scenario": "column",
            "n_steps": config.time.n_steps,
            "max_outer_iterations": max_iter,
            "final_settlement": rows.last().map(|r| r[4].clone()),
            "final_base_pressure": rows.last().map(|r| r[3].clone()),
            "gates": gates,
            "passed": gates.values().all(|&g| g),
        }),
    )?;
    Ok(gates)
}
