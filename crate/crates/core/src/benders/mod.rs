//! Scenario-selection Benders decomposition.
//!
//! The master keeps the first stage, the scenario drop indicators and one
//! cost variable per scenario; cuts harvested from per-scenario dual
//! subproblems are multiplied by the keep indicator and product-linearized,
//! so dropping a scenario switches off its whole cut group. Variants differ
//! in which scenarios get cut each round, in warm-start cut harvesting, in
//! no-good exclusion of evaluated drop patterns, and in aggregation blocks
//! attached to the master.

mod init;
mod master;

pub use master::{add_integer_cut, build_master, MasterExtras};

use crate::formulate::{build_fixed_z, build_indicator, FormulateError, LinearizationBounds};
use crate::jensen::{JensenApplicability, JensenError, JensenMode};
use crate::lpkit::{
    BackendPort, KernelBackend, LinearProgram, LpError, LpOutcome, ObjSense, Row, RowSense,
    SolveLimits, INF,
};
use crate::model::{CcmpInstance, ModelError, Solution, SolveStatus, MASS_TOL};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

const DUAL_FEAS_TOL: f64 = 1e-7;
const DUAL_SIGN_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Error)]
pub enum BendersError {
    #[error("scenario {0}: recourse infeasible at the reference point yet feasible elsewhere; split handling is not supported")]
    SplitCaseDetected(usize),
    #[error("scenario {0}: dual region is empty where a cut was requested")]
    DualInfeasible(usize),
    #[error("first-stage cost is unbounded below over the first-stage set")]
    FirstStageUnbounded,
    #[error("scenario {0} has negative recourse costs: set a finite scenario-cost floor")]
    EtaFloorRequired(usize),
    #[error("backend not usable for decomposition: {0}")]
    BackendUnsupported(String),
    #[error(transparent)]
    Jensen(#[from] JensenError),
    #[error(transparent)]
    Kernel(#[from] LpError),
    #[error(transparent)]
    Formulate(#[from] FormulateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Method variants. `Bd0` cuts only kept scenarios; `Bd1` cuts all; the rest
/// are `Bd1` plus warm starts, no-good cuts, dual refinement or aggregation
/// blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bd0,
    Bd1,
    Bd2,
    Bd3,
    Bd4,
    Bd5,
    Bd6,
    Bd7,
    Bd8,
    Bd1J,
    Bd1Rj,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "bd0" => Variant::Bd0,
            "bd1" => Variant::Bd1,
            "bd2" => Variant::Bd2,
            "bd3" => Variant::Bd3,
            "bd4" => Variant::Bd4,
            "bd5" => Variant::Bd5,
            "bd6" => Variant::Bd6,
            "bd7" => Variant::Bd7,
            "bd8" => Variant::Bd8,
            "bd1j" => Variant::Bd1J,
            "bd1rj" => Variant::Bd1Rj,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bd0 => "bd0",
            Variant::Bd1 => "bd1",
            Variant::Bd2 => "bd2",
            Variant::Bd3 => "bd3",
            Variant::Bd4 => "bd4",
            Variant::Bd5 => "bd5",
            Variant::Bd6 => "bd6",
            Variant::Bd7 => "bd7",
            Variant::Bd8 => "bd8",
            Variant::Bd1J => "bd1j",
            Variant::Bd1Rj => "bd1rj",
        }
    }

    /// Cut every scenario each round (not only the kept ones).
    fn cuts_all_scenarios(self) -> bool {
        !matches!(self, Variant::Bd0)
    }

    fn init_mode(self) -> Option<InitMode> {
        match self {
            Variant::Bd3 | Variant::Bd4 => Some(InitMode::AllKept),
            Variant::Bd5 | Variant::Bd6 | Variant::Bd7 | Variant::Bd8 => Some(InitMode::SmallM),
            _ => None,
        }
    }

    fn integer_cuts(self) -> bool {
        matches!(self, Variant::Bd4 | Variant::Bd6 | Variant::Bd7 | Variant::Bd8)
    }

    fn pareto_main(self) -> bool {
        matches!(self, Variant::Bd2)
    }

    fn pareto_init(self) -> bool {
        matches!(self, Variant::Bd8)
    }

    fn strongest_only(self) -> bool {
        matches!(self, Variant::Bd7 | Variant::Bd8)
    }

    fn wants_jensen(self) -> bool {
        matches!(self, Variant::Bd1J | Variant::Bd1Rj)
    }
}

/// Warm-start flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Classical decomposition of the all-scenarios-kept model (first stage x).
    AllKept,
    /// Decomposition of the small-M indicator model (first stage x and z).
    SmallM,
}

/// Engine configuration. Defaults carry the standard experimental settings;
/// [`BendersConfig::oracle_grade`] tightens every gap for verification runs.
#[derive(Debug, Clone)]
pub struct BendersConfig {
    pub variant: Variant,
    /// Relative MIP gap of master solves.
    pub master_gap: f64,
    /// Relative gap of dual subproblem solves (the built-in kernel solves
    /// LPs exactly; kept for external backends).
    pub sub_gap: f64,
    /// Master gap during the warm-start stage.
    pub init_gap: f64,
    /// Wall-clock cap of the warm-start stage, seconds.
    pub init_time_cap: f64,
    /// Overall wall-clock cap, seconds.
    pub time_limit: f64,
    /// Indicator coefficient of the small-M warm start.
    pub small_m: f64,
    /// Big-M for the feasibility probe and indicator references.
    pub big_m: f64,
    pub bounds: LinearizationBounds,
    /// Stop when (UB - LB) / max(|LB|, lb_floor) falls below this.
    pub opt_tol: f64,
    pub lb_floor: f64,
    pub iter_limit: usize,
    /// Lower bound for scenario-cost variables when recourse costs are
    /// negative (they default to zero otherwise).
    pub eta_floor: Option<f64>,
}

impl Default for BendersConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Bd1,
            master_gap: 0.005,
            sub_gap: 1e-4,
            init_gap: 0.02,
            init_time_cap: 500.0,
            time_limit: 3600.0,
            small_m: 1000.0,
            big_m: 1e5,
            bounds: LinearizationBounds::default(),
            opt_tol: 0.005,
            lb_floor: 1e-10,
            iter_limit: 400,
            eta_floor: None,
        }
    }
}

impl BendersConfig {
    pub fn new(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    /// Kernel-grade tolerances for verification against the oracle.
    pub fn oracle_grade(variant: Variant) -> Self {
        Self { variant, master_gap: 1e-9, sub_gap: 1e-9, init_gap: 1e-4, opt_tol: 1e-9, ..Self::default() }
    }

    fn validate(&self) -> Result<(), BendersError> {
        let all_pos = self.master_gap > 0.0
            && self.sub_gap > 0.0
            && self.init_gap > 0.0
            && self.init_time_cap > 0.0
            && self.time_limit > 0.0
            && self.opt_tol > 0.0
            && self.lb_floor > 0.0;
        if all_pos {
            Ok(())
        } else {
            Err(BendersError::Kernel(LpError::InvalidProblem("tolerances must be positive".into())))
        }
    }
}

/// Where a pool element came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutOrigin {
    MainLoop,
    AllKeptInit,
    SmallMInit,
    Pareto,
}

/// Dual-feasible point of a scenario's subproblem.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub scenario: usize,
    pub weights: Vec<f64>,
    pub origin: CutOrigin,
}

impl DualPoint {
    /// `H^T u <= f` within 1e-7 and `u >= -1e-9`.
    pub fn is_feasible(&self, inst: &CcmpInstance) -> bool {
        let s = &inst.scenarios[self.scenario];
        if self.weights.len() != s.rhs.len() || self.weights.iter().any(|&u| u < -DUAL_SIGN_TOL) {
            return false;
        }
        let ht_u = s.recourse.mul_vec_transposed(&self.weights);
        ht_u.iter().zip(&s.cost).all(|(v, f)| *v <= f + DUAL_FEAS_TOL * (1.0 + f.abs()))
    }
}

/// Dual ray (recourse-infeasibility certificate direction).
#[derive(Debug, Clone)]
pub struct DualRay {
    pub scenario: usize,
    pub direction: Vec<f64>,
    pub origin: CutOrigin,
}

impl DualRay {
    /// `H^T v <= 0` within 1e-7, `v >= -1e-9`, unit infinity norm.
    pub fn is_feasible(&self, inst: &CcmpInstance) -> bool {
        let s = &inst.scenarios[self.scenario];
        if self.direction.len() != s.rhs.len() || self.direction.iter().any(|&u| u < -DUAL_SIGN_TOL) {
            return false;
        }
        let norm = self.direction.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if (norm - 1.0).abs() > DUAL_FEAS_TOL {
            return false;
        }
        let ht_v = s.recourse.mul_vec_transposed(&self.direction);
        ht_v.iter().all(|&v| v <= DUAL_FEAS_TOL)
    }
}

/// Per-scenario collections of harvested dual points and rays, deduplicated.
#[derive(Debug, Clone)]
pub struct CutPool {
    pub points: Vec<Vec<DualPoint>>,
    pub rays: Vec<Vec<DualRay>>,
}

impl CutPool {
    pub fn new(num_scenarios: usize) -> Self {
        Self { points: vec![Vec::new(); num_scenarios], rays: vec![Vec::new(); num_scenarios] }
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DEDUP_TOL)
    }

    /// Returns true when the point was new.
    pub fn add_point(&mut self, p: DualPoint) -> bool {
        let bucket = &mut self.points[p.scenario];
        if bucket.iter().any(|q| Self::close(&q.weights, &p.weights)) {
            return false;
        }
        bucket.push(p);
        true
    }

    /// Returns true when the ray was new. Directions are normalized first.
    pub fn add_ray(&mut self, mut r: DualRay) -> bool {
        let norm = r.direction.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm > 0.0 {
            for v in r.direction.iter_mut() {
                *v /= norm;
            }
        }
        let bucket = &mut self.rays[r.scenario];
        if bucket.iter().any(|q| Self::close(&q.direction, &r.direction)) {
            return false;
        }
        bucket.push(r);
        true
    }

    pub fn len(&self) -> usize {
        self.points.iter().map(Vec::len).sum::<usize>() + self.rays.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every element satisfies its dual-feasibility invariant.
    pub fn all_feasible(&self, inst: &CcmpInstance) -> bool {
        self.points.iter().flatten().all(|p| p.is_feasible(inst))
            && self.rays.iter().flatten().all(|r| r.is_feasible(inst))
    }
}

/// Preprocessing class of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioClass {
    Regular,
    /// Recourse provably infeasible for every first stage: drop it (z = 1).
    ForceDrop,
    /// Recourse cost unbounded below wherever feasible: keeping it makes the
    /// whole problem unbounded.
    ForceKeep,
}

/// Reference first-stage point: cheapest point of the relaxed first stage.
fn reference_point(inst: &CcmpInstance, be: &dyn BackendPort) -> Result<Option<Vec<f64>>, BendersError> {
    let lp = first_stage_lp(inst);
    match be.solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { primal, .. } => Ok(Some(primal)),
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(BendersError::FirstStageUnbounded),
    }
}

fn first_stage_lp(inst: &CcmpInstance) -> LinearProgram {
    LinearProgram {
        sense: ObjSense::Minimize,
        objective: inst.cost.clone(),
        rows: inst
            .first_stage_rows
            .rows
            .iter()
            .zip(&inst.first_stage_rhs)
            .map(|(r, &rhs)| Row { coeffs: r.clone(), sense: RowSense::Ge, rhs })
            .collect(),
        bounds: inst.x_bounds(),
    }
}

/// Probe every scenario and classify it. Detection logic:
/// recourse jointly infeasible with the (relaxed) first stage -> `ForceDrop`;
/// empty dual region with recourse feasible at the reference point ->
/// `ForceKeep`; empty dual region with recourse infeasible at the reference
/// point but jointly feasible elsewhere -> the unsupported split case.
pub fn classify_scenarios(inst: &CcmpInstance) -> Result<Vec<ScenarioClass>, BendersError> {
    classify_on(inst, &KernelBackend)
}

fn classify_on(inst: &CcmpInstance, be: &dyn BackendPort) -> Result<Vec<ScenarioClass>, BendersError> {
    let reference = reference_point(inst, be)?;
    let mut out = Vec::with_capacity(inst.num_scenarios());
    for k in 0..inst.num_scenarios() {
        let s = &inst.scenarios[k];
        // Joint feasibility of {x relaxed-feasible, y >= 0, rows hold}.
        let mut rows: Vec<Row> = inst
            .first_stage_rows
            .rows
            .iter()
            .zip(&inst.first_stage_rhs)
            .map(|(r, &rhs)| Row { coeffs: r.clone(), sense: RowSense::Ge, rhs })
            .collect();
        let n = inst.num_x();
        for (i, &rhs) in s.rhs.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = s.first_stage.row(i).to_vec();
            for &(c, v) in s.recourse.row(i) {
                coeffs.push((n + c, v));
            }
            rows.push(Row { coeffs, sense: RowSense::Ge, rhs });
        }
        let mut bounds = inst.x_bounds();
        bounds.extend(std::iter::repeat_n((0.0, INF), inst.recourse_dim));
        let joint = LinearProgram {
            sense: ObjSense::Minimize,
            objective: vec![0.0; n + inst.recourse_dim],
            rows,
            bounds,
        };
        let joint_feasible = matches!(be.solve_lp(&joint, SolveLimits::none())?, LpOutcome::Optimal { .. });
        if !joint_feasible {
            out.push(ScenarioClass::ForceDrop);
            continue;
        }
        // Dual region {u >= 0, H^T u <= f} emptiness.
        let ht = s.recourse.transposed();
        let dual_rows: Vec<Row> = (0..inst.recourse_dim)
            .map(|j| Row { coeffs: ht.row(j).to_vec(), sense: RowSense::Le, rhs: s.cost[j] })
            .collect();
        let dual_lp = LinearProgram {
            sense: ObjSense::Minimize,
            objective: vec![0.0; s.rhs.len()],
            rows: dual_rows,
            bounds: vec![(0.0, INF); s.rhs.len()],
        };
        let dual_nonempty = matches!(be.solve_lp(&dual_lp, SolveLimits::none())?, LpOutcome::Optimal { .. });
        if dual_nonempty {
            out.push(ScenarioClass::Regular);
            continue;
        }
        // Unbounded recourse wherever feasible. Feasible at the reference
        // point -> treat as everywhere (ForceKeep); infeasible there while
        // feasible elsewhere witnesses the split case. An unbounded-below
        // recourse value still counts as feasible here.
        let feasible_at_ref = match &reference {
            Some(x0) => match crate::model::recourse_value(inst, k, x0) {
                Ok(v) => v.is_some(),
                Err(ModelError::UnboundedRecourse(_)) => true,
                Err(e) => return Err(e.into()),
            },
            None => false,
        };
        if feasible_at_ref {
            out.push(ScenarioClass::ForceKeep);
        } else {
            return Err(BendersError::SplitCaseDetected(k));
        }
    }
    Ok(out)
}

/// Result of one dual subproblem solve.
#[derive(Debug, Clone)]
pub enum SubproblemResult {
    /// Optimal dual point, its value, and the primal recourse read off the
    /// solve's duals.
    Point { point: DualPoint, value: f64, recourse: Vec<f64> },
    Ray(DualRay),
}

/// Solve scenario `k`'s dual subproblem at the first stage `x0`:
/// maximize `(h_k - G_k x0) . u` over `{u >= 0, H_k^T u <= f_k}`.
pub fn solve_dual_subproblem(
    inst: &CcmpInstance,
    k: usize,
    x0: &[f64],
    _config: &BendersConfig,
) -> Result<SubproblemResult, BendersError> {
    let rhs = inst.recourse_rhs(k, x0);
    solve_dual_with_rhs(inst, k, &rhs, CutOrigin::MainLoop, &KernelBackend)
}

fn solve_dual_with_rhs(
    inst: &CcmpInstance,
    k: usize,
    rhs: &[f64],
    origin: CutOrigin,
    be: &dyn BackendPort,
) -> Result<SubproblemResult, BendersError> {
    let s = &inst.scenarios[k];
    let i2 = s.rhs.len();
    let ht = s.recourse.transposed();
    let rows: Vec<Row> = (0..inst.recourse_dim)
        .map(|j| Row { coeffs: ht.row(j).to_vec(), sense: RowSense::Le, rhs: s.cost[j] })
        .collect();
    let lp = LinearProgram {
        sense: ObjSense::Maximize,
        objective: rhs.to_vec(),
        rows,
        bounds: vec![(0.0, INF); i2],
    };
    match be.solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { primal, dual, objective } => Ok(SubproblemResult::Point {
            point: DualPoint { scenario: k, weights: primal, origin },
            value: objective,
            recourse: dual,
        }),
        LpOutcome::Unbounded { ray } => {
            Ok(SubproblemResult::Ray(DualRay { scenario: k, direction: ray, origin }))
        }
        LpOutcome::Infeasible { .. } => Err(BendersError::DualInfeasible(k)),
    }
}

/// Among alternative optima of the dual subproblem at `x0`, pick one
/// maximizing depth at the core point. Falls back to the original point on
/// any failure.
pub fn pareto_refine(
    inst: &CcmpInstance,
    k: usize,
    x0: &[f64],
    core_point: &[f64],
    incumbent_value: f64,
    original: &DualPoint,
) -> DualPoint {
    pareto_refine_on(inst, k, x0, core_point, incumbent_value, original, &KernelBackend)
}

pub(super) fn pareto_refine_on(
    inst: &CcmpInstance,
    k: usize,
    x0: &[f64],
    core_point: &[f64],
    incumbent_value: f64,
    original: &DualPoint,
    be: &dyn BackendPort,
) -> DualPoint {
    let s = &inst.scenarios[k];
    let i2 = s.rhs.len();
    let ht = s.recourse.transposed();
    let mut rows: Vec<Row> = (0..inst.recourse_dim)
        .map(|j| Row { coeffs: ht.row(j).to_vec(), sense: RowSense::Le, rhs: s.cost[j] })
        .collect();
    let at_x0 = inst.recourse_rhs(k, x0);
    rows.push(Row {
        coeffs: at_x0.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect(),
        sense: RowSense::Eq,
        rhs: incumbent_value,
    });
    let lp = LinearProgram {
        sense: ObjSense::Maximize,
        objective: inst.recourse_rhs(k, core_point),
        rows,
        bounds: vec![(0.0, INF); i2],
    };
    match be.solve_lp(&lp, SolveLimits::none()) {
        Ok(LpOutcome::Optimal { primal, .. }) => {
            DualPoint { scenario: k, weights: primal, origin: CutOrigin::Pareto }
        }
        _ => original.clone(),
    }
}

/// Core point for dual refinement: the bound-box midpoint projected onto the
/// relaxed first stage by one least-deviation LP.
pub fn core_point(inst: &CcmpInstance) -> Result<Option<Vec<f64>>, BendersError> {
    core_point_on(inst, &KernelBackend)
}

pub(super) fn core_point_on(
    inst: &CcmpInstance,
    be: &dyn BackendPort,
) -> Result<Option<Vec<f64>>, BendersError> {
    let n = inst.num_x();
    let mid: Vec<f64> = inst
        .x_specs
        .iter()
        .map(|s| {
            if s.lower.is_finite() && s.upper.is_finite() {
                0.5 * (s.lower + s.upper)
            } else if s.lower.is_finite() {
                s.lower + 1.0
            } else if s.upper.is_finite() {
                s.upper - 1.0
            } else {
                0.0
            }
        })
        .collect();
    // minimize sum |x - mid| over the relaxed first stage.
    let mut rows: Vec<Row> = inst
        .first_stage_rows
        .rows
        .iter()
        .zip(&inst.first_stage_rhs)
        .map(|(r, &rhs)| Row { coeffs: r.clone(), sense: RowSense::Ge, rhs })
        .collect();
    for j in 0..n {
        rows.push(Row { coeffs: vec![(n + j, 1.0), (j, -1.0)], sense: RowSense::Ge, rhs: -mid[j] });
        rows.push(Row { coeffs: vec![(n + j, 1.0), (j, 1.0)], sense: RowSense::Ge, rhs: mid[j] });
    }
    let mut bounds = inst.x_bounds();
    bounds.extend(std::iter::repeat_n((0.0, INF), n));
    let mut objective = vec![0.0; 2 * n];
    for c in objective.iter_mut().skip(n) {
        *c = 1.0;
    }
    let lp = LinearProgram { sense: ObjSense::Minimize, objective, rows, bounds };
    match be.solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { primal, .. } => Ok(Some(primal[..n].to_vec())),
        _ => Ok(None),
    }
}

/// One record per main-loop round.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lb: f64,
    pub ub: f64,
    pub new_points: usize,
    pub new_rays: usize,
    pub integer_cuts: usize,
    pub master_seconds: f64,
    pub sub_seconds: f64,
    /// FNV-1a hash of the master's drop pattern.
    pub selection_hash: u64,
}

/// Terminal report of a run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub lb: f64,
    pub ub: f64,
    pub lb_history: Vec<f64>,
    pub ub_history: Vec<f64>,
    pub init_iterations: usize,
    pub main_iterations: usize,
    pub wall_seconds: f64,
}

/// Everything; returned by [`run`].
#[derive(Debug)]
pub struct RunOutput {
    pub report: SolveReport,
    pub solution: Option<Solution>,
    pub pool: CutPool,
    pub log: Vec<IterationRecord>,
}

pub fn selection_hash(dropped: &[bool]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &d in dropped {
        h ^= d as u64 + 1;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Run the decomposition. See [`run_with_observer`] for live iteration
/// records.
pub fn run(inst: &CcmpInstance, config: &BendersConfig) -> Result<RunOutput, BendersError> {
    run_with_observer(inst, config, &mut |_| {})
}

/// Run on a substituted solver backend. The backend must advertise LP, MIP,
/// ray and certificate support; cut generation needs all four.
pub fn run_on_backend(
    inst: &CcmpInstance,
    config: &BendersConfig,
    backend: &dyn BackendPort,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutput, BendersError> {
    let caps = backend.capabilities();
    if !(caps.lp && caps.mip && caps.rays && caps.farkas) {
        return Err(BendersError::BackendUnsupported(
            "decomposition subproblems need lp, mip, rays and farkas support".into(),
        ));
    }
    run_inner(inst, config, backend, observer)
}

/// Warm-start yield: harvested pool, feasible incumbent with its objective
/// (when one was found), and the round count.
pub type WarmStart = (CutPool, Option<(f64, Solution)>, usize);

/// Run only the warm-start stage of an init-capable variant.
pub fn warm_start(inst: &CcmpInstance, config: &BendersConfig) -> Result<WarmStart, BendersError> {
    let mode = config
        .variant
        .init_mode()
        .ok_or_else(|| LpError::InvalidProblem(format!("{} has no warm start", config.variant.name())))?;
    let classes = classify_scenarios(inst)?;
    let start = Instant::now();
    let init = init::initialize(inst, config, &classes, mode, &start, &KernelBackend)?;
    Ok((init.pool, init.incumbent, init.iterations))
}

struct LoopState {
    lb: f64,
    ub: f64,
    incumbent: Option<Solution>,
    lb_history: Vec<f64>,
    ub_history: Vec<f64>,
}

impl LoopState {
    fn gap(&self, floor: f64) -> Option<f64> {
        if self.ub.is_finite() && self.lb.is_finite() {
            Some(((self.ub - self.lb) / self.lb.abs().max(floor)).max(0.0))
        } else {
            None
        }
    }
}

pub fn run_with_observer(
    inst: &CcmpInstance,
    config: &BendersConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutput, BendersError> {
    run_inner(inst, config, &KernelBackend, observer)
}

fn run_inner(
    inst: &CcmpInstance,
    config: &BendersConfig,
    be: &dyn BackendPort,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutput, BendersError> {
    config.validate()?;
    let start = Instant::now();
    let kk = inst.num_scenarios();
    let deadline = |start: &Instant| -> f64 { (config.time_limit - start.elapsed().as_secs_f64()).max(0.01) };

    // Scenario-cost floors need nonnegative recourse costs.
    if config.eta_floor.is_none() {
        for (k, s) in inst.scenarios.iter().enumerate() {
            if s.cost.iter().any(|&f| f < 0.0) {
                return Err(BendersError::EtaFloorRequired(k));
            }
        }
    }

    let classes = classify_on(inst, be)?;
    let finish = |status: SolveStatus, state: LoopState, pool: CutPool, log: Vec<IterationRecord>, init_iters: usize| {
        let objective = state.incumbent.as_ref().map(|s| s.objective);
        Ok(RunOutput {
            report: SolveReport {
                status,
                objective,
                lb: state.lb,
                ub: state.ub,
                lb_history: state.lb_history,
                ub_history: state.ub_history,
                init_iterations: init_iters,
                main_iterations: log.len(),
                wall_seconds: start.elapsed().as_secs_f64(),
            },
            solution: state.incumbent,
            pool,
            log,
        })
    };
    let empty_state = || LoopState { lb: -INF, ub: INF, incumbent: None, lb_history: vec![], ub_history: vec![] };

    // Unbounded-recourse scenarios force the whole problem unbounded when the
    // rest is feasible; settle that with one indicator feasibility probe.
    if classes.contains(&ScenarioClass::ForceKeep) {
        let feasible = feasibility_probe(inst, &classes, config, be)?;
        let status = if feasible { SolveStatus::Unbounded } else { SolveStatus::Infeasible };
        return finish(status, empty_state(), CutPool::new(kk), vec![], 0);
    }
    let forced_mass: f64 = classes
        .iter()
        .zip(&inst.scenarios)
        .filter(|(c, _)| **c == ScenarioClass::ForceDrop)
        .map(|(_, s)| s.prob)
        .sum();
    if forced_mass > inst.epsilon + MASS_TOL {
        return finish(SolveStatus::Infeasible, empty_state(), CutPool::new(kk), vec![], 0);
    }
    // Bounded first stage is assumed; verified by one relaxation solve.
    if reference_point(inst, be)?.is_none() {
        return finish(SolveStatus::Infeasible, empty_state(), CutPool::new(kk), vec![], 0);
    }

    // Aggregation block applicability, resolved once.
    let jensen_mode = if config.variant.wants_jensen() {
        let app = JensenApplicability::analyze(inst);
        Some(match config.variant {
            Variant::Bd1Rj => {
                if !(app.h_common && app.f_common && app.g_common && app.equal_prob) {
                    return Err(BendersError::Jensen(JensenError::ApplicabilityFailed(
                        "conditional-mean block needs equal probabilities and shared blocks".into(),
                    )));
                }
                JensenMode::Relaxed
            }
            _ => {
                if !(app.h_common && app.f_common && app.equal_prob) {
                    return Err(BendersError::Jensen(JensenError::ApplicabilityFailed(
                        "aggregation block needs equal probabilities and a shared recourse block".into(),
                    )));
                }
                if app.g_common {
                    JensenMode::CommonGLinear
                } else {
                    JensenMode::EqualProbExact
                }
            }
        })
    } else {
        None
    };

    // Warm start.
    let mut state = empty_state();
    let mut pool = CutPool::new(kk);
    let mut init_iterations = 0usize;
    if let Some(mode) = config.variant.init_mode() {
        let init = init::initialize(inst, config, &classes, mode, &start, be)?;
        pool = init.pool;
        init_iterations = init.iterations;
        if let Some((ub, sol)) = init.incumbent {
            state.ub = ub;
            state.incumbent = Some(sol);
        }
    }

    let core = if config.variant.pareto_main() { core_point_on(inst, be)? } else { None };
    let mut integer_cuts: Vec<Vec<bool>> = Vec::new();
    let mut log: Vec<IterationRecord> = Vec::new();

    for iteration in 1..=config.iter_limit {
        if start.elapsed().as_secs_f64() > config.time_limit {
            let gap = state.gap(config.lb_floor);
            return finish(SolveStatus::TimeLimit { gap }, state, pool, log, init_iterations);
        }
        // Step: master.
        let master_clock = Instant::now();
        let mut master = build_master(
            inst,
            &pool,
            config,
            &MasterExtras { integer_cuts: &integer_cuts, forced: &classes },
        )?;
        if let Some(mode) = jensen_mode {
            crate::jensen::attach_jensen_block(&mut master, inst, mode, inst.epsilon, &config.bounds)?;
        }
        let limits = SolveLimits::with_time(deadline(&start));
        let master_res = match be.solve_mip(&master.mip, limits, config.master_gap) {
            Ok(r) => r,
            Err(LpError::LimitExceeded { .. }) => {
                let gap = state.gap(config.lb_floor);
                return finish(SolveStatus::TimeLimit { gap }, state, pool, log, init_iterations);
            }
            Err(e) => return Err(e.into()),
        };
        let master_seconds = master_clock.elapsed().as_secs_f64();
        let (x0, dropped0, master_bound) = match &master_res.outcome {
            LpOutcome::Infeasible { .. } => {
                // No admissible selection left. With no-good cuts in play the
                // incumbent (if any) is exact.
                let status = if config.variant.integer_cuts() && state.incumbent.is_some() {
                    state.lb = state.ub;
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Infeasible
                };
                let record = IterationRecord {
                    iteration,
                    lb: state.lb,
                    ub: state.ub,
                    new_points: 0,
                    new_rays: 0,
                    integer_cuts: 0,
                    master_seconds,
                    sub_seconds: 0.0,
                    selection_hash: 0,
                };
                observer(&record);
                log.push(record);
                return finish(status, state, pool, log, init_iterations);
            }
            LpOutcome::Unbounded { .. } => {
                return Err(BendersError::FirstStageUnbounded);
            }
            LpOutcome::Optimal { primal, .. } => {
                let x0: Vec<f64> = master
                    .varmap
                    .x
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| if inst.x_specs[j].is_integral() { primal[c].round() } else { primal[c] })
                    .collect();
                let dropped: Vec<bool> = master.varmap.z.iter().map(|&c| primal[c] > 0.5).collect();
                (x0, dropped, master_res.best_bound)
            }
        };
        state.lb = state.lb.max(master_bound);

        // Step: subproblems and cuts.
        let sub_clock = Instant::now();
        let mut new_points = 0usize;
        let mut new_rays = 0usize;
        let mut kept_values: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
        let mut kept_infeasible = false;
        for k in 0..kk {
            if classes[k] != ScenarioClass::Regular {
                continue;
            }
            if !config.variant.cuts_all_scenarios() && dropped0[k] {
                continue;
            }
            let rhs = inst.recourse_rhs(k, &x0);
            match solve_dual_with_rhs(inst, k, &rhs, CutOrigin::MainLoop, be)? {
                SubproblemResult::Point { mut point, value, recourse } => {
                    if config.variant.pareto_main() {
                        if let Some(cp) = &core {
                            point = pareto_refine_on(inst, k, &x0, cp, value, &point, be);
                        }
                    }
                    if !dropped0[k] {
                        kept_values.insert(k, (value, recourse));
                    }
                    if pool.add_point(point) {
                        new_points += 1;
                    }
                }
                SubproblemResult::Ray(ray) => {
                    if !dropped0[k] {
                        kept_infeasible = true;
                    }
                    if pool.add_ray(ray) {
                        new_rays += 1;
                    }
                }
            }
        }
        let sub_seconds = sub_clock.elapsed().as_secs_f64();

        // Step: upper bound.
        let mut added_integer_cut = false;
        if config.variant.integer_cuts() {
            // Evaluate the drop pattern exactly, then exclude it.
            let built = build_fixed_z(inst, &dropped0, None)?;
            let limits = SolveLimits::with_time(deadline(&start));
            match be.solve_mip(&built.mip, limits, config.master_gap) {
                Ok(res) => {
                    if let LpOutcome::Optimal { primal, .. } = &res.outcome {
                        let sol = built.extract_solution(inst, primal)?;
                        if sol.objective < state.ub {
                            state.ub = sol.objective;
                            state.incumbent = Some(sol);
                        }
                    }
                }
                Err(LpError::LimitExceeded { .. }) => {
                    let gap = state.gap(config.lb_floor);
                    return finish(SolveStatus::TimeLimit { gap }, state, pool, log, init_iterations);
                }
                Err(e) => return Err(e.into()),
            }
            integer_cuts.push(dropped0.clone());
            added_integer_cut = true;
        } else if !kept_infeasible {
            // Kept scenarios all solvable at x0: assemble the candidate.
            let mut objective: f64 = inst.cost.iter().zip(&x0).map(|(c, v)| c * v).sum();
            let mut recourse = BTreeMap::new();
            let mut complete = true;
            for k in 0..kk {
                if dropped0[k] {
                    continue;
                }
                match kept_values.get(&k) {
                    Some((value, y)) => {
                        objective += inst.scenarios[k].prob * value;
                        recourse.insert(k, y.clone());
                    }
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete && objective < state.ub {
                state.ub = objective;
                state.incumbent = Some(Solution { x: x0.clone(), dropped: dropped0.clone(), recourse, objective });
            }
        }

        state.lb_history.push(state.lb);
        state.ub_history.push(state.ub);
        let record = IterationRecord {
            iteration,
            lb: state.lb,
            ub: state.ub,
            new_points,
            new_rays,
            integer_cuts: added_integer_cut as usize,
            master_seconds,
            sub_seconds,
            selection_hash: selection_hash(&dropped0),
        };
        observer(&record);
        log.push(record);

        if let Some(gap) = state.gap(config.lb_floor) {
            if gap <= config.opt_tol {
                return finish(SolveStatus::Optimal, state, pool, log, init_iterations);
            }
        }
        if new_points == 0 && new_rays == 0 && !added_integer_cut {
            let improved = state.ub_history.len() >= 2
                && state.ub < state.ub_history[state.ub_history.len() - 2] - 1e-12;
            if !improved {
                // No progress of any kind: bail out rather than loop forever.
                let gap = state.gap(config.lb_floor);
                return finish(SolveStatus::IterLimit { gap }, state, pool, log, init_iterations);
            }
        }
    }
    let gap = state.gap(config.lb_floor);
    finish(SolveStatus::IterLimit { gap }, state, pool, log, init_iterations)
}

/// Indicator-model feasibility probe with forced selections pinned.
fn feasibility_probe(
    inst: &CcmpInstance,
    classes: &[ScenarioClass],
    config: &BendersConfig,
    be: &dyn BackendPort,
) -> Result<bool, BendersError> {
    let mut built = build_indicator(inst, config.big_m);
    for (k, class) in classes.iter().enumerate() {
        let zc = built.varmap.z[k];
        match class {
            ScenarioClass::ForceDrop => built.mip.lp.bounds[zc] = (1.0, 1.0),
            ScenarioClass::ForceKeep => built.mip.lp.bounds[zc] = (0.0, 0.0),
            ScenarioClass::Regular => {}
        }
    }
    for c in built.mip.lp.objective.iter_mut() {
        *c = 0.0;
    }
    let res = be.solve_mip(&built.mip, SolveLimits::with_time(config.time_limit), config.master_gap)?;
    Ok(matches!(res.outcome, LpOutcome::Optimal { .. }))
}
