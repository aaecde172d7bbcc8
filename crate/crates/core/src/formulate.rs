//! Builders turning a [`CcmpInstance`] into deterministic-equivalent MIPs:
//! the indicator (big-M) family, the product-linearized scenario-selection
//! form, right-hand-side and recourse strengthenings, fixed-selection
//! extensive forms, and the exhaustive enumeration oracle used as ground
//! truth at desk scale.

use crate::lpkit::{
    solve_lp, solve_mip, LinearProgram, LpBuilder, LpError, LpOutcome, MipProblem, ObjSense, Row,
    RowSense, SolveLimits, INF,
};
use crate::model::{CcmpInstance, ModelError, Solution, SolveStatus, MASS_TOL};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default upper bound injected where a variable in a product has none.
pub const DEFAULT_LINEARIZATION_BOUND: f64 = 1e5;
/// Default big-M on indicator rows.
pub const DEFAULT_BIG_M: f64 = 1e5;
/// Default scenario cap of the enumeration oracle.
pub const ORACLE_SCENARIO_CAP: usize = 12;
/// Kernel-grade relative gap for oracle solves.
pub const ORACLE_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum FormulateError {
    #[error("no finite upper bound available for {0}")]
    MissingBound(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("row coefficient bound of scenario {scenario}, row {row} is unbounded below")]
    QStarUnbounded { scenario: usize, row: usize },
    #[error("drop pattern carries mass {mass} > epsilon {epsilon}")]
    ChanceViolated { mass: f64, epsilon: f64 },
    #[error("{0} scenarios exceed the enumeration cap")]
    TooManyScenarios(usize),
    #[error(transparent)]
    Kernel(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Name-to-column map of a built formulation.
#[derive(Debug, Clone, Default)]
pub struct VariableMap {
    pub x: Vec<usize>,
    /// Scenario drop indicators; empty when the selection is fixed.
    pub z: Vec<usize>,
    /// Recourse columns per scenario, present where the formulation has them.
    pub y: Vec<Option<Vec<usize>>>,
    /// Scenario cost variables, where present.
    pub eta: Vec<Option<usize>>,
    /// Product columns for (x column, scenario).
    pub x_products: BTreeMap<(usize, usize), usize>,
    /// Product columns for (recourse component, scenario).
    pub y_products: BTreeMap<(usize, usize), usize>,
    /// Additional named columns (aggregation blocks and the like).
    pub extra: BTreeMap<String, usize>,
    pub names: Vec<String>,
}

impl VariableMap {
    /// Every mapped column exists and no column is mapped twice.
    pub fn is_injective(&self, num_cols: usize) -> bool {
        let mut seen = vec![false; num_cols];
        let mut mark = |c: usize| -> bool {
            if c >= num_cols || seen[c] {
                return false;
            }
            seen[c] = true;
            true
        };
        self.x.iter().all(|&c| mark(c))
            && self.z.iter().all(|&c| mark(c))
            && self.y.iter().flatten().flatten().all(|&c| mark(c))
            && self.eta.iter().flatten().all(|&c| mark(c))
            && self.x_products.values().all(|&c| mark(c))
            && self.y_products.values().all(|&c| mark(c))
            && self.extra.values().all(|&c| mark(c))
    }
}

/// Which deterministic-equivalent was built.
#[derive(Debug, Clone, PartialEq)]
pub enum FormulationKind {
    Indicator { m_value: f64 },
    /// Product-linearized scenario-selection formulation.
    BilinearLinearized,
    StrengthenedRhs { variant: RhsVariant },
    StrengthenedRecourse,
    FixedSelection { dropped: Vec<bool> },
    /// Decomposition master (cuts over x, z, eta).
    Master,
}

/// Right-hand-side strengthening flavor: `Dominant` subtracts the
/// component-wise minimum rhs from the indicator coefficient, `Plain` keeps
/// the scenario rhs itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsVariant {
    Dominant,
    Plain,
}

/// A built problem plus the bookkeeping to read solutions back.
#[derive(Debug, Clone)]
pub struct BuiltFormulation {
    pub mip: MipProblem,
    pub varmap: VariableMap,
    pub kind: FormulationKind,
    /// Provenance of injected coefficients (M, bounds, rhs shifts).
    pub notes: Vec<String>,
}

impl BuiltFormulation {
    /// Append a column to an already built formulation.
    pub(crate) fn push_col(&mut self, name: String, lo: f64, hi: f64, obj: f64, integral: bool) -> usize {
        let lp = &mut self.mip.lp;
        lp.objective.push(obj);
        lp.bounds.push((lo, hi));
        self.mip.integral.push(integral);
        self.varmap.names.push(name);
        lp.objective.len() - 1
    }

    /// Append a row; returns its index.
    pub(crate) fn push_row(&mut self, sense: RowSense, rhs: f64, coeffs: Vec<(usize, f64)>) -> usize {
        self.mip.lp.rows.push(Row { coeffs, sense, rhs });
        self.mip.lp.rows.len() - 1
    }

    /// Append the four-row product linearization `lam = v * ind`.
    pub(crate) fn push_product(&mut self, name: String, v_col: usize, ind_col: usize, u: f64) -> usize {
        let lam = self.push_col(name, 0.0, u, 0.0, false);
        self.push_row(RowSense::Ge, 0.0, vec![(v_col, 1.0), (lam, -1.0)]);
        self.push_row(RowSense::Ge, 0.0, vec![(ind_col, u), (lam, -1.0)]);
        self.push_row(RowSense::Ge, -u, vec![(lam, 1.0), (v_col, -1.0), (ind_col, -u)]);
        lam
    }

    /// Read a kernel solution back into model terms. The objective is
    /// recomputed from model semantics (first-stage cost plus weighted kept
    /// recourse cost); recourse vectors missing from the formulation are
    /// obtained by per-scenario solves at the extracted first stage.
    pub fn extract_solution(&self, inst: &CcmpInstance, primal: &[f64]) -> Result<Solution, FormulateError> {
        let x: Vec<f64> = self.varmap.x.iter().map(|&c| primal[c]).collect();
        let dropped: Vec<bool> = match &self.kind {
            FormulationKind::FixedSelection { dropped } => dropped.clone(),
            _ => self.varmap.z.iter().map(|&c| primal[c] > 0.5).collect(),
        };
        let mut recourse = BTreeMap::new();
        let mut objective: f64 = inst.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        for (k, s) in inst.scenarios.iter().enumerate() {
            if *dropped.get(k).unwrap_or(&false) {
                continue;
            }
            if inst.recourse_dim == 0 {
                continue;
            }
            let y: Vec<f64> = match self.varmap.y.get(k).and_then(|o| o.as_ref()) {
                Some(cols) => cols.iter().map(|&c| primal[c]).collect(),
                None => {
                    // Formulation has no recourse columns (e.g. master): solve.
                    let rhs = inst.recourse_rhs(k, &x);
                    let rows: Vec<Row> = (0..s.recourse.nrows)
                        .map(|i| Row { coeffs: s.recourse.row(i).to_vec(), sense: RowSense::Ge, rhs: rhs[i] })
                        .collect();
                    let lp = LinearProgram {
                        sense: ObjSense::Minimize,
                        objective: s.cost.clone(),
                        rows,
                        bounds: vec![(0.0, INF); inst.recourse_dim],
                    };
                    match solve_lp(&lp, SolveLimits::none())? {
                        LpOutcome::Optimal { primal, .. } => primal,
                        _ => {
                            return Err(FormulateError::PreconditionViolated(format!(
                                "kept scenario {k} has no feasible recourse at the extracted point"
                            )))
                        }
                    }
                }
            };
            objective += s.prob * s.cost.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>();
            recourse.insert(k, y);
        }
        Ok(Solution { x, dropped, recourse, objective })
    }
}

/// Upper bounds used to linearize products. Per-variable bounds are
/// preferred whenever finite; the fallback fills the rest.
#[derive(Debug, Clone)]
pub struct LinearizationBounds {
    pub fallback: f64,
    /// Optional per-x-column overrides (applied before the fallback).
    pub x_override: Option<Vec<f64>>,
    /// Optional per-recourse-component overrides.
    pub y_override: Option<Vec<f64>>,
}

impl Default for LinearizationBounds {
    fn default() -> Self {
        Self { fallback: DEFAULT_LINEARIZATION_BOUND, x_override: None, y_override: None }
    }
}

impl LinearizationBounds {
    pub fn with_fallback(fallback: f64) -> Self {
        Self { fallback, ..Self::default() }
    }

    pub fn x_bound(&self, inst: &CcmpInstance, j: usize) -> Result<f64, FormulateError> {
        let spec = &inst.x_specs[j];
        if spec.lower < 0.0 {
            return Err(FormulateError::PreconditionViolated(format!(
                "x{j} has negative lower bound {}; products need nonnegative variables",
                spec.lower
            )));
        }
        let b = if spec.upper.is_finite() {
            spec.upper
        } else if let Some(o) = self.x_override.as_ref().and_then(|v| v.get(j)) {
            *o
        } else {
            self.fallback
        };
        if b.is_finite() {
            Ok(b)
        } else {
            Err(FormulateError::MissingBound(format!("x{j}")))
        }
    }

    pub fn y_bound(&self, i: usize) -> Result<f64, FormulateError> {
        let b = match self.y_override.as_ref().and_then(|v| v.get(i)) {
            Some(o) => *o,
            None => self.fallback,
        };
        if b.is_finite() {
            Ok(b)
        } else {
            Err(FormulateError::MissingBound(format!("y{i}")))
        }
    }
}

/// Append the four product rows tying `lam = v * ind` for `v` in `[0, u]`
/// and binary `ind`, and return the product column.
pub fn add_product_column(
    b: &mut LpBuilder,
    name: String,
    v_col: usize,
    ind_col: usize,
    u: f64,
) -> usize {
    let lam = b.add_col(name, 0.0, u, 0.0, false);
    b.add_row(RowSense::Ge, 0.0, vec![(v_col, 1.0), (lam, -1.0)]);
    b.add_row(RowSense::Ge, 0.0, vec![(ind_col, u), (lam, -1.0)]);
    b.add_row(RowSense::Ge, -u, vec![(lam, 1.0), (v_col, -1.0), (ind_col, -u)]);
    lam
}

fn add_first_stage(b: &mut LpBuilder, inst: &CcmpInstance, vm: &mut VariableMap) {
    for (j, spec) in inst.x_specs.iter().enumerate() {
        let col = b.add_col(format!("x{j}"), spec.lower, spec.upper, inst.cost[j], spec.is_integral());
        vm.x.push(col);
    }
    for (i, row) in inst.first_stage_rows.rows.iter().enumerate() {
        let coeffs = row.iter().map(|&(c, v)| (vm.x[c], v)).collect();
        b.add_row(RowSense::Ge, inst.first_stage_rhs[i], coeffs);
    }
}

fn add_selection(b: &mut LpBuilder, inst: &CcmpInstance, vm: &mut VariableMap) {
    for k in 0..inst.num_scenarios() {
        vm.z.push(b.add_col(format!("z{k}"), 0.0, 1.0, 0.0, true));
    }
    let coeffs = vm.z.iter().enumerate().map(|(k, &c)| (c, inst.scenarios[k].prob)).collect();
    b.add_row(RowSense::Le, inst.epsilon, coeffs);
}

fn finish(b: LpBuilder, mut vm: VariableMap, kind: FormulationKind, notes: Vec<String>) -> BuiltFormulation {
    let (mip, names) = b.build();
    vm.names = names;
    debug_assert!(vm.is_injective(mip.lp.num_vars()));
    BuiltFormulation { mip, varmap: vm, kind, notes }
}

/// Indicator formulation: scenario rows relaxed by `m_value * z_k`, recourse
/// cost charged on all scenarios. `m_value = 0` collapses to the
/// all-scenarios-kept expected-cost model; small positive values give a
/// restriction of the chance-constrained problem.
pub fn build_indicator(inst: &CcmpInstance, m_value: f64) -> BuiltFormulation {
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();
    add_first_stage(&mut b, inst, &mut vm);
    for (k, s) in inst.scenarios.iter().enumerate() {
        let cols: Vec<usize> = (0..inst.recourse_dim)
            .map(|i| b.add_col(format!("y{k}_{i}"), 0.0, INF, s.prob * s.cost[i], false))
            .collect();
        vm.y.push(Some(cols));
        vm.eta.push(None);
    }
    add_selection(&mut b, inst, &mut vm);
    for (k, s) in inst.scenarios.iter().enumerate() {
        for (r, &rhs) in s.rhs.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> =
                s.first_stage.row(r).iter().map(|&(c, v)| (vm.x[c], v)).collect();
            for &(c, v) in s.recourse.row(r) {
                coeffs.push((vm.y[k].as_ref().unwrap()[c], v));
            }
            if m_value != 0.0 {
                coeffs.push((vm.z[k], m_value));
            }
            b.add_row(RowSense::Ge, rhs, coeffs);
        }
    }
    finish(b, vm, FormulationKind::Indicator { m_value }, vec![format!("indicator M = {m_value}")])
}

/// Product-linearized scenario-selection formulation: every scenario row and
/// its cost are multiplied by the keep indicator `(1 - z_k)` and the products
/// `x_j z_k`, `y_i z_k` are replaced by linearized columns.
pub fn build_mibp_mccormick(
    inst: &CcmpInstance,
    bounds: &LinearizationBounds,
) -> Result<BuiltFormulation, FormulateError> {
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();
    let mut notes = Vec::new();
    add_first_stage(&mut b, inst, &mut vm);
    // Tighten x bounds to the linearization bound where needed.
    let g_cols_by_k: Vec<Vec<usize>> = inst
        .scenarios
        .iter()
        .map(|s| {
            let mut cols: Vec<usize> = s.first_stage.rows.iter().flatten().map(|e| e.0).collect();
            cols.sort_unstable();
            cols.dedup();
            cols
        })
        .collect();
    let mut x_bounds = vec![0.0; inst.num_x()];
    for j in 0..inst.num_x() {
        if g_cols_by_k.iter().any(|cols| cols.binary_search(&j).is_ok()) {
            let u = bounds.x_bound(inst, j)?;
            x_bounds[j] = u;
            if !inst.x_specs[j].upper.is_finite() || u < inst.x_specs[j].upper {
                b.set_bounds(vm.x[j], inst.x_specs[j].lower, u);
                notes.push(format!("x{j} capped at {u} for linearization"));
            }
        }
    }

    for (k, s) in inst.scenarios.iter().enumerate() {
        let ycols: Vec<usize> = (0..inst.recourse_dim)
            .map(|i| b.add_col(format!("y{k}_{i}"), 0.0, INF, 0.0, false))
            .collect();
        vm.y.push(Some(ycols));
        let eta = b.add_col(format!("eta{k}"), -INF, INF, s.prob, false);
        vm.eta.push(Some(eta));
    }
    add_selection(&mut b, inst, &mut vm);

    for (k, s) in inst.scenarios.iter().enumerate() {
        // Products for the first-stage columns this scenario touches.
        for &j in &g_cols_by_k[k] {
            let lam = add_product_column(&mut b, format!("xz{j}_{k}"), vm.x[j], vm.z[k], x_bounds[j]);
            vm.x_products.insert((j, k), lam);
        }
        // Products for recourse components with a row or cost coefficient.
        let mut y_used: Vec<bool> = vec![false; inst.recourse_dim];
        for row in &s.recourse.rows {
            for &(c, _) in row {
                y_used[c] = true;
            }
        }
        for (i, &f) in s.cost.iter().enumerate() {
            if f != 0.0 {
                y_used[i] = true;
            }
        }
        let ycols = vm.y[k].clone().unwrap();
        for (i, used) in y_used.iter().enumerate() {
            if !used {
                continue;
            }
            let u = bounds.y_bound(i)?;
            b.set_bounds(ycols[i], 0.0, u);
            let lam = add_product_column(&mut b, format!("yz{k}_{i}"), ycols[i], vm.z[k], u);
            vm.y_products.insert((i, k), lam);
        }
        // Scenario rows with the keep indicator multiplied through.
        for (r, &rhs) in s.rhs.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for &(c, v) in s.first_stage.row(r) {
                coeffs.push((vm.x[c], v));
                coeffs.push((vm.x_products[&(c, k)], -v));
            }
            for &(c, v) in s.recourse.row(r) {
                coeffs.push((ycols[c], v));
                coeffs.push((vm.y_products[&(c, k)], -v));
            }
            coeffs.push((vm.z[k], rhs));
            b.add_row(RowSense::Ge, rhs, coeffs);
        }
        // eta_k equals the kept-scenario recourse cost.
        let mut coeffs = vec![(vm.eta[k].unwrap(), 1.0)];
        for (i, &f) in s.cost.iter().enumerate() {
            if f != 0.0 {
                coeffs.push((ycols[i], -f));
                coeffs.push((vm.y_products[&(i, k)], f));
            }
        }
        b.add_row(RowSense::Eq, 0.0, coeffs);
    }
    notes.push(format!("linearization fallback bound = {}", bounds.fallback));
    Ok(finish(b, vm, FormulationKind::BilinearLinearized, notes))
}

/// No-recourse strengthening of the indicator coefficients. Requires a
/// common first-stage block across scenarios and nonnegative scenario rhs.
pub fn build_strengthened_rhs(
    inst: &CcmpInstance,
    variant: RhsVariant,
) -> Result<BuiltFormulation, FormulateError> {
    if inst.recourse_dim != 0 {
        return Err(FormulateError::PreconditionViolated("recourse dimension must be zero".into()));
    }
    let first = &inst.scenarios[0].first_stage;
    for (k, s) in inst.scenarios.iter().enumerate() {
        if !s.first_stage.approx_eq(first, 1e-12) {
            return Err(FormulateError::PreconditionViolated(format!(
                "scenario {k} first-stage block differs"
            )));
        }
        if let Some(i) = s.rhs.iter().position(|&h| h < 0.0) {
            return Err(FormulateError::PreconditionViolated(format!(
                "scenario {k} rhs[{i}] = {} is negative",
                s.rhs[i]
            )));
        }
    }
    let i2 = inst.scenario_rows();
    let min_rhs: Vec<f64> = (0..i2)
        .map(|r| inst.scenarios.iter().map(|s| s.rhs[r]).fold(INF, f64::min))
        .collect();
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();
    add_first_stage(&mut b, inst, &mut vm);
    for _ in 0..inst.num_scenarios() {
        vm.y.push(None);
        vm.eta.push(None);
    }
    add_selection(&mut b, inst, &mut vm);
    for (k, s) in inst.scenarios.iter().enumerate() {
        for (r, &rhs) in s.rhs.iter().enumerate() {
            let coef = match variant {
                RhsVariant::Dominant => rhs - min_rhs[r],
                RhsVariant::Plain => rhs,
            };
            let mut coeffs: Vec<(usize, f64)> =
                s.first_stage.row(r).iter().map(|&(c, v)| (vm.x[c], v)).collect();
            if coef != 0.0 {
                coeffs.push((vm.z[k], coef));
            }
            b.add_row(RowSense::Ge, rhs, coeffs);
        }
    }
    let notes = vec![format!("variant {variant:?}, row minima {min_rhs:?}")];
    Ok(finish(b, vm, FormulationKind::StrengthenedRhs { variant }, notes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QStarMode {
    ExactMip,
    LpRelax,
}

/// Per-(scenario, row) minimum of the first-stage row activity over the
/// first-stage feasible set; the relaxation drops integrality and yields
/// (weakly) smaller, still valid values.
pub fn compute_q_star(inst: &CcmpInstance, mode: QStarMode) -> Result<Vec<Vec<f64>>, FormulateError> {
    let n = inst.num_x();
    let rows: Vec<Row> = inst
        .first_stage_rows
        .rows
        .iter()
        .zip(&inst.first_stage_rhs)
        .map(|(r, &rhs)| Row { coeffs: r.clone(), sense: RowSense::Ge, rhs })
        .collect();
    let bounds = inst.x_bounds();
    let integral = inst.x_integral();
    let mut out = Vec::with_capacity(inst.num_scenarios());
    for (k, s) in inst.scenarios.iter().enumerate() {
        let mut per_row = Vec::with_capacity(s.rhs.len());
        for r in 0..s.rhs.len() {
            let mut objective = vec![0.0; n];
            for &(c, v) in s.first_stage.row(r) {
                objective[c] = v;
            }
            let lp = LinearProgram {
                sense: ObjSense::Minimize,
                objective,
                rows: rows.clone(),
                bounds: bounds.clone(),
            };
            let value = match mode {
                QStarMode::LpRelax => match solve_lp(&lp, SolveLimits::none())? {
                    LpOutcome::Optimal { objective, .. } => objective,
                    LpOutcome::Unbounded { .. } => {
                        return Err(FormulateError::QStarUnbounded { scenario: k, row: r })
                    }
                    LpOutcome::Infeasible { .. } => {
                        return Err(FormulateError::PreconditionViolated(
                            "first-stage feasible set is empty".into(),
                        ))
                    }
                },
                QStarMode::ExactMip => {
                    let mip = MipProblem { lp, integral: integral.clone() };
                    let res = solve_mip(&mip, SolveLimits::none(), ORACLE_GAP)?;
                    match res.outcome {
                        LpOutcome::Optimal { objective, .. } => objective,
                        LpOutcome::Unbounded { .. } => {
                            return Err(FormulateError::QStarUnbounded { scenario: k, row: r })
                        }
                        LpOutcome::Infeasible { .. } => {
                            return Err(FormulateError::PreconditionViolated(
                                "first-stage feasible set is empty".into(),
                            ))
                        }
                    }
                }
            };
            per_row.push(value);
        }
        out.push(per_row);
    }
    Ok(out)
}

/// Recourse-aware strengthening: scenario rows relaxed by
/// `(rhs - qstar) * z_k` instead of a big M. Requires nonnegative recourse
/// costs and finite `qstar`.
pub fn build_strengthened_recourse(
    inst: &CcmpInstance,
    qstar: &[Vec<f64>],
) -> Result<BuiltFormulation, FormulateError> {
    for (k, s) in inst.scenarios.iter().enumerate() {
        if let Some(i) = s.cost.iter().position(|&f| f < 0.0) {
            return Err(FormulateError::PreconditionViolated(format!(
                "scenario {k} recourse cost[{i}] is negative"
            )));
        }
        if qstar[k].iter().any(|v| !v.is_finite()) {
            return Err(FormulateError::PreconditionViolated(format!(
                "scenario {k} has a non-finite row bound"
            )));
        }
    }
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();
    add_first_stage(&mut b, inst, &mut vm);
    for (k, s) in inst.scenarios.iter().enumerate() {
        let cols: Vec<usize> = (0..inst.recourse_dim)
            .map(|i| b.add_col(format!("y{k}_{i}"), 0.0, INF, s.prob * s.cost[i], false))
            .collect();
        vm.y.push(Some(cols));
        vm.eta.push(None);
    }
    add_selection(&mut b, inst, &mut vm);
    for (k, s) in inst.scenarios.iter().enumerate() {
        for (r, &rhs) in s.rhs.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> =
                s.first_stage.row(r).iter().map(|&(c, v)| (vm.x[c], v)).collect();
            for &(c, v) in s.recourse.row(r) {
                coeffs.push((vm.y[k].as_ref().unwrap()[c], v));
            }
            let coef = rhs - qstar[k][r];
            if coef != 0.0 {
                coeffs.push((vm.z[k], coef));
            }
            b.add_row(RowSense::Ge, rhs, coeffs);
        }
    }
    Ok(finish(
        b,
        vm,
        FormulationKind::StrengthenedRecourse,
        vec!["indicator coefficients rhs - qstar".into()],
    ))
}

/// Extensive form with the drop pattern fixed: only kept scenarios appear.
/// With `fix_x` the first stage is pinned (integer components rounded) and
/// the problem separates into per-scenario recourse solves.
pub fn build_fixed_z(
    inst: &CcmpInstance,
    dropped: &[bool],
    fix_x: Option<&[f64]>,
) -> Result<BuiltFormulation, FormulateError> {
    let mass = inst.dropped_mass(dropped);
    if mass > inst.epsilon + MASS_TOL {
        return Err(FormulateError::ChanceViolated { mass, epsilon: inst.epsilon });
    }
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();
    add_first_stage(&mut b, inst, &mut vm);
    if let Some(x0) = fix_x {
        for (j, spec) in inst.x_specs.iter().enumerate() {
            let v = if spec.is_integral() { x0[j].round() } else { x0[j] };
            b.set_bounds(vm.x[j], v, v);
        }
    }
    for (k, s) in inst.scenarios.iter().enumerate() {
        if dropped[k] {
            vm.y.push(None);
            vm.eta.push(None);
            continue;
        }
        let cols: Vec<usize> = (0..inst.recourse_dim)
            .map(|i| b.add_col(format!("y{k}_{i}"), 0.0, INF, s.prob * s.cost[i], false))
            .collect();
        for (r, &rhs) in s.rhs.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> =
                s.first_stage.row(r).iter().map(|&(c, v)| (vm.x[c], v)).collect();
            for &(c, v) in s.recourse.row(r) {
                coeffs.push((cols[c], v));
            }
            b.add_row(RowSense::Ge, rhs, coeffs);
        }
        vm.y.push(Some(cols));
        vm.eta.push(None);
    }
    Ok(finish(b, vm, FormulationKind::FixedSelection { dropped: dropped.to_vec() }, Vec::new()))
}

/// Result of the enumeration oracle.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub dropped: Option<Vec<bool>>,
    pub solution: Option<Solution>,
}

/// Ground truth by exhaustion: solve the extensive form for every admissible
/// drop pattern (kernel-grade gap) and keep the best. Infeasible only when
/// every pattern is; an unbounded pattern propagates immediately.
pub fn oracle_solve(inst: &CcmpInstance, scenario_cap: usize) -> Result<OracleResult, FormulateError> {
    let kk = inst.num_scenarios();
    if kk > scenario_cap.min(63) {
        return Err(FormulateError::TooManyScenarios(kk));
    }
    let mut best: Option<(f64, Vec<bool>, Solution)> = None;
    for mask in 0u64..(1u64 << kk) {
        let dropped: Vec<bool> = (0..kk).map(|k| mask >> k & 1 == 1).collect();
        if inst.dropped_mass(&dropped) > inst.epsilon + MASS_TOL {
            continue;
        }
        let built = build_fixed_z(inst, &dropped, None)?;
        let res = solve_mip(&built.mip, SolveLimits::none(), ORACLE_GAP)?;
        match res.outcome {
            LpOutcome::Optimal { primal, objective, .. } => {
                if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
                    let sol = built.extract_solution(inst, &primal)?;
                    best = Some((objective, dropped, sol));
                }
            }
            LpOutcome::Infeasible { .. } => {}
            LpOutcome::Unbounded { .. } => {
                return Ok(OracleResult {
                    status: SolveStatus::Unbounded,
                    objective: None,
                    dropped: Some(dropped),
                    solution: None,
                })
            }
        }
    }
    Ok(match best {
        Some((obj, dropped, sol)) => OracleResult {
            status: SolveStatus::Optimal,
            objective: Some(obj),
            dropped: Some(dropped),
            solution: Some(sol),
        },
        None => OracleResult { status: SolveStatus::Infeasible, objective: None, dropped: None, solution: None },
    })
}

#[cfg(test)]
mod tests;
