//! Problem and solution data model for chance-constrained two-stage programs
//! over a finite scenario set, with validation and solution evaluation.
//!
//! An instance asks for first-stage decisions `x` (subject to `A x >= b` and
//! per-variable kind/bounds), a selection of scenarios to drop (`z_k = 1`,
//! probability mass at most `epsilon`), and per-scenario recourse `y_k >= 0`
//! satisfying `G_k x + H_k y_k >= h_k` for every kept scenario. The objective
//! is the first-stage cost plus the probability-weighted recourse cost of the
//! kept scenarios.

use crate::lpkit::{
    solve_lp, solve_mip, LinearProgram, LpError, LpOutcome, MipProblem, ObjSense, Row, RowSense,
    SolveLimits, SparseMatrix, INF,
};
use std::collections::BTreeMap;
use thiserror::Error;

/// Constraint-satisfaction tolerance used across the model layer.
pub const ROW_TOL: f64 = 1e-7;
/// Probability-mass tolerance on the chance budget.
pub const MASS_TOL: f64 = 1e-9;
/// Integrality tolerance for first-stage variables.
pub const INT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    GeneralInteger,
}

/// Kind and bounds of one first-stage variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

impl VarSpec {
    pub fn continuous(lower: f64, upper: f64) -> Self {
        Self { kind: VarKind::Continuous, lower, upper }
    }

    pub fn binary() -> Self {
        Self { kind: VarKind::Binary, lower: 0.0, upper: 1.0 }
    }

    pub fn integer(lower: f64, upper: f64) -> Self {
        Self { kind: VarKind::GeneralInteger, lower, upper }
    }

    pub fn is_integral(&self) -> bool {
        matches!(self.kind, VarKind::Binary | VarKind::GeneralInteger)
    }
}

/// One scenario: its probability, constraint blocks, right-hand side and
/// recourse cost vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub prob: f64,
    /// Coefficients on the first-stage variables (`I2 x n`).
    pub first_stage: SparseMatrix,
    /// Coefficients on the recourse variables (`I2 x m`).
    pub recourse: SparseMatrix,
    /// Row right-hand sides (`I2`).
    pub rhs: Vec<f64>,
    /// Recourse cost vector (`m`).
    pub cost: Vec<f64>,
}

/// Full problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct CcmpInstance {
    /// First-stage cost vector (`n`).
    pub cost: Vec<f64>,
    /// First-stage constraint matrix (`I1 x n`), rows read as `>= rhs`.
    pub first_stage_rows: SparseMatrix,
    /// First-stage right-hand side (`I1`).
    pub first_stage_rhs: Vec<f64>,
    pub x_specs: Vec<VarSpec>,
    /// Recourse dimension `m` (per scenario).
    pub recourse_dim: usize,
    pub scenarios: Vec<Scenario>,
    /// Risk level: dropped probability mass must stay within it.
    pub epsilon: f64,
}

impl CcmpInstance {
    pub fn num_x(&self) -> usize {
        self.cost.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Scenario constraint row count (`I2`), taken from the first scenario.
    pub fn scenario_rows(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.rhs.len())
    }

    pub fn x_bounds(&self) -> Vec<(f64, f64)> {
        self.x_specs.iter().map(|s| (s.lower, s.upper)).collect()
    }

    pub fn x_integral(&self) -> Vec<bool> {
        self.x_specs.iter().map(VarSpec::is_integral).collect()
    }

    /// Probability mass of the dropped scenarios in `z`.
    pub fn dropped_mass(&self, dropped: &[bool]) -> f64 {
        self.scenarios
            .iter()
            .zip(dropped)
            .filter(|(_, &d)| d)
            .map(|(s, _)| s.prob)
            .sum()
    }

    /// Recourse right-hand side of scenario `k` at the point `x`.
    pub fn recourse_rhs(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let s = &self.scenarios[k];
        let gx = s.first_stage.mul_vec(x);
        s.rhs.iter().zip(gx).map(|(h, g)| h - g).collect()
    }
}

/// One validation finding, naming the offending field and index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn violation(field: &str, index: Option<usize>, message: String) -> Violation {
    Violation { field: field.to_string(), index, message }
}

/// Check every instance invariant; empty result means the instance is sound.
pub fn validate_instance(inst: &CcmpInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.num_x();
    if inst.x_specs.len() != n {
        out.push(violation("x_specs", None, format!("length {} != {}", inst.x_specs.len(), n)));
    }
    for (j, s) in inst.x_specs.iter().enumerate() {
        if s.lower.is_nan() || s.upper.is_nan() || s.lower > s.upper {
            out.push(violation("x_specs", Some(j), format!("bad bounds [{}, {}]", s.lower, s.upper)));
        }
        if s.kind == VarKind::Binary && (s.lower != 0.0 || s.upper != 1.0) {
            out.push(violation("x_specs", Some(j), "binary variable must have bounds [0, 1]".into()));
        }
    }
    if inst.cost.iter().any(|v| !v.is_finite()) {
        out.push(violation("cost", None, "non-finite entry".into()));
    }
    if inst.first_stage_rows.ncols != n {
        out.push(violation(
            "first_stage_rows",
            None,
            format!("{} columns, expected {n}", inst.first_stage_rows.ncols),
        ));
    }
    if inst.first_stage_rhs.len() != inst.first_stage_rows.nrows {
        out.push(violation(
            "first_stage_rhs",
            None,
            format!("length {} != {} rows", inst.first_stage_rhs.len(), inst.first_stage_rows.nrows),
        ));
    }
    if inst.scenarios.is_empty() {
        out.push(violation("scenarios", None, "at least one scenario required".into()));
    }
    if !(0.0..=1.0).contains(&inst.epsilon) {
        out.push(violation("epsilon", None, format!("{} outside [0, 1]", inst.epsilon)));
    }
    let i2 = inst.scenario_rows();
    let mut mass = 0.0;
    for (k, s) in inst.scenarios.iter().enumerate() {
        if !(s.prob > 0.0 && s.prob <= 1.0) {
            out.push(violation("scenario.prob", Some(k), format!("{} outside (0, 1]", s.prob)));
        }
        mass += s.prob;
        if s.rhs.len() != i2 || s.first_stage.nrows != i2 || s.recourse.nrows != i2 {
            out.push(violation("scenario", Some(k), format!("row count differs from {i2}")));
        }
        if s.first_stage.ncols != n {
            out.push(violation(
                "scenario.first_stage",
                Some(k),
                format!("{} columns, expected {n}", s.first_stage.ncols),
            ));
        }
        if s.recourse.ncols != inst.recourse_dim {
            out.push(violation(
                "scenario.recourse",
                Some(k),
                format!("{} columns, expected {}", s.recourse.ncols, inst.recourse_dim),
            ));
        }
        if s.cost.len() != inst.recourse_dim {
            out.push(violation(
                "scenario.cost",
                Some(k),
                format!("length {}, expected {}", s.cost.len(), inst.recourse_dim),
            ));
        }
        let finite = s.rhs.iter().all(|v| v.is_finite())
            && s.cost.iter().all(|v| v.is_finite())
            && s.first_stage.rows.iter().flatten().all(|e| e.1.is_finite())
            && s.recourse.rows.iter().flatten().all(|e| e.1.is_finite());
        if !finite {
            out.push(violation("scenario", Some(k), "non-finite coefficient".into()));
        }
    }
    if !inst.scenarios.is_empty() && (mass - 1.0).abs() > 1e-12 {
        out.push(violation("scenario.prob", None, format!("probabilities sum {mass}")));
    }
    out
}

/// Candidate solution: first stage, scenario selection, recourse for every
/// kept scenario, and the claimed objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `true` means the scenario is dropped (not enforced, no cost counted).
    pub dropped: Vec<bool>,
    /// Recourse vectors for kept scenarios, keyed by scenario index.
    pub recourse: BTreeMap<usize, Vec<f64>>,
    pub objective: f64,
}

/// Terminal status of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Optimal,
    Feasible { gap: f64 },
    Infeasible,
    Unbounded,
    TimeLimit { gap: Option<f64> },
    IterLimit { gap: Option<f64> },
}

impl SolveStatus {
    pub fn gap(&self) -> Option<f64> {
        match self {
            SolveStatus::Optimal => Some(0.0),
            SolveStatus::Feasible { gap } => Some(*gap),
            SolveStatus::TimeLimit { gap } | SolveStatus::IterLimit { gap } => *gap,
            _ => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible { .. })
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::Feasible { gap } => write!(f, "feasible(gap={gap:.3e})"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
            SolveStatus::Unbounded => write!(f, "unbounded"),
            SolveStatus::TimeLimit { .. } => write!(f, "time-limit"),
            SolveStatus::IterLimit { .. } => write!(f, "iter-limit"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    /// A scenario's recourse cost is unbounded below at the probed point;
    /// callers must preprocess such scenarios away first.
    #[error("recourse of scenario {0} is unbounded below")]
    UnboundedRecourse(usize),
    #[error(transparent)]
    Kernel(#[from] LpError),
}

/// Result of [`best_response_z`].
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Optimal drop pattern (`true` = dropped).
    pub dropped: Vec<bool>,
    /// Per-scenario optimal recourse cost at the probed `x`; infinite where
    /// the recourse is infeasible.
    pub recourse_costs: Vec<f64>,
    /// Probability-weighted recourse cost of the kept scenarios; infinite
    /// when the infeasible scenarios alone overflow the chance budget.
    pub expected_cost: f64,
}

/// Solve scenario `k`'s recourse at the point `x`: minimal cost, `None` if
/// infeasible, error if unbounded below.
pub fn recourse_value(inst: &CcmpInstance, k: usize, x: &[f64]) -> Result<Option<f64>, ModelError> {
    let s = &inst.scenarios[k];
    let rhs = inst.recourse_rhs(k, x);
    let m = inst.recourse_dim;
    if m == 0 {
        let ok = rhs.iter().all(|&r| r <= ROW_TOL * (1.0 + r.abs()));
        return Ok(if ok { Some(0.0) } else { None });
    }
    let rows: Vec<Row> = (0..s.recourse.nrows)
        .map(|i| Row { coeffs: s.recourse.row(i).to_vec(), sense: RowSense::Ge, rhs: rhs[i] })
        .collect();
    let lp = LinearProgram {
        sense: ObjSense::Minimize,
        objective: s.cost.clone(),
        rows,
        bounds: vec![(0.0, INF); m],
    };
    match solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { objective, .. } => Ok(Some(objective)),
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(ModelError::UnboundedRecourse(k)),
    }
}

/// For a fixed first stage, compute the optimal scenario selection: drop the
/// scenarios whose recourse is infeasible (forced) and then choose the rest to
/// minimize expected recourse cost within the chance budget. Equal
/// probabilities use a sort-and-drop shortcut (ties drop the lowest index
/// first); general probabilities solve the small knapsack exactly.
pub fn best_response_z(inst: &CcmpInstance, x0: &[f64]) -> Result<BestResponse, ModelError> {
    let kk = inst.num_scenarios();
    let mut costs = vec![0.0f64; kk];
    let mut forced = vec![false; kk];
    for k in 0..kk {
        match recourse_value(inst, k, x0)? {
            Some(v) => costs[k] = v,
            None => {
                costs[k] = INF;
                forced[k] = true;
            }
        }
    }
    let forced_mass: f64 = inst
        .scenarios
        .iter()
        .zip(&forced)
        .filter(|(_, &f)| f)
        .map(|(s, _)| s.prob)
        .sum();
    if forced_mass > inst.epsilon + MASS_TOL {
        return Ok(BestResponse { dropped: forced, recourse_costs: costs, expected_cost: INF });
    }

    let probs: Vec<f64> = inst.scenarios.iter().map(|s| s.prob).collect();
    let equal = probs.iter().all(|&p| (p - probs[0]).abs() <= 1e-12);
    let mut dropped = forced.clone();
    if equal {
        let budget = ((inst.epsilon + MASS_TOL) * kk as f64).floor() as usize;
        let slots = budget.saturating_sub(forced.iter().filter(|&&f| f).count());
        let mut order: Vec<usize> = (0..kk).filter(|&k| !forced[k]).collect();
        order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
        for &k in order.iter().take(slots) {
            dropped[k] = true;
        }
    } else {
        // Knapsack: maximize the probability-weighted cost of dropped
        // scenarios within the remaining budget.
        let free: Vec<usize> = (0..kk).filter(|&k| !forced[k]).collect();
        if !free.is_empty() {
            let lp = LinearProgram {
                sense: ObjSense::Maximize,
                objective: free.iter().map(|&k| probs[k] * costs[k]).collect(),
                rows: vec![Row {
                    coeffs: free.iter().enumerate().map(|(j, &k)| (j, probs[k])).collect(),
                    sense: RowSense::Le,
                    rhs: inst.epsilon + MASS_TOL - forced_mass,
                }],
                bounds: vec![(0.0, 1.0); free.len()],
            };
            let mip = MipProblem { lp, integral: vec![true; free.len()] };
            let res = solve_mip(&mip, SolveLimits::none(), 1e-9)?;
            if let LpOutcome::Optimal { primal, .. } = res.outcome {
                for (j, &k) in free.iter().enumerate() {
                    if primal[j] > 0.5 {
                        dropped[k] = true;
                    }
                }
            }
        }
    }

    let expected: f64 = (0..kk).filter(|&k| !dropped[k]).map(|k| probs[k] * costs[k]).sum();
    Ok(BestResponse { dropped, recourse_costs: costs, expected_cost: expected })
}

/// Recompute a solution's objective and check every feasibility invariant:
/// chance budget, kept-scenario rows, first-stage rows/bounds, integrality,
/// and agreement of the stored objective with the recomputed one.
pub fn evaluate_solution(inst: &CcmpInstance, sol: &Solution) -> (bool, f64) {
    let n = inst.num_x();
    let kk = inst.num_scenarios();
    let mut objective = 0.0;
    if sol.x.len() != n || sol.dropped.len() != kk {
        return (false, objective);
    }
    objective += inst.cost.iter().zip(&sol.x).map(|(c, x)| c * x).sum::<f64>();
    let mut feasible = inst.dropped_mass(&sol.dropped) <= inst.epsilon + MASS_TOL;

    for (j, spec) in inst.x_specs.iter().enumerate() {
        let x = sol.x[j];
        if x < spec.lower - ROW_TOL * (1.0 + spec.lower.abs())
            || x > spec.upper + ROW_TOL * (1.0 + spec.upper.abs())
        {
            feasible = false;
        }
        if spec.is_integral() && (x - x.round()).abs() > INT_TOL {
            feasible = false;
        }
    }
    let ax = inst.first_stage_rows.mul_vec(&sol.x);
    for (i, &b) in inst.first_stage_rhs.iter().enumerate() {
        if ax[i] < b - ROW_TOL * (1.0 + b.abs()) {
            feasible = false;
        }
    }

    for (k, s) in inst.scenarios.iter().enumerate() {
        if sol.dropped[k] {
            continue;
        }
        let y = match sol.recourse.get(&k) {
            Some(y) if y.len() == inst.recourse_dim => y,
            _ => {
                if inst.recourse_dim == 0 {
                    static EMPTY: Vec<f64> = Vec::new();
                    &EMPTY
                } else {
                    feasible = false;
                    continue;
                }
            }
        };
        if y.iter().any(|&v| v < -ROW_TOL) {
            feasible = false;
        }
        objective += s.prob * s.cost.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
        let gx = s.first_stage.mul_vec(&sol.x);
        let hy = s.recourse.mul_vec(y);
        for i in 0..s.rhs.len() {
            if gx[i] + hy[i] < s.rhs[i] - ROW_TOL * (1.0 + s.rhs[i].abs()) {
                feasible = false;
            }
        }
    }

    if (objective - sol.objective).abs() > 1e-6 * (1.0 + objective.abs()) {
        feasible = false;
    }
    (feasible, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::fixtures::{tiny1, tiny2};

    #[test]
    fn validate_accepts_tiny1() {
        assert!(validate_instance(&tiny1(0.5)).is_empty());
    }

    #[test]
    fn validate_reports_probability_sum() {
        let mut inst = tiny1(0.5);
        inst.scenarios[0].prob = 0.4;
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("probabilities sum 0.9"), "{}", v[0]);
    }

    #[test]
    fn validate_reports_dimension_mismatch() {
        let mut inst = tiny2(0.5);
        inst.scenarios[1].recourse.ncols = 3;
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.field == "scenario.recourse" && v.index == Some(1)), "{v:?}");
    }

    #[test]
    fn best_response_drops_expensive_scenario() {
        let inst = tiny2(0.5);
        let r = best_response_z(&inst, &[0.0]).unwrap();
        assert_eq!(r.dropped, vec![false, true]);
        assert_eq!(r.recourse_costs, vec![2.0, 4.0]);
        assert!((r.expected_cost - 1.0).abs() < 1e-9);
    }

    #[test]
    fn best_response_at_zero_risk_keeps_all() {
        let inst = tiny2(0.0);
        let r = best_response_z(&inst, &[0.0]).unwrap();
        assert_eq!(r.dropped, vec![false, false]);
        assert!((r.expected_cost - 3.0).abs() < 1e-9);
    }

    #[test]
    fn best_response_with_slack_recourse() {
        let inst = tiny2(0.5);
        let r = best_response_z(&inst, &[10.0]).unwrap();
        assert_eq!(r.recourse_costs, vec![0.0, 0.0]);
        assert!(r.expected_cost.abs() < 1e-9);
        assert!(inst.dropped_mass(&r.dropped) <= 0.5 + MASS_TOL);
    }

    // Brute-force oracle over every admissible drop pattern.
    fn enumerate_best(inst: &CcmpInstance, x0: &[f64]) -> f64 {
        let kk = inst.num_scenarios();
        let mut best = INF;
        'outer: for mask in 0..(1u32 << kk) {
            let dropped: Vec<bool> = (0..kk).map(|k| mask >> k & 1 == 1).collect();
            if inst.dropped_mass(&dropped) > inst.epsilon + MASS_TOL {
                continue;
            }
            let mut total = 0.0;
            for k in 0..kk {
                if dropped[k] {
                    continue;
                }
                match recourse_value(inst, k, x0).unwrap() {
                    Some(v) => total += inst.scenarios[k].prob * v,
                    None => continue 'outer,
                }
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn best_response_matches_enumeration() {
        for eps in [0.0, 0.25, 0.5, 0.75] {
            let inst = tiny2(eps);
            for x0 in [0.0, 1.0, 3.0, 10.0] {
                let r = best_response_z(&inst, &[x0]).unwrap();
                let brute = enumerate_best(&inst, &[x0]);
                assert!(
                    (r.expected_cost - brute).abs() <= 1e-9 * (1.0 + brute.abs()),
                    "eps={eps} x0={x0}: {} vs {brute}",
                    r.expected_cost
                );
            }
        }
    }

    #[test]
    fn unequal_probabilities_use_exact_selection() {
        let mut inst = tiny2(0.3);
        inst.scenarios[0].prob = 0.3;
        inst.scenarios[1].prob = 0.7;
        // Only scenario 0 fits in the budget even though scenario 1 costs more.
        let r = best_response_z(&inst, &[0.0]).unwrap();
        assert_eq!(r.dropped, vec![true, false]);
        assert!((r.expected_cost - 0.7 * 4.0).abs() < 1e-9);
    }

    #[test]
    fn evaluate_tiny1_accepts_valid_point() {
        let inst = tiny1(0.5);
        let sol = Solution {
            x: vec![4.0],
            dropped: vec![false, true],
            recourse: BTreeMap::new(),
            objective: 4.0,
        };
        assert_eq!(evaluate_solution(&inst, &sol), (true, 4.0));
    }

    #[test]
    fn evaluate_rejects_budget_overflow() {
        let inst = tiny1(0.25);
        let sol = Solution {
            x: vec![4.0],
            dropped: vec![false, true],
            recourse: BTreeMap::new(),
            objective: 4.0,
        };
        let (ok, _) = evaluate_solution(&inst, &sol);
        assert!(!ok);
    }

    #[test]
    fn evaluate_zero_risk_point() {
        let inst = tiny1(0.0);
        let sol = Solution {
            x: vec![6.0],
            dropped: vec![false, false],
            recourse: BTreeMap::new(),
            objective: 6.0,
        };
        assert_eq!(evaluate_solution(&inst, &sol), (true, 6.0));
    }

    #[test]
    fn objective_invariant_under_scenario_permutation() {
        let inst = tiny2(0.5);
        let mut permuted = inst.clone();
        permuted.scenarios.swap(0, 1);
        let sol = Solution {
            x: vec![1.0],
            dropped: vec![false, true],
            recourse: BTreeMap::from([(0, vec![1.0])]),
            objective: 1.0 + 0.5 * 1.0,
        };
        let sol_permuted = Solution {
            x: vec![1.0],
            dropped: vec![true, false],
            recourse: BTreeMap::from([(1, vec![1.0])]),
            objective: 1.0 + 0.5 * 1.0,
        };
        let (a_ok, a) = evaluate_solution(&inst, &sol);
        let (b_ok, b) = evaluate_solution(&permuted, &sol_permuted);
        assert!(a_ok && b_ok);
        assert!((a - b).abs() < 1e-12);
    }
}
