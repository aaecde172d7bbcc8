//! Aggregation (Jensen-type) lower bounds on the expected recourse cost of
//! kept scenarios, and the master-problem blocks built from them.
//!
//! All of it requires the recourse block and cost vector to be shared across
//! scenarios. The plain bound aggregates every scenario's right-hand side;
//! the selection-aware bound lets the aggregation drop scenarios within the
//! chance budget; the conditional-mean variant relaxes the latter into a
//! single linear system when probabilities are equal and the first-stage
//! block is shared too.

use crate::formulate::{BuiltFormulation, FormulateError, LinearizationBounds};
use crate::lpkit::{
    solve_lp, solve_mip, LinearProgram, LpBuilder, LpError, LpOutcome, ObjSense, Row, RowSense,
    SolveLimits, INF,
};
use crate::model::CcmpInstance;
use thiserror::Error;

const EQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum JensenError {
    #[error("applicability failed: {0}")]
    ApplicabilityFailed(String),
    #[error("no finite bound for {0}")]
    MissingBound(String),
    #[error(transparent)]
    Kernel(#[from] LpError),
    #[error(transparent)]
    Formulate(#[from] FormulateError),
}

/// Which structure the instance shares across scenarios, and the number of
/// scenarios the chance budget allows to drop under equal probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JensenApplicability {
    pub h_common: bool,
    pub f_common: bool,
    pub g_common: bool,
    pub equal_prob: bool,
    /// Largest drop count within the budget; only present with `equal_prob`.
    pub drop_count: Option<usize>,
}

impl JensenApplicability {
    pub fn analyze(inst: &CcmpInstance) -> Self {
        let first = &inst.scenarios[0];
        let h_common = inst.scenarios.iter().all(|s| s.recourse.approx_eq(&first.recourse, EQ_TOL));
        let f_common = inst.scenarios.iter().all(|s| {
            s.cost.len() == first.cost.len()
                && s.cost.iter().zip(&first.cost).all(|(a, b)| (a - b).abs() <= EQ_TOL)
        });
        let g_common =
            inst.scenarios.iter().all(|s| s.first_stage.approx_eq(&first.first_stage, EQ_TOL));
        let kk = inst.num_scenarios();
        let equal_prob =
            inst.scenarios.iter().all(|s| (s.prob - 1.0 / kk as f64).abs() <= EQ_TOL);
        let drop_count = equal_prob.then(|| {
            (((inst.epsilon + 1e-9) * kk as f64).floor() as usize).min(kk)
        });
        Self { h_common, f_common, g_common, equal_prob, drop_count }
    }

    pub fn all(&self) -> bool {
        self.h_common && self.f_common && self.g_common && self.equal_prob
    }

    fn need(&self, what: &str, ok: bool) -> Result<(), JensenError> {
        if ok {
            Ok(())
        } else {
            Err(JensenError::ApplicabilityFailed(what.to_string()))
        }
    }
}

fn drop_count_for(inst: &CcmpInstance, epsilon: f64) -> usize {
    let kk = inst.num_scenarios();
    (((epsilon + 1e-9) * kk as f64).floor() as usize).min(kk)
}

/// All-scenarios aggregation bound at a fixed first stage: the optimal value
/// of the recourse system aggregated with the scenario probabilities. A
/// lower bound on the expected recourse cost when every scenario is kept;
/// infinite when even the aggregate is infeasible.
pub fn jensen_bound_sp(inst: &CcmpInstance, x0: &[f64]) -> Result<f64, JensenError> {
    let app = JensenApplicability::analyze(inst);
    app.need("common recourse block", app.h_common)?;
    app.need("common recourse cost", app.f_common)?;
    let i2 = inst.scenario_rows();
    let mut agg = vec![0.0; i2];
    for (k, s) in inst.scenarios.iter().enumerate() {
        let r = inst.recourse_rhs(k, x0);
        for i in 0..i2 {
            agg[i] += s.prob * r[i];
        }
    }
    let shared = &inst.scenarios[0];
    let rows: Vec<Row> = (0..i2)
        .map(|i| Row { coeffs: shared.recourse.row(i).to_vec(), sense: RowSense::Ge, rhs: agg[i] })
        .collect();
    let lp = LinearProgram {
        sense: ObjSense::Minimize,
        objective: shared.cost.clone(),
        rows,
        bounds: vec![(0.0, INF); inst.recourse_dim],
    };
    Ok(match solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { objective, .. } => objective,
        LpOutcome::Infeasible { .. } => INF,
        LpOutcome::Unbounded { .. } => -INF,
    })
}

/// Selection-aware aggregation bound at a fixed first stage: both the
/// aggregation weights and the aggregate cost shrink with the dropped mass,
/// the drop pattern ranging over the chance budget. Solved as a MIP with
/// product columns `w_jk = y_j z_k` capped at `u_y`.
pub fn jensen_bound_ccmp(inst: &CcmpInstance, x0: &[f64], u_y: f64) -> Result<f64, JensenError> {
    let app = JensenApplicability::analyze(inst);
    app.need("common recourse block", app.h_common)?;
    app.need("common recourse cost", app.f_common)?;
    if !u_y.is_finite() {
        return Err(JensenError::MissingBound("aggregate recourse".into()));
    }
    let shared = &inst.scenarios[0];
    let m = inst.recourse_dim;
    let i2 = inst.scenario_rows();
    let kk = inst.num_scenarios();
    let rhs_by_k: Vec<Vec<f64>> = (0..kk).map(|k| inst.recourse_rhs(k, x0)).collect();

    let mut b = LpBuilder::new(ObjSense::Minimize);
    let y: Vec<usize> = (0..m).map(|j| b.add_col(format!("ybar{j}"), 0.0, u_y, shared.cost[j], false)).collect();
    let z: Vec<usize> = (0..kk).map(|k| b.add_col(format!("z{k}"), 0.0, 1.0, 0.0, true)).collect();
    let mut w = vec![vec![0usize; m]; kk];
    for k in 0..kk {
        let pk = inst.scenarios[k].prob;
        for j in 0..m {
            let lam = crate::formulate::add_product_column(&mut b, format!("w{j}_{k}"), y[j], z[k], u_y);
            b.set_objective(lam, -pk * shared.cost[j]);
            w[k][j] = lam;
        }
    }
    b.add_row(
        RowSense::Le,
        inst.epsilon,
        z.iter().enumerate().map(|(k, &c)| (c, inst.scenarios[k].prob)).collect(),
    );
    for i in 0..i2 {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        let mut rhs = 0.0;
        for &(j, v) in shared.recourse.row(i) {
            coeffs.push((y[j], v));
            for k in 0..kk {
                coeffs.push((w[k][j], -inst.scenarios[k].prob * v));
            }
        }
        for k in 0..kk {
            let pk = inst.scenarios[k].prob;
            rhs += pk * rhs_by_k[k][i];
            coeffs.push((z[k], pk * rhs_by_k[k][i]));
        }
        b.add_row(RowSense::Ge, rhs, coeffs);
    }
    let (mip, _) = b.build();
    let res = solve_mip(&mip, SolveLimits::none(), 1e-9)?;
    Ok(match res.outcome {
        LpOutcome::Optimal { objective, .. } => objective,
        LpOutcome::Infeasible { .. } => INF,
        LpOutcome::Unbounded { .. } => -INF,
    })
}

/// Per-component mean of the smallest `K - L` scenario rhs values, where `L`
/// is the drop allowance. Requires equal probabilities.
pub fn conditional_mean_rhs(inst: &CcmpInstance, epsilon: f64) -> Result<Vec<f64>, JensenError> {
    let app = JensenApplicability::analyze(inst);
    app.need("equal probabilities", app.equal_prob)?;
    let kk = inst.num_scenarios();
    let drop = drop_count_for(inst, epsilon);
    if drop >= kk {
        return Err(JensenError::ApplicabilityFailed("chance budget drops every scenario".into()));
    }
    let keep = kk - drop;
    let i2 = inst.scenario_rows();
    let mut out = Vec::with_capacity(i2);
    for i in 0..i2 {
        let mut vals: Vec<f64> = inst.scenarios.iter().map(|s| s.rhs[i]).collect();
        vals.sort_by(f64::total_cmp);
        out.push(vals[..keep].iter().sum::<f64>() / keep as f64);
    }
    Ok(out)
}

/// Conditional-mean relaxation of the selection-aware bound at a fixed first
/// stage: one linear system with the conditional-mean rhs, cost scaled by the
/// kept fraction. Requires equal probabilities and a shared first-stage block.
pub fn jensen_bound_relaxed(inst: &CcmpInstance, x0: &[f64], epsilon: f64) -> Result<f64, JensenError> {
    let app = JensenApplicability::analyze(inst);
    app.need("common recourse block", app.h_common)?;
    app.need("common recourse cost", app.f_common)?;
    app.need("common first-stage block", app.g_common)?;
    let hbar = conditional_mean_rhs(inst, epsilon)?;
    let kk = inst.num_scenarios() as f64;
    let keep_frac = (kk - drop_count_for(inst, epsilon) as f64) / kk;
    let shared = &inst.scenarios[0];
    let gx = shared.first_stage.mul_vec(x0);
    let rows: Vec<Row> = (0..inst.scenario_rows())
        .map(|i| Row { coeffs: shared.recourse.row(i).to_vec(), sense: RowSense::Ge, rhs: hbar[i] - gx[i] })
        .collect();
    let lp = LinearProgram {
        sense: ObjSense::Minimize,
        objective: shared.cost.iter().map(|f| keep_frac * f).collect(),
        rows,
        bounds: vec![(0.0, INF); inst.recourse_dim],
    };
    Ok(match solve_lp(&lp, SolveLimits::none())? {
        LpOutcome::Optimal { objective, .. } => objective,
        LpOutcome::Infeasible { .. } => INF,
        LpOutcome::Unbounded { .. } => -INF,
    })
}

/// Flavor of the master block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JensenMode {
    /// Equal probabilities; aggregation rows carry `x * z` products.
    EqualProbExact,
    /// Equal probabilities and shared first-stage block; linear rows.
    CommonGLinear,
    /// Conditional-mean rhs; linear rows, weakest of the three modes.
    Relaxed,
}

/// Columns and rows a block added to a master.
#[derive(Debug, Clone)]
pub struct JensenBlock {
    pub mode: JensenMode,
    /// Aggregate recourse columns.
    pub y_bar: Vec<usize>,
    /// Indices of the added rows.
    pub rows: Vec<usize>,
}

/// Attach an aggregation block to a decomposition master. The expected kept
/// recourse cost is identified with the master's weighted scenario-cost term
/// (the block only bounds it from below), so no extra aggregate variable is
/// introduced.
pub fn attach_jensen_block(
    master: &mut BuiltFormulation,
    inst: &CcmpInstance,
    mode: JensenMode,
    epsilon: f64,
    bounds: &LinearizationBounds,
) -> Result<JensenBlock, JensenError> {
    let app = JensenApplicability::analyze(inst);
    app.need("common recourse block", app.h_common)?;
    app.need("common recourse cost", app.f_common)?;
    app.need("equal probabilities", app.equal_prob)?;
    if matches!(mode, JensenMode::CommonGLinear | JensenMode::Relaxed) {
        app.need("common first-stage block", app.g_common)?;
    }
    if master.varmap.z.len() != inst.num_scenarios()
        || master.varmap.eta.iter().any(Option::is_none)
        || master.varmap.eta.len() != inst.num_scenarios()
    {
        return Err(JensenError::ApplicabilityFailed(
            "master must carry selection and scenario-cost columns".into(),
        ));
    }
    let kk = inst.num_scenarios();
    let drop = drop_count_for(inst, epsilon);
    if drop >= kk {
        return Err(JensenError::ApplicabilityFailed("chance budget drops every scenario".into()));
    }
    let keep = (kk - drop) as f64;
    let shared = &inst.scenarios[0];
    let m = inst.recourse_dim;
    let i2 = inst.scenario_rows();

    let y_bar: Vec<usize> =
        (0..m).map(|j| master.push_col(format!("ybar{j}"), 0.0, INF, 0.0, false)).collect();
    let mut rows = Vec::new();

    // Expected kept recourse cost (identified with the weighted scenario
    // costs) is bounded below through the aggregate system.
    let mut link: Vec<(usize, f64)> = (0..kk)
        .map(|k| (master.varmap.eta[k].unwrap(), inst.scenarios[k].prob))
        .collect();
    for (j, &c) in y_bar.iter().enumerate() {
        link.push((c, -(keep / kk as f64) * shared.cost[j]));
    }
    rows.push(master.push_row(RowSense::Ge, 0.0, link));

    match mode {
        JensenMode::Relaxed => {
            let hbar = conditional_mean_rhs(inst, epsilon)?;
            for i in 0..i2 {
                let mut coeffs: Vec<(usize, f64)> =
                    shared.recourse.row(i).iter().map(|&(j, v)| (y_bar[j], v)).collect();
                for &(j, v) in shared.first_stage.row(i) {
                    coeffs.push((master.varmap.x[j], v));
                }
                rows.push(master.push_row(RowSense::Ge, hbar[i], coeffs));
            }
        }
        JensenMode::CommonGLinear => {
            for i in 0..i2 {
                let mut coeffs: Vec<(usize, f64)> =
                    shared.recourse.row(i).iter().map(|&(j, v)| (y_bar[j], keep * v)).collect();
                for &(j, v) in shared.first_stage.row(i) {
                    coeffs.push((master.varmap.x[j], keep * v));
                }
                let mut rhs = 0.0;
                for (k, s) in inst.scenarios.iter().enumerate() {
                    rhs += s.rhs[i];
                    coeffs.push((master.varmap.z[k], s.rhs[i]));
                }
                rows.push(master.push_row(RowSense::Ge, rhs, coeffs));
            }
        }
        JensenMode::EqualProbExact => {
            // Shared x*z products, reusing any the master already carries.
            for (k, s) in inst.scenarios.iter().enumerate() {
                let mut cols: Vec<usize> = s.first_stage.rows.iter().flatten().map(|e| e.0).collect();
                cols.sort_unstable();
                cols.dedup();
                for j in cols {
                    if !master.varmap.x_products.contains_key(&(j, k)) {
                        let u = bounds.x_bound(inst, j)?;
                        let lam = master.push_product(
                            format!("xz{j}_{k}"),
                            master.varmap.x[j],
                            master.varmap.z[k],
                            u,
                        );
                        master.varmap.x_products.insert((j, k), lam);
                    }
                }
            }
            for i in 0..i2 {
                let mut coeffs: Vec<(usize, f64)> =
                    shared.recourse.row(i).iter().map(|&(j, v)| (y_bar[j], keep * v)).collect();
                let mut rhs = 0.0;
                for (k, s) in inst.scenarios.iter().enumerate() {
                    rhs += s.rhs[i];
                    coeffs.push((master.varmap.z[k], s.rhs[i]));
                    for &(j, v) in s.first_stage.row(i) {
                        coeffs.push((master.varmap.x[j], v));
                        coeffs.push((master.varmap.x_products[&(j, k)], -v));
                    }
                }
                rows.push(master.push_row(RowSense::Ge, rhs, coeffs));
            }
        }
    }
    for (j, &c) in y_bar.iter().enumerate() {
        master.varmap.extra.insert(format!("ybar{j}"), c);
    }
    Ok(JensenBlock { mode, y_bar, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::fixtures::tiny2;
    use crate::gen::{or_instance, DurationGroup, OrSpec};
    use crate::model::best_response_z;

    #[test]
    fn applicability_flags_on_fixtures() {
        let app = JensenApplicability::analyze(&tiny2(0.5));
        assert!(app.all());
        assert_eq!(app.drop_count, Some(1));

        let or = or_instance(&OrSpec::desk(DurationGroup::Narrow, 3, 0.25));
        let app = JensenApplicability::analyze(&or);
        assert!(app.h_common && app.f_common && app.g_common && app.equal_prob);

        let mut uneven = tiny2(0.5);
        uneven.scenarios[0].cost[0] = 2.0;
        assert!(!JensenApplicability::analyze(&uneven).f_common);
    }

    #[test]
    fn sp_bound_on_tiny2() {
        let inst = tiny2(0.0);
        let bound = jensen_bound_sp(&inst, &[0.0]).unwrap();
        assert!((bound - 3.0).abs() < 1e-9);
        let expected = best_response_z(&inst, &[0.0]).unwrap().expected_cost;
        assert!((bound - expected).abs() < 1e-9, "single-row system: equality");
        assert!(jensen_bound_sp(&inst, &[10.0]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sp_bound_strict_on_two_row_system() {
        // Two recourse rows whose binding pattern differs per scenario make
        // the aggregate strictly cheaper than the expected recourse cost.
        let mut inst = tiny2(0.0);
        for s in &mut inst.scenarios {
            s.recourse = crate::lpkit::SparseMatrix::from_triples(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
            s.first_stage = crate::lpkit::SparseMatrix::from_triples(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]);
            s.cost = vec![1.0, 1.0];
        }
        inst.recourse_dim = 2;
        inst.scenarios[0].rhs = vec![4.0, 0.0];
        inst.scenarios[1].rhs = vec![0.0, 4.0];
        let x0 = [0.0];
        let bound = jensen_bound_sp(&inst, &x0).unwrap();
        let expected = best_response_z(&inst, &x0).unwrap().expected_cost;
        assert!((bound - 4.0).abs() < 1e-9, "aggregate rhs (2, 2) costs 4");
        assert!((expected - 4.0).abs() < 1e-9);
        // Shift one scenario to break the tie: aggregate stays linear while
        // the expectation pays both rows.
        inst.scenarios[0].rhs = vec![4.0, 2.0];
        inst.scenarios[1].rhs = vec![2.0, 4.0];
        let bound = jensen_bound_sp(&inst, &x0).unwrap();
        let expected = best_response_z(&inst, &x0).unwrap().expected_cost;
        assert!((bound - 6.0).abs() < 1e-9);
        assert!((expected - 6.0).abs() < 1e-9);
        // Make the recourse coupled so aggregation genuinely helps.
        for s in &mut inst.scenarios {
            s.recourse =
                crate::lpkit::SparseMatrix::from_triples(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        }
        let bound = jensen_bound_sp(&inst, &x0).unwrap();
        let expected = best_response_z(&inst, &x0).unwrap().expected_cost;
        assert!(bound <= expected + 1e-9);
        assert!(bound < expected - 1e-6, "strict inequality expected, {bound} vs {expected}");
    }

    #[test]
    fn selection_bound_on_tiny2() {
        let inst = tiny2(0.5);
        let bound = jensen_bound_ccmp(&inst, &[0.0], 1e5).unwrap();
        assert!((bound - 1.0).abs() < 1e-6);
        let e = best_response_z(&inst, &[0.0]).unwrap().expected_cost;
        assert!(bound <= e + 1e-6);
        assert!(jensen_bound_ccmp(&inst, &[10.0], 1e5).unwrap().abs() < 1e-9);
    }

    #[test]
    fn selection_bound_collapses_at_zero_risk() {
        let inst = tiny2(0.0);
        let a = jensen_bound_ccmp(&inst, &[0.0], 1e5).unwrap();
        let b = jensen_bound_sp(&inst, &[0.0]).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn conditional_mean_examples() {
        // Per-component sort: {5, 1, 3} with one drop -> mean of {1, 3} = 2.
        let mut inst = tiny2(0.34);
        inst.scenarios[0].rhs = vec![5.0];
        inst.scenarios[1].rhs = vec![1.0];
        inst.scenarios.push(inst.scenarios[0].clone());
        inst.scenarios[2].rhs = vec![3.0];
        for s in &mut inst.scenarios {
            s.prob = 1.0 / 3.0;
        }
        let hbar = conditional_mean_rhs(&inst, 0.34).unwrap();
        assert!((hbar[0] - 2.0).abs() < 1e-12);
        // Below 1/K the budget drops nothing: plain mean.
        let hbar = conditional_mean_rhs(&inst, 0.2).unwrap();
        assert!((hbar[0] - 3.0).abs() < 1e-12);
        // Never above the mean.
        let mean = 3.0;
        for eps in [0.0, 0.2, 0.34, 0.67] {
            assert!(conditional_mean_rhs(&inst, eps).unwrap()[0] <= mean + 1e-12);
        }
    }

    #[test]
    fn relaxed_bound_below_exact_bound() {
        let inst = tiny2(0.5);
        for x0 in [0.0, 1.0, 5.0] {
            let relaxed = jensen_bound_relaxed(&inst, &[x0], 0.5).unwrap();
            let exact = jensen_bound_ccmp(&inst, &[x0], 1e5).unwrap();
            let e = best_response_z(&inst, &[x0]).unwrap().expected_cost;
            assert!(relaxed <= exact + 1e-9, "x0={x0}");
            assert!(exact <= e + 1e-6, "x0={x0}");
        }
    }

    #[test]
    fn big_m_aggregation_is_trivial() {
        // Aggregating the indicator rows with a huge M and one dropped
        // scenario pushes the aggregate rhs far negative: the bound is zero.
        let inst = tiny2(0.5);
        let m_big = 1e5;
        let dropped_mass = 0.5; // one of two scenarios dropped
        let agg: f64 = inst
            .scenarios
            .iter()
            .enumerate()
            .map(|(k, s)| s.prob * (s.rhs[0] - 0.0) - if k == 1 { s.prob * m_big } else { 0.0 })
            .sum();
        assert!(agg < 0.0 && dropped_mass > 0.0);
        // min y s.t. y >= agg, y >= 0 with unit cost: zero.
        let lp = LinearProgram {
            sense: ObjSense::Minimize,
            objective: vec![1.0],
            rows: vec![Row { coeffs: vec![(0, 1.0)], sense: RowSense::Ge, rhs: agg }],
            bounds: vec![(0.0, INF)],
        };
        let out = solve_lp(&lp, SolveLimits::none()).unwrap();
        assert!(out.objective().unwrap().abs() < 1e-12);
    }
}
