//! Warm-start stage: classical decomposition of an easier model harvests
//! dual points and rays (the dual region does not depend on the right-hand
//! side, so everything harvested is valid for the main loop) plus, in the
//! small-M mode, a feasible incumbent.

use super::{
    core_point_on, pareto_refine_on, solve_dual_with_rhs, BendersConfig, BendersError, CutOrigin,
    CutPool, InitMode, ScenarioClass, SubproblemResult,
};
use crate::lpkit::{BackendPort, LpBuilder, LpError, LpOutcome, ObjSense, RowSense, SolveLimits, INF};
use crate::model::{CcmpInstance, Solution};
use std::collections::BTreeMap;
use std::time::Instant;

pub(super) struct InitResult {
    pub pool: CutPool,
    /// CCMP-feasible incumbent and its objective, when one was found.
    pub incumbent: Option<(f64, Solution)>,
    pub iterations: usize,
}

pub(super) fn initialize(
    inst: &CcmpInstance,
    config: &BendersConfig,
    classes: &[ScenarioClass],
    mode: InitMode,
    run_start: &Instant,
    be: &dyn BackendPort,
) -> Result<InitResult, BendersError> {
    let start = Instant::now();
    let kk = inst.num_scenarios();
    let mut pool = CutPool::new(kk);
    let origin = match mode {
        InitMode::AllKept => CutOrigin::AllKeptInit,
        InitMode::SmallM => CutOrigin::SmallMInit,
    };
    let core = if config.variant.pareto_init() { core_point_on(inst, be)? } else { None };
    let regular: Vec<usize> =
        (0..kk).filter(|&k| classes[k] == ScenarioClass::Regular).collect();
    let forced_drop: Vec<bool> =
        classes.iter().map(|c| *c == ScenarioClass::ForceDrop).collect();

    let mut lb = -INF;
    let mut ub = INF;
    let mut incumbent: Option<(f64, Solution)> = None;
    let mut iterations = 0usize;
    let mut last_x: Option<Vec<f64>> = None;

    let time_left = |start: &Instant| -> f64 {
        let cap = config.init_time_cap.min(config.time_limit - run_start.elapsed().as_secs_f64());
        (cap - start.elapsed().as_secs_f64()).max(0.0)
    };

    'outer: for _ in 0..config.iter_limit {
        if time_left(&start) <= 0.0 {
            break;
        }
        iterations += 1;

        // Build the stage master.
        let mut b = LpBuilder::new(ObjSense::Minimize);
        let x: Vec<usize> = inst
            .x_specs
            .iter()
            .enumerate()
            .map(|(j, s)| b.add_col(format!("x{j}"), s.lower, s.upper, inst.cost[j], s.is_integral()))
            .collect();
        for (i, row) in inst.first_stage_rows.rows.iter().enumerate() {
            let coeffs = row.iter().map(|&(c, v)| (x[c], v)).collect();
            b.add_row(RowSense::Ge, inst.first_stage_rhs[i], coeffs);
        }
        let z: Vec<usize> = match mode {
            InitMode::AllKept => Vec::new(),
            InitMode::SmallM => {
                let z: Vec<usize> = (0..kk)
                    .map(|k| {
                        let (lo, hi) = match classes[k] {
                            ScenarioClass::ForceDrop => (1.0, 1.0),
                            ScenarioClass::ForceKeep => (0.0, 0.0),
                            ScenarioClass::Regular => (0.0, 1.0),
                        };
                        b.add_col(format!("z{k}"), lo, hi, 0.0, true)
                    })
                    .collect();
                let chance = z.iter().enumerate().map(|(k, &c)| (c, inst.scenarios[k].prob)).collect();
                b.add_row(RowSense::Le, inst.epsilon, chance);
                z
            }
        };
        let mut eta = Vec::with_capacity(kk);
        for (k, s) in inst.scenarios.iter().enumerate() {
            let floor = if s.cost.iter().all(|&f| f >= 0.0) {
                0.0
            } else {
                config.eta_floor.ok_or(BendersError::EtaFloorRequired(k))?
            };
            eta.push(b.add_col(format!("eta{k}"), floor, INF, s.prob, false));
        }
        for &k in &regular {
            let s = &inst.scenarios[k];
            let m_z: Option<usize> = match mode {
                InitMode::AllKept => None,
                InitMode::SmallM => Some(z[k]),
            };
            let add = |b: &mut LpBuilder, weights: &[f64], with_cost: bool| {
                let g = s.first_stage.mul_vec_transposed(weights);
                let uh: f64 = s.rhs.iter().zip(weights).map(|(h, u)| h * u).sum();
                let usum: f64 = weights.iter().sum();
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for (j, &gj) in g.iter().enumerate() {
                    if gj != 0.0 {
                        coeffs.push((x[j], gj));
                    }
                }
                if let Some(zc) = m_z {
                    if usum != 0.0 && config.small_m != 0.0 {
                        coeffs.push((zc, config.small_m * usum));
                    }
                }
                if with_cost {
                    coeffs.push((eta[k], 1.0));
                }
                b.add_row(RowSense::Ge, uh, coeffs);
            };
            for p in &pool.points[k] {
                add(&mut b, &p.weights, true);
            }
            for r in &pool.rays[k] {
                add(&mut b, &r.direction, false);
            }
        }
        let (mip, _) = b.build();
        let limits = SolveLimits::with_time(time_left(&start).max(0.01));
        let res = match be.solve_mip(&mip, limits, config.init_gap) {
            Ok(r) => r,
            Err(LpError::LimitExceeded { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        let (x0, z0) = match &res.outcome {
            LpOutcome::Optimal { primal, .. } => {
                let x0: Vec<f64> = x
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| if inst.x_specs[j].is_integral() { primal[c].round() } else { primal[c] })
                    .collect();
                let z0: Vec<bool> = match mode {
                    InitMode::AllKept => forced_drop.clone(),
                    InitMode::SmallM => z.iter().map(|&c| primal[c] > 0.5).collect(),
                };
                (x0, z0)
            }
            // Stage model infeasible or unbounded: keep whatever the pool
            // has. This says nothing about the real problem (the stage model
            // restricts it), so just stop the warm start.
            _ => break,
        };
        lb = lb.max(res.best_bound);
        last_x = Some(x0.clone());

        // Subproblems at the stage point; everything harvested is pool-valid.
        let mut stage_value: f64 = inst.cost.iter().zip(&x0).map(|(c, v)| c * v).sum();
        let mut ccmp_value = stage_value;
        let mut stage_complete = true;
        let mut kept_complete = true;
        let mut recourse: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut any_new = false;
        for &k in &regular {
            let s = &inst.scenarios[k];
            let mut rhs = inst.recourse_rhs(k, &x0);
            if mode == InitMode::SmallM && z0[k] {
                for r in rhs.iter_mut() {
                    *r -= config.small_m;
                }
            }
            match solve_dual_with_rhs(inst, k, &rhs, origin, be)? {
                SubproblemResult::Point { mut point, value, recourse: y } => {
                    if config.variant.pareto_init() {
                        if let Some(cp) = &core {
                            point = pareto_refine_on(inst, k, &x0, cp, value, &point, be);
                            point.origin = origin;
                        }
                    }
                    stage_value += s.prob * value;
                    if !z0[k] {
                        ccmp_value += s.prob * value;
                        recourse.insert(k, y);
                    }
                    if pool.add_point(point) {
                        any_new = true;
                    }
                }
                SubproblemResult::Ray(ray) => {
                    stage_complete = false;
                    if !z0[k] {
                        kept_complete = false;
                    }
                    if pool.add_ray(ray) {
                        any_new = true;
                    }
                }
            }
        }
        // The stage point, restricted to its kept scenarios, is a feasible
        // CCMP solution whenever all kept recourse solves succeeded.
        if kept_complete
            && incumbent.as_ref().is_none_or(|(v, _)| ccmp_value < *v) {
                let sol = Solution {
                    x: x0.clone(),
                    dropped: z0.clone(),
                    recourse: recourse.clone(),
                    objective: ccmp_value,
                };
                incumbent = Some((ccmp_value, sol));
                ub = ub.min(ccmp_value);
            }
        if stage_complete {
            ub = ub.min(stage_value);
        }
        if ub.is_finite() && lb.is_finite() {
            let gap = (ub - lb) / lb.abs().max(config.lb_floor);
            if gap <= config.init_gap {
                break 'outer;
            }
        }
        if !any_new {
            break;
        }
    }

    // Keep only the deepest point per scenario at the final stage point.
    if config.variant.strongest_only() {
        if let Some(xf) = &last_x {
            for k in 0..kk {
                if pool.points[k].len() > 1 {
                    let rhs = inst.recourse_rhs(k, xf);
                    let depth = |p: &super::DualPoint| -> f64 {
                        rhs.iter().zip(&p.weights).map(|(r, u)| r * u).sum()
                    };
                    let best = pool.points[k]
                        .iter()
                        .enumerate()
                        .max_by(|(i, a), (j, b)| depth(a).total_cmp(&depth(b)).then(j.cmp(i)))
                        .map(|(i, _)| i)
                        .unwrap();
                    let kept = pool.points[k].swap_remove(best);
                    pool.points[k] = vec![kept];
                }
            }
        }
    }

    Ok(InitResult { pool, incumbent, iterations })
}
