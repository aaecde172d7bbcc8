//! Method identifiers and the dispatch onto the library entry points.

use crate::settings::Settings;
use ccmp_core::benders::{self, Variant};
use ccmp_core::formulate::{
    build_fixed_z, build_indicator, build_mibp_mccormick, build_strengthened_recourse,
    build_strengthened_rhs, compute_q_star, oracle_solve, BuiltFormulation, LinearizationBounds,
    QStarMode, RhsVariant,
};
use ccmp_core::lpkit::{solve_mip, LpError, LpOutcome, SolveLimits};
use ccmp_core::model::{CcmpInstance, Solution, SolveStatus};
use std::fmt;
use std::time::Instant;

/// Everything the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodId {
    ExtensiveBigM,
    ExtensiveMibp,
    StrengthenedRhs,
    StrengthenedRecourse,
    Sp,
    SmallM,
    Benders(Variant),
    Oracle,
}

impl MethodId {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        Some(match s.as_str() {
            "extensive-bigm" => MethodId::ExtensiveBigM,
            "extensive-mibp" => MethodId::ExtensiveMibp,
            "strengthened-rhs" => MethodId::StrengthenedRhs,
            "strengthened-recourse" => MethodId::StrengthenedRecourse,
            "sp" => MethodId::Sp,
            "small-m" => MethodId::SmallM,
            "oracle" => MethodId::Oracle,
            other => MethodId::Benders(Variant::parse(other)?),
        })
    }

    pub const ALL: &'static [&'static str] = &[
        "extensive-bigm",
        "extensive-mibp",
        "strengthened-rhs",
        "strengthened-recourse",
        "sp",
        "small-m",
        "bd0",
        "bd1",
        "bd2",
        "bd3",
        "bd4",
        "bd5",
        "bd6",
        "bd7",
        "bd8",
        "bd1j",
        "bd1rj",
        "oracle",
    ];
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MethodId::ExtensiveBigM => "extensive-bigm",
            MethodId::ExtensiveMibp => "extensive-mibp",
            MethodId::StrengthenedRhs => "strengthened-rhs",
            MethodId::StrengthenedRecourse => "strengthened-recourse",
            MethodId::Sp => "sp",
            MethodId::SmallM => "small-m",
            MethodId::Benders(v) => v.name(),
            MethodId::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

/// Uniform result of one method run.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub lb: f64,
    pub ub: f64,
    pub iterations_init: usize,
    pub iterations_main: usize,
    pub seconds: f64,
    pub solution: Option<Solution>,
}

fn from_mip(
    inst: &CcmpInstance,
    built: &BuiltFormulation,
    settings: &Settings,
    gap: f64,
    start: Instant,
) -> Result<MethodOutcome, String> {
    let limits = SolveLimits::with_time(settings.time_limit_sec);
    match solve_mip(&built.mip, limits, gap) {
        Ok(res) => {
            let seconds = start.elapsed().as_secs_f64();
            match res.outcome {
                LpOutcome::Optimal { primal, objective, .. } => {
                    let solution = built.extract_solution(inst, &primal).map_err(|e| e.to_string())?;
                    Ok(MethodOutcome {
                        status: SolveStatus::Optimal,
                        objective: Some(solution.objective),
                        lb: res.best_bound.min(objective),
                        ub: objective,
                        iterations_init: 0,
                        iterations_main: res.nodes,
                        seconds,
                        solution: Some(solution),
                    })
                }
                LpOutcome::Infeasible { .. } => Ok(MethodOutcome {
                    status: SolveStatus::Infeasible,
                    objective: None,
                    lb: f64::INFINITY,
                    ub: f64::INFINITY,
                    iterations_init: 0,
                    iterations_main: res.nodes,
                    seconds,
                    solution: None,
                }),
                LpOutcome::Unbounded { .. } => Ok(MethodOutcome {
                    status: SolveStatus::Unbounded,
                    objective: None,
                    lb: f64::NEG_INFINITY,
                    ub: f64::NEG_INFINITY,
                    iterations_init: 0,
                    iterations_main: res.nodes,
                    seconds,
                    solution: None,
                }),
            }
        }
        Err(LpError::LimitExceeded { best_bound, incumbent }) => {
            let seconds = start.elapsed().as_secs_f64();
            let ub = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| *v);
            let lb = best_bound.unwrap_or(f64::NEG_INFINITY);
            let gap = if ub.is_finite() && lb.is_finite() {
                Some(((ub - lb) / lb.abs().max(settings.lb_floor)).max(0.0))
            } else {
                None
            };
            let solution = match incumbent {
                Some((primal, _)) => Some(built.extract_solution(inst, &primal).map_err(|e| e.to_string())?),
                None => None,
            };
            Ok(MethodOutcome {
                status: SolveStatus::TimeLimit { gap },
                objective: solution.as_ref().map(|s| s.objective),
                lb,
                ub,
                iterations_init: 0,
                iterations_main: 0,
                seconds,
                solution,
            })
        }
        Err(e) => Err(e.to_string()),
    }
}

/// Run one method on one instance.
pub fn run_method(
    inst: &CcmpInstance,
    method: MethodId,
    settings: &Settings,
    observer: Option<&mut dyn FnMut(&benders::IterationRecord)>,
) -> Result<MethodOutcome, String> {
    let start = Instant::now();
    let bounds = LinearizationBounds::with_fallback(settings.mccormick_bound);
    match method {
        MethodId::ExtensiveBigM => {
            let built = build_indicator(inst, settings.big_m);
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::SmallM => {
            let built = build_indicator(inst, settings.small_m);
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::ExtensiveMibp => {
            let built = build_mibp_mccormick(inst, &bounds).map_err(|e| e.to_string())?;
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::StrengthenedRhs => {
            let built = build_strengthened_rhs(inst, RhsVariant::Dominant).map_err(|e| e.to_string())?;
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::StrengthenedRecourse => {
            let qstar = compute_q_star(inst, QStarMode::ExactMip).map_err(|e| e.to_string())?;
            let built = build_strengthened_recourse(inst, &qstar).map_err(|e| e.to_string())?;
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::Sp => {
            let dropped = vec![false; inst.num_scenarios()];
            let built = build_fixed_z(inst, &dropped, None).map_err(|e| e.to_string())?;
            from_mip(inst, &built, settings, settings.master_gap, start)
        }
        MethodId::Oracle => {
            let res = oracle_solve(inst, settings.oracle_cap).map_err(|e| e.to_string())?;
            let seconds = start.elapsed().as_secs_f64();
            let obj = res.objective;
            Ok(MethodOutcome {
                status: res.status,
                objective: obj,
                lb: obj.unwrap_or(f64::INFINITY),
                ub: obj.unwrap_or(f64::INFINITY),
                iterations_init: 0,
                iterations_main: 0,
                seconds,
                solution: res.solution,
            })
        }
        MethodId::Benders(variant) => {
            let config = settings.benders_config(variant);
            let out = match observer {
                Some(obs) => benders::run_with_observer(inst, &config, obs),
                None => benders::run(inst, &config),
            }
            .map_err(|e| e.to_string())?;
            Ok(MethodOutcome {
                status: out.report.status,
                objective: out.report.objective,
                lb: out.report.lb,
                ub: out.report.ub,
                iterations_init: out.report.init_iterations,
                iterations_main: out.report.main_iterations,
                seconds: out.report.wall_seconds,
                solution: out.solution,
            })
        }
    }
}
