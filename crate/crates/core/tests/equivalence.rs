//! Cross-formulation agreement on small random instances: every
//! deterministic equivalent (and its solution read-back) must land on the
//! enumeration oracle's value, and product columns must be exact in any
//! integral solution.

use ccmp_core::formulate::{
    build_indicator, build_mibp_mccormick, build_strengthened_recourse, compute_q_star,
    oracle_solve, FormulateError, LinearizationBounds, QStarMode,
};
use ccmp_core::gen::{random_instance, RandomSetup, RandomSpec, XKind};
use ccmp_core::lpkit::{solve_mip, LpOutcome, SolveLimits};
use ccmp_core::model::{evaluate_solution, SolveStatus};

const GAP: f64 = 1e-9;

#[test]
fn formulations_agree_with_the_oracle() {
    let mut feasible = 0;
    for seed in 0..12u64 {
        let spec = RandomSpec::new(
            RandomSetup::Custom { first_stage_rows: 3, scenario_rows: 6, x_dim: 5, recourse_dim: 6 },
            5,
            if seed % 2 == 0 { XKind::Binary } else { XKind::Mixed },
            2000 + seed,
        );
        let mut inst = random_instance(&spec);
        inst.epsilon = 0.4;
        let oracle = oracle_solve(&inst, 12).unwrap();
        let opt = match oracle.status {
            SolveStatus::Optimal => oracle.objective.unwrap(),
            _ => continue,
        };
        feasible += 1;

        let bounds = LinearizationBounds::default();
        let mut builds = vec![
            ("indicator", build_indicator(&inst, 1e5)),
            ("linearized", build_mibp_mccormick(&inst, &bounds).unwrap()),
        ];
        match compute_q_star(&inst, QStarMode::ExactMip) {
            Ok(q) if q.iter().flatten().all(|v| v.is_finite()) => {
                builds.push(("strengthened", build_strengthened_recourse(&inst, &q).unwrap()));
            }
            Ok(_) | Err(FormulateError::QStarUnbounded { .. }) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
        for (label, built) in builds {
            let res = solve_mip(&built.mip, SolveLimits::none(), GAP).unwrap();
            let LpOutcome::Optimal { primal, objective, .. } = res.outcome else {
                panic!("seed {seed} {label}: expected an optimum");
            };
            assert!(
                (objective - opt).abs() <= 1e-4 * (1.0 + opt.abs()),
                "seed {seed} {label}: {objective} vs oracle {opt}"
            );
            let sol = built.extract_solution(&inst, &primal).unwrap();
            let (ok, value) = evaluate_solution(&inst, &sol);
            assert!(ok, "seed {seed} {label}: extracted solution infeasible");
            assert!((value - opt).abs() <= 1e-4 * (1.0 + opt.abs()));

            // Product columns are exact at integral selections.
            for (&(j, k), &lam) in &built.varmap.x_products {
                let z = primal[built.varmap.z[k]];
                let want = primal[built.varmap.x[j]] * z.round();
                assert!(
                    (primal[lam] - want).abs() <= 1e-6 * (1.0 + want.abs()),
                    "seed {seed} {label}: product ({j},{k}) = {} expected {want}",
                    primal[lam]
                );
            }
        }
    }
    assert!(feasible >= 5, "only {feasible} feasible seeds");
}
