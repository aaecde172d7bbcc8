use super::*;
use crate::gen::fixtures::{conflict1, tiny1, tiny2};
use crate::gen::{random_instance, RandomSetup, RandomSpec, XKind};
use crate::lpkit::{check_certificate, solve_lp};

fn mip_value(built: &BuiltFormulation) -> f64 {
    let res = solve_mip(&built.mip, SolveLimits::none(), ORACLE_GAP).unwrap();
    res.outcome.objective().expect("expected an optimum")
}

fn lp_relax_value(built: &BuiltFormulation) -> f64 {
    match solve_lp(&built.mip.lp, SolveLimits::none()).unwrap() {
        LpOutcome::Optimal { objective, .. } => objective,
        other => panic!("expected optimum, got {other:?}"),
    }
}

#[test]
fn indicator_tiny1_matches_oracle() {
    let inst = tiny1(0.5);
    let built = build_indicator(&inst, 100.0);
    assert!((mip_value(&built) - 4.0).abs() < 1e-7);
    let oracle = oracle_solve(&inst, ORACLE_SCENARIO_CAP).unwrap();
    assert_eq!(oracle.status, SolveStatus::Optimal);
    assert!((oracle.objective.unwrap() - 4.0).abs() < 1e-7);
    assert_eq!(oracle.dropped.unwrap(), vec![false, true]);
}

#[test]
fn indicator_zero_m_collapses_to_all_kept() {
    let built = build_indicator(&tiny1(0.5), 0.0);
    assert!((mip_value(&built) - 6.0).abs() < 1e-7);
}

#[test]
fn indicator_tiny2_zero_risk() {
    let built = build_indicator(&tiny2(0.0), 100.0);
    assert!((mip_value(&built) - 3.0).abs() < 1e-7);
}

#[test]
fn linearized_products_pin_integral_indicators() {
    // lam = v * ind via the four product rows: check forced values by
    // optimizing lam both ways with v and ind pinned.
    for (v, ind, expect) in [(3.0, 1.0, 3.0), (3.0, 0.0, 0.0)] {
        for sense in [ObjSense::Minimize, ObjSense::Maximize] {
            let mut b = LpBuilder::new(sense);
            let vc = b.add_col("v", v, v, 0.0, false);
            let ic = b.add_col("ind", ind, ind, 0.0, false);
            let lam = add_product_column(&mut b, "lam".into(), vc, ic, 5.0);
            b.set_objective(lam, 1.0);
            let (mip, _) = b.build();
            let out = solve_lp(&mip.lp, SolveLimits::none()).unwrap();
            assert!((out.objective().unwrap() - expect).abs() < 1e-9, "v={v} ind={ind}");
        }
    }
}

#[test]
fn linearized_product_interval_at_fractional_indicator() {
    // v = 3, U = 5, ind = 0.5: feasible lam spans [0.5, 2.5].
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let vc = b.add_col("v", 3.0, 3.0, 0.0, false);
    let ic = b.add_col("ind", 0.5, 0.5, 0.0, false);
    let lam = add_product_column(&mut b, "lam".into(), vc, ic, 5.0);
    b.set_objective(lam, 1.0);
    let (mip, _) = b.build();
    let lo = solve_lp(&mip.lp, SolveLimits::none()).unwrap().objective().unwrap();
    let mut lp_max = mip.lp.clone();
    lp_max.sense = ObjSense::Maximize;
    let hi = solve_lp(&lp_max, SolveLimits::none()).unwrap().objective().unwrap();
    assert!((lo - 0.5).abs() < 1e-9);
    assert!((hi - 2.5).abs() < 1e-9);
}

#[test]
fn linearized_formulation_matches_oracle_on_tiny2() {
    for eps in [0.0, 0.5] {
        let inst = tiny2(eps);
        let built = build_mibp_mccormick(&inst, &LinearizationBounds::default()).unwrap();
        let oracle = oracle_solve(&inst, ORACLE_SCENARIO_CAP).unwrap();
        let got = mip_value(&built);
        assert!((got - oracle.objective.unwrap()).abs() < 1e-6, "eps={eps}: {got}");
    }
}

#[test]
fn strengthened_rhs_coefficients_and_values() {
    let inst = tiny1(0.5);
    let built = build_strengthened_rhs(&inst, RhsVariant::Dominant).unwrap();
    // Indicator coefficients: rhs minus the row minimum -> 0 and 2.
    let zrows: Vec<&Row> = built
        .mip
        .lp
        .rows
        .iter()
        .filter(|r| r.coeffs.iter().any(|&(c, _)| built.varmap.z.contains(&c) && r.sense == RowSense::Ge))
        .collect();
    assert_eq!(zrows.len(), 1, "only the second scenario keeps a nonzero coefficient");
    assert_eq!(zrows[0].coeffs.iter().find(|&&(c, _)| c == built.varmap.z[1]).unwrap().1, 2.0);

    for variant in [RhsVariant::Dominant, RhsVariant::Plain] {
        let built = build_strengthened_rhs(&inst, variant).unwrap();
        assert!((mip_value(&built) - 4.0).abs() < 1e-7, "{variant:?}");
    }
}

#[test]
fn strengthened_rhs_dominates_plain_in_relaxation() {
    let inst = tiny1(0.5);
    let dominant = lp_relax_value(&build_strengthened_rhs(&inst, RhsVariant::Dominant).unwrap());
    let plain = lp_relax_value(&build_strengthened_rhs(&inst, RhsVariant::Plain).unwrap());
    assert!(dominant >= plain - 1e-9);
    // Strict on this instance: the plain variant can split the drop budget
    // (z = (0.4, 0.6) gives x = 2.4), the dominant one cannot go below 4.
    assert!((dominant - 4.0).abs() < 1e-9);
    assert!((plain - 2.4).abs() < 1e-9);
}

#[test]
fn strengthened_rhs_rejects_recourse_or_negative_rhs() {
    assert!(matches!(
        build_strengthened_rhs(&tiny2(0.5), RhsVariant::Dominant),
        Err(FormulateError::PreconditionViolated(_))
    ));
    let mut inst = tiny1(0.5);
    inst.scenarios[0].rhs[0] = -1.0;
    assert!(matches!(
        build_strengthened_rhs(&inst, RhsVariant::Dominant),
        Err(FormulateError::PreconditionViolated(_))
    ));
}

#[test]
fn q_star_simple_cases() {
    // x in [0, 10], row coefficient 1 -> minimum 0.
    let inst = tiny2(0.5);
    let q = compute_q_star(&inst, QStarMode::ExactMip).unwrap();
    assert_eq!(q, vec![vec![0.0], vec![0.0]]);
    // x in [2, 10], coefficient 3 -> minimum 6.
    let mut shifted = tiny2(0.5);
    shifted.x_specs[0].lower = 2.0;
    for s in &mut shifted.scenarios {
        s.first_stage = crate::lpkit::SparseMatrix::from_triples(1, 1, &[(0, 0, 3.0)]);
    }
    let q = compute_q_star(&shifted, QStarMode::ExactMip).unwrap();
    assert!((q[0][0] - 6.0).abs() < 1e-9);
}

#[test]
fn q_star_relaxation_is_weaker_componentwise() {
    for seed in 0..10u64 {
        let spec = RandomSpec::new(
            RandomSetup::Custom { first_stage_rows: 3, scenario_rows: 5, x_dim: 4, recourse_dim: 2 },
            3,
            XKind::GeneralInteger,
            1000 + seed,
        );
        let inst = random_instance(&spec);
        let exact = match compute_q_star(&inst, QStarMode::ExactMip) {
            Ok(q) => q,
            Err(FormulateError::PreconditionViolated(_)) => continue, // empty first stage
            Err(e) => panic!("{e}"),
        };
        let relax = compute_q_star(&inst, QStarMode::LpRelax).unwrap();
        for k in 0..exact.len() {
            for r in 0..exact[k].len() {
                assert!(relax[k][r] <= exact[k][r] + 1e-7, "seed {seed} k={k} r={r}");
            }
        }
    }
}

#[test]
fn strengthened_recourse_matches_oracle_on_tiny2() {
    let inst = tiny2(0.5);
    let q = compute_q_star(&inst, QStarMode::ExactMip).unwrap();
    let built = build_strengthened_recourse(&inst, &q).unwrap();
    assert!((mip_value(&built) - 1.0).abs() < 1e-7);
}

#[test]
fn strengthened_recourse_admits_zero_recourse_when_dropped() {
    // With z_k = 1 the relaxed row must accept y = 0 for any feasible x.
    let inst = tiny2(0.5);
    let q = compute_q_star(&inst, QStarMode::ExactMip).unwrap();
    for x in [0.0, 2.5, 7.0, 10.0] {
        for (k, s) in inst.scenarios.iter().enumerate() {
            // row: G x + H*0 + (h - q) * 1 >= h  <=>  G x >= q.
            let gx = s.first_stage.mul_vec(&[x])[0];
            assert!(gx >= q[k][0] - 1e-9);
        }
    }
}

#[test]
fn fixed_selection_values_on_tiny2() {
    let inst = tiny2(0.5);
    let built = build_fixed_z(&inst, &[false, true], None).unwrap();
    assert!((mip_value(&built) - 1.0).abs() < 1e-9);

    let inst0 = tiny2(0.0);
    let built = build_fixed_z(&inst0, &[false, false], Some(&[0.0])).unwrap();
    assert!((mip_value(&built) - 3.0).abs() < 1e-9);

    assert!(matches!(
        build_fixed_z(&inst, &[true, true], None),
        Err(FormulateError::ChanceViolated { .. })
    ));
}

#[test]
fn oracle_handles_zero_risk_and_conflict() {
    let oracle = oracle_solve(&tiny1(0.0), ORACLE_SCENARIO_CAP).unwrap();
    assert_eq!(oracle.status, SolveStatus::Optimal);
    assert!((oracle.objective.unwrap() - 6.0).abs() < 1e-9);
    assert_eq!(oracle.dropped.unwrap(), vec![false, false]);

    let oracle = oracle_solve(&conflict1(0.0), ORACLE_SCENARIO_CAP).unwrap();
    assert_eq!(oracle.status, SolveStatus::Infeasible);

    let oracle = oracle_solve(&conflict1(0.5), ORACLE_SCENARIO_CAP).unwrap();
    assert_eq!(oracle.status, SolveStatus::Optimal);
    assert!(oracle.objective.unwrap().abs() < 1e-9);
}

#[test]
fn oracle_rejects_oversized_instances() {
    let mut inst = tiny1(0.5);
    let scen = inst.scenarios[0].clone();
    for _ in 0..15 {
        inst.scenarios.push(scen.clone());
    }
    assert!(matches!(
        oracle_solve(&inst, ORACLE_SCENARIO_CAP),
        Err(FormulateError::TooManyScenarios(_))
    ));
}

#[test]
fn extracted_solutions_pass_evaluation() {
    let inst = tiny2(0.5);
    for built in [
        build_indicator(&inst, 100.0),
        build_mibp_mccormick(&inst, &LinearizationBounds::default()).unwrap(),
    ] {
        let res = solve_mip(&built.mip, SolveLimits::none(), ORACLE_GAP).unwrap();
        let LpOutcome::Optimal { primal, .. } = res.outcome else { panic!() };
        let sol = built.extract_solution(&inst, &primal).unwrap();
        let (ok, obj) = crate::model::evaluate_solution(&inst, &sol);
        assert!(ok, "extracted solution must evaluate feasible");
        assert!((obj - 1.0).abs() < 1e-6);
    }
}

#[test]
fn kernel_certificates_hold_on_formulation_relaxations() {
    let inst = tiny2(0.5);
    let built = build_mibp_mccormick(&inst, &LinearizationBounds::default()).unwrap();
    let out = solve_lp(&built.mip.lp, SolveLimits::none()).unwrap();
    assert!(check_certificate(&built.mip.lp, &out));
}
