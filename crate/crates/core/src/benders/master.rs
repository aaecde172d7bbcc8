//! Master-problem construction: first stage, drop indicators, scenario-cost
//! variables, pool cuts with shared product columns, and no-good rows.

use super::{BendersConfig, BendersError, CutPool, ScenarioClass};
use crate::formulate::{BuiltFormulation, FormulationKind, VariableMap};
use crate::lpkit::{LpBuilder, ObjSense, RowSense};
use crate::model::CcmpInstance;

/// Extra master content beyond the pool.
pub struct MasterExtras<'a> {
    /// Drop patterns to exclude with no-good rows.
    pub integer_cuts: &'a [Vec<bool>],
    /// Scenario preprocessing classes; forced selections are pinned.
    pub forced: &'a [ScenarioClass],
}

impl Default for MasterExtras<'_> {
    fn default() -> Self {
        static NONE_CLASSES: [ScenarioClass; 0] = [];
        MasterExtras { integer_cuts: &[], forced: &NONE_CLASSES }
    }
}

/// Build the relaxed master from a cut pool.
///
/// Each dual point `u` of scenario `k` becomes
/// `(g.x) + (u.h) z_k - sum_j g_j w_jk + eta_k >= u.h` with `g = G_k^T u`
/// and shared product columns `w_jk = x_j z_k`; rays contribute the same row
/// without the cost variable. Scenario-cost variables default to a zero
/// floor (valid for nonnegative recourse costs) or the configured floor.
pub fn build_master(
    inst: &CcmpInstance,
    pool: &CutPool,
    config: &BendersConfig,
    extras: &MasterExtras<'_>,
) -> Result<BuiltFormulation, BendersError> {
    let kk = inst.num_scenarios();
    let mut b = LpBuilder::new(ObjSense::Minimize);
    let mut vm = VariableMap::default();

    // First stage.
    for (j, spec) in inst.x_specs.iter().enumerate() {
        vm.x.push(b.add_col(format!("x{j}"), spec.lower, spec.upper, inst.cost[j], spec.is_integral()));
    }
    for (i, row) in inst.first_stage_rows.rows.iter().enumerate() {
        let coeffs = row.iter().map(|&(c, v)| (vm.x[c], v)).collect();
        b.add_row(RowSense::Ge, inst.first_stage_rhs[i], coeffs);
    }

    // Drop indicators (forced classes pinned) and scenario-cost variables.
    for (k, s) in inst.scenarios.iter().enumerate() {
        let (lo, hi) = match extras.forced.get(k) {
            Some(ScenarioClass::ForceDrop) => (1.0, 1.0),
            Some(ScenarioClass::ForceKeep) => (0.0, 0.0),
            _ => (0.0, 1.0),
        };
        vm.z.push(b.add_col(format!("z{k}"), lo, hi, 0.0, true));
        let floor = if s.cost.iter().all(|&f| f >= 0.0) {
            0.0
        } else {
            config.eta_floor.ok_or(BendersError::EtaFloorRequired(k))?
        };
        let eta = if matches!(extras.forced.get(k), Some(ScenarioClass::ForceDrop)) {
            b.add_col(format!("eta{k}"), 0.0, 0.0, s.prob, false)
        } else {
            b.add_col(format!("eta{k}"), floor, crate::lpkit::INF, s.prob, false)
        };
        vm.eta.push(Some(eta));
        vm.y.push(None);
    }
    let chance = vm.z.iter().enumerate().map(|(k, &c)| (c, inst.scenarios[k].prob)).collect();
    b.add_row(RowSense::Le, inst.epsilon, chance);

    // Cut rows with shared products per (x column, scenario).
    for k in 0..kk {
        if matches!(extras.forced.get(k), Some(ScenarioClass::ForceDrop)) {
            continue;
        }
        let s = &inst.scenarios[k];
        let ensure_product = |b: &mut LpBuilder, vm: &mut VariableMap, j: usize| -> Result<usize, BendersError> {
            if let Some(&lam) = vm.x_products.get(&(j, k)) {
                return Ok(lam);
            }
            let u = config.bounds.x_bound(inst, j)?;
            // Product validity needs the variable capped at the bound used.
            if !inst.x_specs[j].upper.is_finite() || u < inst.x_specs[j].upper {
                b.set_bounds(vm.x[j], inst.x_specs[j].lower, u);
            }
            let lam = crate::formulate::add_product_column(b, format!("xz{j}_{k}"), vm.x[j], vm.z[k], u);
            vm.x_products.insert((j, k), lam);
            Ok(lam)
        };
        let add_cut = |b: &mut LpBuilder,
                           vm: &mut VariableMap,
                           weights: &[f64],
                           with_cost_var: bool|
         -> Result<(), BendersError> {
            let g = s.first_stage.mul_vec_transposed(weights);
            let uh: f64 = s.rhs.iter().zip(weights).map(|(h, u)| h * u).sum();
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (j, &gj) in g.iter().enumerate() {
                if gj != 0.0 {
                    coeffs.push((vm.x[j], gj));
                    let lam = ensure_product(b, vm, j)?;
                    coeffs.push((lam, -gj));
                }
            }
            if uh != 0.0 {
                coeffs.push((vm.z[k], uh));
            }
            if with_cost_var {
                coeffs.push((vm.eta[k].unwrap(), 1.0));
            }
            b.add_row(RowSense::Ge, uh, coeffs);
            Ok(())
        };
        for p in &pool.points[k] {
            add_cut(&mut b, &mut vm, &p.weights, true)?;
        }
        for r in &pool.rays[k] {
            add_cut(&mut b, &mut vm, &r.direction, false)?;
        }
    }

    let mut built = super::master::finish_master(b, vm);
    for pattern in extras.integer_cuts {
        add_integer_cut(&mut built, pattern);
    }
    Ok(built)
}

pub(super) fn finish_master(b: LpBuilder, mut vm: VariableMap) -> BuiltFormulation {
    let (mip, names) = b.build();
    vm.names = names;
    debug_assert!(vm.is_injective(mip.lp.num_vars()));
    BuiltFormulation { mip, varmap: vm, kind: FormulationKind::Master, notes: Vec::new() }
}

/// Exclude exactly one drop pattern with a no-good row:
/// `sum_{k dropped} z_k - sum_{k kept} z_k <= |dropped| - 1`.
pub fn add_integer_cut(master: &mut BuiltFormulation, dropped: &[bool]) -> usize {
    let ones = dropped.iter().filter(|&&d| d).count() as f64;
    let coeffs: Vec<(usize, f64)> = master
        .varmap
        .z
        .iter()
        .zip(dropped)
        .map(|(&c, &d)| (c, if d { 1.0 } else { -1.0 }))
        .collect();
    master.push_row(RowSense::Le, ones - 1.0, coeffs)
}
