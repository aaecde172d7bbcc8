//! Small reference instances used throughout the tests and docs.

use crate::lpkit::SparseMatrix;
use crate::model::{CcmpInstance, Scenario, VarSpec};

/// TINY1: one continuous variable `x` in [0, 10] with cost 1, no recourse,
/// two equally likely scenarios demanding `x >= 4` and `x >= 6`.
pub fn tiny1(epsilon: f64) -> CcmpInstance {
    let scen = |rhs: f64| Scenario {
        prob: 0.5,
        first_stage: SparseMatrix::from_triples(1, 1, &[(0, 0, 1.0)]),
        recourse: SparseMatrix::zero(1, 0),
        rhs: vec![rhs],
        cost: vec![],
    };
    CcmpInstance {
        cost: vec![1.0],
        first_stage_rows: SparseMatrix::zero(0, 1),
        first_stage_rhs: vec![],
        x_specs: vec![VarSpec::continuous(0.0, 10.0)],
        recourse_dim: 0,
        scenarios: vec![scen(4.0), scen(6.0)],
        epsilon,
    }
}

/// TINY2: one continuous variable `x` in [0, 10] with cost 1 and one recourse
/// variable per scenario (`min y` s.t. `y >= h_k - x`, unit recourse cost),
/// two equally likely scenarios with `h = (2, 4)`.
pub fn tiny2(epsilon: f64) -> CcmpInstance {
    let scen = |rhs: f64| Scenario {
        prob: 0.5,
        first_stage: SparseMatrix::from_triples(1, 1, &[(0, 0, 1.0)]),
        recourse: SparseMatrix::from_triples(1, 1, &[(0, 0, 1.0)]),
        rhs: vec![rhs],
        cost: vec![1.0],
    };
    CcmpInstance {
        cost: vec![1.0],
        first_stage_rows: SparseMatrix::zero(0, 1),
        first_stage_rhs: vec![],
        x_specs: vec![VarSpec::continuous(0.0, 10.0)],
        recourse_dim: 1,
        scenarios: vec![scen(2.0), scen(4.0)],
        epsilon,
    }
}

/// CONFLICT1: two contradictory no-recourse scenarios (`x >= 5` and
/// `x <= 3`); infeasible at zero risk, trivial once either may be dropped.
pub fn conflict1(epsilon: f64) -> CcmpInstance {
    let scen = |coef: f64, rhs: f64| Scenario {
        prob: 0.5,
        first_stage: SparseMatrix::from_triples(1, 1, &[(0, 0, coef)]),
        recourse: SparseMatrix::zero(1, 0),
        rhs: vec![rhs],
        cost: vec![],
    };
    CcmpInstance {
        cost: vec![1.0],
        first_stage_rows: SparseMatrix::zero(0, 1),
        first_stage_rhs: vec![],
        x_specs: vec![VarSpec::continuous(0.0, 10.0)],
        recourse_dim: 0,
        scenarios: vec![scen(1.0, 5.0), scen(-1.0, -3.0)],
        epsilon,
    }
}
