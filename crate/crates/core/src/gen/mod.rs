//! Seeded instance generation and the instance file format.
//!
//! All generators are deterministic functions of their spec: coefficients are
//! drawn from a pinned xorshift stream (see [`XorShift64`]) in a fixed order, so a
//! `(spec, seed)` pair regenerates byte-identical files on any platform.

mod format;
pub mod fixtures;
mod or_model;
mod rng;

pub use format::{read_instance, read_instance_str, write_instance, write_instance_string, GenError};
pub use or_model::{or_instance, DurationGroup, OrSpec};
pub use rng::XorShift64;

use crate::model::{CcmpInstance, Scenario, VarSpec};
use crate::lpkit::SparseMatrix;

/// Problem dimensions of the unstructured random family:
/// `(first-stage rows, scenario rows, x dim, recourse dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomSetup {
    /// (10, 30, 20, 40)
    T1,
    /// (20, 50, 30, 70)
    T2,
    Custom { first_stage_rows: usize, scenario_rows: usize, x_dim: usize, recourse_dim: usize },
}

impl RandomSetup {
    pub fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            RandomSetup::T1 => (10, 30, 20, 40),
            RandomSetup::T2 => (20, 50, 30, 70),
            RandomSetup::Custom { first_stage_rows, scenario_rows, x_dim, recourse_dim } => {
                (first_stage_rows, scenario_rows, x_dim, recourse_dim)
            }
        }
    }
}

/// Kind of the first-stage variables in generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XKind {
    Binary,
    /// General integers with upper bound 500.
    GeneralInteger,
    /// First half (rounded up) continuous in [0, 500], rest integer in [0, 500].
    Mixed,
}

/// Spec of one unstructured random instance.
#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub setup: RandomSetup,
    pub scenarios: usize,
    pub x_kind: XKind,
    pub seed: u64,
    /// Risk level stored in the generated instance (overridable at solve time).
    pub epsilon: f64,
}

impl RandomSpec {
    pub fn new(setup: RandomSetup, scenarios: usize, x_kind: XKind, seed: u64) -> Self {
        Self { setup, scenarios, x_kind, seed, epsilon: 0.1 }
    }
}

fn x_specs_for(kind: XKind, n: usize) -> Vec<VarSpec> {
    match kind {
        XKind::Binary => vec![VarSpec::binary(); n],
        XKind::GeneralInteger => vec![VarSpec::integer(0.0, 500.0); n],
        XKind::Mixed => (0..n)
            .map(|j| {
                if j < n.div_ceil(2) {
                    VarSpec::continuous(0.0, 500.0)
                } else {
                    VarSpec::integer(0.0, 500.0)
                }
            })
            .collect(),
    }
}

fn dense_matrix(rng: &mut XorShift64, nrows: usize, ncols: usize, lo: f64, hi: f64) -> SparseMatrix {
    let mut triples = Vec::with_capacity(nrows * ncols);
    for r in 0..nrows {
        for c in 0..ncols {
            triples.push((r, c, rng.uniform(lo, hi)));
        }
    }
    SparseMatrix::from_triples(nrows, ncols, &triples)
}

/// Generate one unstructured random instance.
///
/// Draw order (row-major within each block): first-stage matrix in [-25, 25],
/// its rhs in [-50, 50], costs in [100, 300]; then per scenario: the
/// first-stage block (first 40% of the scenario rows in [0, 10], the rest
/// structurally zero, no draws consumed), the recourse block (first 40% of
/// rows in [-3, 0], the rest in [0, 3]), the rhs (first 40% in [-35, 0], the
/// rest in [-25, 100]) and the recourse costs in [5, 10]. Probabilities are
/// uniform `1/K`.
pub fn random_instance(spec: &RandomSpec) -> CcmpInstance {
    let (i1, i2, n, m) = spec.setup.dims();
    let kk = spec.scenarios;
    let mut rng = XorShift64::new(spec.seed);
    let a = dense_matrix(&mut rng, i1, n, -25.0, 25.0);
    let b: Vec<f64> = (0..i1).map(|_| rng.uniform(-50.0, 50.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.uniform(100.0, 300.0)).collect();
    let split = (0.4 * i2 as f64).floor() as usize;

    let mut scenarios = Vec::with_capacity(kk);
    for _ in 0..kk {
        let mut g_triples = Vec::new();
        for r in 0..split {
            for cix in 0..n {
                g_triples.push((r, cix, rng.uniform(0.0, 10.0)));
            }
        }
        let mut h_triples = Vec::with_capacity(i2 * m);
        for r in 0..i2 {
            let (lo, hi) = if r < split { (-3.0, 0.0) } else { (0.0, 3.0) };
            for cix in 0..m {
                h_triples.push((r, cix, rng.uniform(lo, hi)));
            }
        }
        let rhs: Vec<f64> = (0..i2)
            .map(|r| if r < split { rng.uniform(-35.0, 0.0) } else { rng.uniform(-25.0, 100.0) })
            .collect();
        let cost: Vec<f64> = (0..m).map(|_| rng.uniform(5.0, 10.0)).collect();
        scenarios.push(Scenario {
            prob: 1.0 / kk as f64,
            first_stage: SparseMatrix::from_triples(i2, n, &g_triples),
            recourse: SparseMatrix::from_triples(i2, m, &h_triples),
            rhs,
            cost,
        });
    }

    CcmpInstance {
        cost: c,
        first_stage_rows: a,
        first_stage_rhs: b,
        x_specs: x_specs_for(spec.x_kind, n),
        recourse_dim: m,
        scenarios,
        epsilon: spec.epsilon,
    }
}

/// Random right-hand-side family: no recourse, one common first-stage block
/// shared by all scenarios, nonnegative scenario rhs. Draw order: first-stage
/// matrix, rhs, costs as in [`random_instance`], then the shared scenario
/// block in [0, 10], then per scenario the rhs in [0, 0.6 * row sum].
pub fn random_rhs_instance(
    first_stage_rows: usize,
    scenario_rows: usize,
    x_dim: usize,
    scenarios: usize,
    seed: u64,
    epsilon: f64,
) -> CcmpInstance {
    let (i1, i2, n, kk) = (first_stage_rows, scenario_rows, x_dim, scenarios);
    let mut rng = XorShift64::new(seed);
    let a = dense_matrix(&mut rng, i1, n, -25.0, 25.0);
    let b: Vec<f64> = (0..i1).map(|_| rng.uniform(-50.0, 0.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.uniform(100.0, 300.0)).collect();
    let shared = dense_matrix(&mut rng, i2, n, 0.0, 10.0);
    let row_caps: Vec<f64> = (0..i2)
        .map(|r| 0.6 * shared.row(r).iter().map(|e| e.1).sum::<f64>())
        .collect();
    let scenarios: Vec<Scenario> = (0..kk)
        .map(|_| Scenario {
            prob: 1.0 / kk as f64,
            first_stage: shared.clone(),
            recourse: SparseMatrix::zero(i2, 0),
            rhs: (0..i2).map(|r| rng.uniform(0.0, row_caps[r])).collect(),
            cost: vec![],
        })
        .collect();
    CcmpInstance {
        cost: c,
        first_stage_rows: a,
        first_stage_rhs: b,
        x_specs: vec![VarSpec::binary(); n],
        recourse_dim: 0,
        scenarios,
        epsilon,
    }
}

/// Common-recourse family: one shared first-stage block, recourse block and
/// cost vector across all scenarios, equal probabilities, scenario rhs drawn
/// per scenario from the split ranges of [`random_instance`]. These instances
/// qualify for every aggregation-bound mode.
pub fn random_common_recourse_instance(
    first_stage_rows: usize,
    scenario_rows: usize,
    x_dim: usize,
    recourse_dim: usize,
    scenarios: usize,
    seed: u64,
    epsilon: f64,
) -> CcmpInstance {
    let (i1, i2, n, m, kk) = (first_stage_rows, scenario_rows, x_dim, recourse_dim, scenarios);
    let mut rng = XorShift64::new(seed);
    let a = dense_matrix(&mut rng, i1, n, -25.0, 25.0);
    let b: Vec<f64> = (0..i1).map(|_| rng.uniform(-50.0, 50.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.uniform(100.0, 300.0)).collect();
    let split = (0.4 * i2 as f64).floor() as usize;
    let mut g_triples = Vec::new();
    for r in 0..split {
        for cix in 0..n {
            g_triples.push((r, cix, rng.uniform(0.0, 10.0)));
        }
    }
    let shared_g = SparseMatrix::from_triples(i2, n, &g_triples);
    let mut h_triples = Vec::new();
    for r in 0..i2 {
        let (lo, hi) = if r < split { (-3.0, 0.0) } else { (0.0, 3.0) };
        for cix in 0..m {
            h_triples.push((r, cix, rng.uniform(lo, hi)));
        }
    }
    let shared_h = SparseMatrix::from_triples(i2, m, &h_triples);
    let shared_cost: Vec<f64> = (0..m).map(|_| rng.uniform(5.0, 10.0)).collect();
    let scenarios: Vec<Scenario> = (0..kk)
        .map(|_| Scenario {
            prob: 1.0 / kk as f64,
            first_stage: shared_g.clone(),
            recourse: shared_h.clone(),
            rhs: (0..i2)
                .map(|r| if r < split { rng.uniform(-35.0, 0.0) } else { rng.uniform(-25.0, 100.0) })
                .collect(),
            cost: shared_cost.clone(),
        })
        .collect();
    CcmpInstance {
        cost: c,
        first_stage_rows: a,
        first_stage_rhs: b,
        x_specs: x_specs_for(XKind::Mixed, n),
        recourse_dim: m,
        scenarios,
        epsilon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn t1_ranges_hold() {
        let spec = RandomSpec::new(RandomSetup::T1, 4, XKind::Binary, 1);
        let inst = random_instance(&spec);
        assert!(validate_instance(&inst).is_empty());
        assert_eq!(inst.num_x(), 20);
        assert_eq!(inst.scenario_rows(), 30);
        let split = 12; // floor(0.4 * 30)
        for s in &inst.scenarios {
            for v in &s.cost {
                assert!((5.0..=10.0).contains(v));
            }
            for (r, row) in s.first_stage.rows.iter().enumerate() {
                if r < split {
                    assert_eq!(row.len(), 20);
                    assert!(row.iter().all(|e| (0.0..=10.0).contains(&e.1)));
                } else {
                    assert!(row.is_empty(), "row {r} must be structurally zero");
                }
            }
        }
    }

    #[test]
    fn t2_dimensions() {
        let spec = RandomSpec::new(RandomSetup::T2, 3, XKind::GeneralInteger, 9);
        let inst = random_instance(&spec);
        assert_eq!(inst.first_stage_rows.nrows, 20);
        assert_eq!(inst.first_stage_rows.ncols, 30);
        assert_eq!(inst.scenarios[0].recourse.nrows, 50);
        assert_eq!(inst.scenarios[0].recourse.ncols, 70);
        assert!(inst.x_specs.iter().all(|s| s.upper == 500.0 && s.is_integral()));
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = RandomSpec::new(RandomSetup::T1, 4, XKind::Binary, 77);
        assert_eq!(random_instance(&spec), random_instance(&spec));
    }

    #[test]
    fn families_validate() {
        let a = random_rhs_instance(4, 6, 5, 6, 3, 0.25);
        assert!(validate_instance(&a).is_empty());
        assert!(a.scenarios.iter().all(|s| s.rhs.iter().all(|&h| h >= 0.0)));
        let b = random_common_recourse_instance(4, 8, 6, 8, 6, 3, 0.25);
        assert!(validate_instance(&b).is_empty());
        assert!(b.scenarios[1].recourse.approx_eq(&b.scenarios[0].recourse, 0.0));
    }
}
