//! Self-contained LP/MIP kernel.
//!
//! A bounded-variable revised simplex (dense basis inverse, no factorization)
//! with dual extraction, Farkas infeasibility certificates and unbounded-ray
//! extraction, plus a best-bound branch-and-bound on top of it. Everything is
//! deterministic: fixed pricing, fixed tie-breaks, no randomness.
//!
//! The kernel targets desk-scale problems (up to roughly 2,000 variables /
//! rows); beyond that the dense inverse update dominates and a factorized
//! backend should be plugged in through [`BackendPort`].

mod branch_bound;
mod export;
mod simplex;

pub use branch_bound::{solve_mip, MipResult};
pub use export::write_lp_text;
pub use simplex::solve_lp;

use thiserror::Error;

/// Shorthand for `f64::INFINITY` in bound definitions.
pub const INF: f64 = f64::INFINITY;

/// Objective direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// Constraint row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    /// `a.x >= rhs`
    Ge,
    /// `a.x <= rhs`
    Le,
    /// `a.x == rhs`
    Eq,
}

/// One sparse constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// Sparse row-major matrix used across the problem model.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// Per-row `(col, value)` entries, column indices strictly increasing.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zero(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    /// Build from `(row, col, value)` triples; duplicates are summed.
    pub fn from_triples(nrows: usize, ncols: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triples {
            assert!(r < nrows && c < ncols, "triple ({r},{c}) out of bounds");
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            row.retain(|e| e.1 != 0.0);
        }
        Self { nrows, ncols, rows }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `A.x` for a dense vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A^T.y` for a dense vector.
    pub fn mul_vec_transposed(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out[c] += v * y[i];
            }
        }
        out
    }

    pub fn transposed(&self) -> SparseMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                rows[c].push((i, v));
            }
        }
        SparseMatrix { nrows: self.ncols, ncols: self.nrows, rows }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Entry-wise equality within `tol`, including the sparsity pattern union.
    pub fn approx_eq(&self, other: &SparseMatrix, tol: f64) -> bool {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return false;
        }
        for i in 0..self.nrows {
            let mut a = self.rows[i].iter().peekable();
            let mut b = other.rows[i].iter().peekable();
            loop {
                match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(&&(_, va)), None) => {
                        if va.abs() > tol {
                            return false;
                        }
                        a.next();
                    }
                    (None, Some(&&(_, vb))) => {
                        if vb.abs() > tol {
                            return false;
                        }
                        b.next();
                    }
                    (Some(&&(ca, va)), Some(&&(cb, vb))) => {
                        if ca == cb {
                            if (va - vb).abs() > tol {
                                return false;
                            }
                            a.next();
                            b.next();
                        } else if ca < cb {
                            if va.abs() > tol {
                                return false;
                            }
                            a.next();
                        } else {
                            if vb.abs() > tol {
                                return false;
                            }
                            b.next();
                        }
                    }
                }
            }
        }
        true
    }
}

/// A linear program in the kernel's native form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: ObjSense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    /// Per-variable `(lower, upper)`; infinite entries allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Structural well-formedness: consistent dimensions, finite rhs, sane bounds.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::InvalidProblem(format!(
                "bounds length {} != objective length {n}",
                self.bounds.len()
            )));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == INF || hi == -INF {
                return Err(LpError::InvalidProblem(format!("bad bounds on column {j}: [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::InvalidProblem("non-finite objective coefficient".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidProblem(format!("row {i} has non-finite rhs")));
            }
            for &(c, v) in &row.coeffs {
                if c >= n {
                    return Err(LpError::InvalidProblem(format!("row {i} references column {c} >= {n}")));
                }
                if !v.is_finite() {
                    return Err(LpError::InvalidProblem(format!("row {i} has non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Activity of row `i` at point `x`.
    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].coeffs.iter().map(|&(c, v)| v * x[c]).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// A linear program plus integrality marks.
#[derive(Debug, Clone, PartialEq)]
pub struct MipProblem {
    pub lp: LinearProgram,
    pub integral: Vec<bool>,
}

impl MipProblem {
    pub fn continuous(lp: LinearProgram) -> Self {
        let n = lp.num_vars();
        Self { lp, integral: vec![false; n] }
    }

    pub fn validate(&self) -> Result<(), LpError> {
        self.lp.validate()?;
        if self.integral.len() != self.lp.num_vars() {
            return Err(LpError::InvalidProblem("integrality mask length mismatch".into()));
        }
        for (j, &int) in self.integral.iter().enumerate() {
            let (lo, hi) = self.lp.bounds[j];
            if int && (!lo.is_finite() || !hi.is_finite()) {
                return Err(LpError::InvalidProblem(format!(
                    "integer column {j} needs finite bounds, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Result of an LP solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// Primal/dual optimal pair. `dual` has one multiplier per row, signed for
    /// the problem as given: for minimization `>= 0` on `Ge` rows and `<= 0`
    /// on `Le` rows, mirrored for maximization.
    Optimal { primal: Vec<f64>, dual: Vec<f64>, objective: f64 },
    /// Farkas certificate `y` (one entry per row, same sign convention as the
    /// duals): `y.b` strictly exceeds the best the variable bounds allow for
    /// `y.A x`, so no feasible point exists.
    Infeasible { certificate: Vec<f64> },
    /// Improving feasible direction, normalized to unit infinity norm.
    Unbounded { ray: Vec<f64> },
}

impl LpOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }

    pub fn primal(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { primal, .. } => Some(primal),
            _ => None,
        }
    }
}

/// Kernel and backend errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("limit exceeded (best bound {best_bound:?})")]
    LimitExceeded { best_bound: Option<f64>, incumbent: Option<(Vec<f64>, f64)> },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// Wall-clock and iteration caps for a single solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveLimits {
    pub time: Option<std::time::Duration>,
    /// Simplex pivots for LP solves, nodes for MIP solves.
    pub iterations: Option<usize>,
}

impl SolveLimits {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_time(secs: f64) -> Self {
        Self { time: Some(std::time::Duration::from_secs_f64(secs)), iterations: None }
    }
}

/// Capability flags a backend advertises.
#[derive(Debug, Clone, Copy)]
pub struct BackendCaps {
    pub lp: bool,
    pub mip: bool,
    /// Extreme rays on unbounded LPs.
    pub rays: bool,
    /// Farkas certificates on infeasible LPs.
    pub farkas: bool,
}

/// The single seam for substituting an external solver. A backend without
/// `rays` must not be used for decomposition subproblems; callers check.
pub trait BackendPort: Send + Sync {
    fn capabilities(&self) -> BackendCaps;

    /// Whether concurrent calls on one instance are allowed.
    fn concurrent_ok(&self) -> bool {
        false
    }

    fn solve_lp(&self, lp: &LinearProgram, limits: SolveLimits) -> Result<LpOutcome, LpError>;

    fn solve_mip(&self, mip: &MipProblem, limits: SolveLimits, rel_gap: f64) -> Result<MipResult, LpError>;
}

/// The built-in kernel as a [`BackendPort`].
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelBackend;

impl BackendPort for KernelBackend {
    fn capabilities(&self) -> BackendCaps {
        BackendCaps { lp: true, mip: true, rays: true, farkas: true }
    }

    fn concurrent_ok(&self) -> bool {
        true
    }

    fn solve_lp(&self, lp: &LinearProgram, limits: SolveLimits) -> Result<LpOutcome, LpError> {
        solve_lp(lp, limits)
    }

    fn solve_mip(&self, mip: &MipProblem, limits: SolveLimits, rel_gap: f64) -> Result<MipResult, LpError> {
        solve_mip(mip, limits, rel_gap)
    }
}

/// Incremental problem builder used by the formulation layer.
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: ObjSense,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    integral: Vec<bool>,
    rows: Vec<Row>,
    names: Vec<String>,
}

impl LpBuilder {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            integral: Vec::new(),
            rows: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add_col(&mut self, name: impl Into<String>, lo: f64, hi: f64, obj: f64, integral: bool) -> usize {
        let id = self.objective.len();
        self.objective.push(obj);
        self.bounds.push((lo, hi));
        self.integral.push(integral);
        self.names.push(name.into());
        id
    }

    pub fn add_row(&mut self, sense: RowSense, rhs: f64, coeffs: Vec<(usize, f64)>) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn set_objective(&mut self, col: usize, coef: f64) {
        self.objective[col] = coef;
    }

    pub fn set_bounds(&mut self, col: usize, lo: f64, hi: f64) {
        self.bounds[col] = (lo, hi);
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn build(self) -> (MipProblem, Vec<String>) {
        let lp = LinearProgram {
            sense: self.sense,
            objective: self.objective,
            rows: self.rows,
            bounds: self.bounds,
        };
        (MipProblem { lp, integral: self.integral }, self.names)
    }
}

const FEAS_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-7;

/// Verify an [`LpOutcome`] witness against the problem data by direct
/// arithmetic. Returns `true` iff the witness is internally consistent.
pub fn check_certificate(lp: &LinearProgram, outcome: &LpOutcome) -> bool {
    match outcome {
        LpOutcome::Optimal { primal, dual, objective } => {
            check_optimal(lp, primal, dual, *objective)
        }
        LpOutcome::Infeasible { certificate } => check_farkas(lp, certificate),
        LpOutcome::Unbounded { ray } => check_ray(lp, ray),
    }
}

fn check_optimal(lp: &LinearProgram, primal: &[f64], dual: &[f64], objective: f64) -> bool {
    let n = lp.num_vars();
    if primal.len() != n || dual.len() != lp.num_rows() {
        return false;
    }
    // Work in minimization form: flip objective and duals for Maximize.
    let sgn = if lp.sense == ObjSense::Maximize { -1.0 } else { 1.0 };
    let obj_min = sgn * objective;
    let c: Vec<f64> = lp.objective.iter().map(|v| sgn * v).collect();
    let y: Vec<f64> = dual.iter().map(|v| sgn * v).collect();

    // Primal feasibility.
    for (j, &x) in primal.iter().enumerate() {
        let (lo, hi) = lp.bounds[j];
        if x < lo - FEAS_TOL * (1.0 + lo.abs()) || x > hi + FEAS_TOL * (1.0 + hi.abs()) {
            return false;
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let act = lp.row_activity(i, primal);
        let tol = FEAS_TOL * (1.0 + row.rhs.abs());
        let ok = match row.sense {
            RowSense::Ge => act >= row.rhs - tol,
            RowSense::Le => act <= row.rhs + tol,
            RowSense::Eq => (act - row.rhs).abs() <= tol,
        };
        if !ok {
            return false;
        }
        // Dual sign and complementary slackness.
        let yi = y[i];
        match row.sense {
            RowSense::Ge => {
                if yi < -DUAL_TOL {
                    return false;
                }
            }
            RowSense::Le => {
                if yi > DUAL_TOL {
                    return false;
                }
            }
            RowSense::Eq => {}
        }
        if row.sense != RowSense::Eq && (act - row.rhs).abs() > tol && yi.abs() > DUAL_TOL * (1.0 + yi.abs()) {
            return false;
        }
    }
    // Objective consistency.
    let cx: f64 = c.iter().zip(primal).map(|(a, b)| a * b).sum();
    if (cx - obj_min).abs() > 1e-6 * (1.0 + obj_min.abs()) {
        return false;
    }
    // Reduced-cost optimality and the dual objective.
    let mut at = vec![0.0; n];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(cix, v) in &row.coeffs {
            at[cix] += v * y[i];
        }
    }
    let mut dual_obj: f64 = lp.rows.iter().zip(&y).map(|(r, yi)| r.rhs * yi).sum();
    let scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rc_tol = DUAL_TOL * scale;
    for j in 0..n {
        let d = c[j] - at[j];
        let (lo, hi) = lp.bounds[j];
        if (lo - hi).abs() <= FEAS_TOL {
            dual_obj += d * lo;
            continue;
        }
        let x = primal[j];
        let at_lo = x <= lo + FEAS_TOL * (1.0 + lo.abs());
        let at_hi = x >= hi - FEAS_TOL * (1.0 + hi.abs());
        if d > rc_tol {
            // Positive reduced cost must sit at the lower bound.
            if !at_lo || !lo.is_finite() {
                return false;
            }
            dual_obj += d * lo;
        } else if d < -rc_tol {
            if !at_hi || !hi.is_finite() {
                return false;
            }
            dual_obj += d * hi;
        }
    }
    (dual_obj - obj_min).abs() <= 1e-6 * (1.0 + obj_min.abs())
}

fn check_farkas(lp: &LinearProgram, y: &[f64]) -> bool {
    if y.len() != lp.num_rows() {
        return false;
    }
    for (i, row) in lp.rows.iter().enumerate() {
        match row.sense {
            RowSense::Ge => {
                if y[i] < -DUAL_TOL {
                    return false;
                }
            }
            RowSense::Le => {
                if y[i] > DUAL_TOL {
                    return false;
                }
            }
            RowSense::Eq => {}
        }
    }
    let n = lp.num_vars();
    let mut at = vec![0.0; n];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(c, v) in &row.coeffs {
            at[c] += v * y[i];
        }
    }
    let yb: f64 = lp.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum();
    // Best the bounds allow for y.A x; must stay strictly below y.b.
    let mut cap = 0.0;
    let zero_tol = 1e-10 * (1.0 + at.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    for j in 0..n {
        let d = at[j];
        let (lo, hi) = lp.bounds[j];
        if d > zero_tol {
            if !hi.is_finite() {
                return false;
            }
            cap += d * hi;
        } else if d < -zero_tol {
            if !lo.is_finite() {
                return false;
            }
            cap += d * lo;
        }
    }
    yb - cap > 1e-9 * (1.0 + yb.abs())
}

fn check_ray(lp: &LinearProgram, ray: &[f64]) -> bool {
    let n = lp.num_vars();
    if ray.len() != n {
        return false;
    }
    let norm = ray.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if (norm - 1.0).abs() > FEAS_TOL {
        return false;
    }
    for (j, &r) in ray.iter().enumerate() {
        let (lo, hi) = lp.bounds[j];
        if r > FEAS_TOL && hi.is_finite() {
            return false;
        }
        if r < -FEAS_TOL && lo.is_finite() {
            return false;
        }
    }
    for row in &lp.rows {
        let act: f64 = row.coeffs.iter().map(|&(c, v)| v * ray[c]).sum();
        let tol = FEAS_TOL * (1.0 + row.coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs())));
        let ok = match row.sense {
            RowSense::Ge => act >= -tol,
            RowSense::Le => act <= tol,
            RowSense::Eq => act.abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    let cr: f64 = lp.objective.iter().zip(ray).map(|(c, r)| c * r).sum();
    match lp.sense {
        ObjSense::Minimize => cr < -1e-9,
        ObjSense::Maximize => cr > 1e-9,
    }
}
