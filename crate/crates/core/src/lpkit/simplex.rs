//! Bounded-variable revised simplex with an explicitly maintained dense basis
//! inverse. Two phases: phase 1 drives artificial variables (added only on
//! rows whose logical start value violates its bounds) to zero, phase 2
//! optimizes the real objective. Dantzig pricing with a permanent switch to
//! Bland's rule once degeneracy stalls; a failed numerical self-check retries
//! the whole solve in a conservative mode before giving up.

use super::{LinearProgram, LpError, LpOutcome, ObjSense, RowSense, SolveLimits, INF};
use std::time::Instant;

const PIVOT_TOL: f64 = 1e-10;
const RATIO_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic variables rest at value zero.
    FreeZero,
}

struct Tableau {
    m: usize,
    /// Sparse columns: structurals, then one logical per row, then artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Dense row-major basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    bland: bool,
    degen_run: usize,
    pivots: usize,
    last_refactor: usize,
    resync_every: usize,
}

enum LoopEnd {
    Optimal,
    Unbounded { entering: usize, dir: f64 },
}

impl Tableau {
    fn new(lp: &LinearProgram, conservative: bool) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(c, v) in &row.coeffs {
                if v != 0.0 {
                    cols[c].push((i, v));
                }
            }
        }
        let mut lower: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
        let mut upper: Vec<f64> = lp.bounds.iter().map(|b| b.1).collect();
        let mut state = Vec::with_capacity(n + m);
        for j in 0..n {
            state.push(if lower[j].is_finite() {
                VarState::AtLower
            } else if upper[j].is_finite() {
                VarState::AtUpper
            } else {
                VarState::FreeZero
            });
        }
        let mut rhs = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            cols.push(vec![(i, 1.0)]);
            let (lo, hi) = match row.sense {
                RowSense::Le => (0.0, INF),
                RowSense::Ge => (-INF, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            state.push(VarState::Basic(i));
            basis.push(n + i);
            rhs.push(row.rhs);
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut t = Tableau {
            m,
            cols,
            lower,
            upper,
            rhs,
            state,
            basis,
            binv,
            xb: vec![0.0; m],
            bland: conservative,
            degen_run: 0,
            pivots: 0,
            last_refactor: 0,
            resync_every: if conservative { 16 } else { 128 },
        };
        t.recompute_xb();
        t
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::FreeZero => 0.0,
            VarState::Basic(i) => self.xb[i],
        }
    }

    /// xb = B^-1 (b - N x_N), from the current inverse.
    fn recompute_xb(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.cols.len() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.nonbasic_value(j);
            if xj != 0.0 {
                for &(i, v) in &self.cols[j] {
                    r[i] -= v * xj;
                }
            }
        }
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
    }

    /// Rebuild the inverse from the basis columns (Gauss-Jordan, partial
    /// pivoting). Returns false on a singular basis.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        if m == 0 {
            return true;
        }
        let mut a = vec![0.0; m * m];
        let mut scale: f64 = 0.0;
        for (k, &bj) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[bj] {
                a[i * m + k] = v;
                scale = scale.max(v.abs());
            }
        }
        let singular_tol = 1e-12 * (1.0 + scale);
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < singular_tol {
                return false;
            }
            if piv != col {
                for t in 0..m {
                    a.swap(piv * m + t, col * m + t);
                    inv.swap(piv * m + t, col * m + t);
                }
            }
            let p = a[col * m + col];
            for t in 0..m {
                a[col * m + t] /= p;
                inv[col * m + t] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f != 0.0 {
                    for t in 0..m {
                        a[r * m + t] -= f * a[col * m + t];
                        inv[r * m + t] -= f * inv[col * m + t];
                    }
                }
            }
        }
        self.binv = inv;
        true
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for t in 0..m {
                    y[t] += cb * row[t];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        let mut d = cost[j];
        for &(i, v) in &self.cols[j] {
            d -= y[i] * v;
        }
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        for &(r, v) in &self.cols[j] {
            for i in 0..m {
                w[i] += self.binv[i * m + r] * v;
            }
        }
        w
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        let mut obj = 0.0;
        for j in 0..self.cols.len() {
            if cost[j] != 0.0 {
                obj += cost[j]
                    * match self.state[j] {
                        VarState::Basic(i) => self.xb[i],
                        _ => self.nonbasic_value(j),
                    };
            }
        }
        obj
    }

    /// Core loop minimizing `cost` from a primal-feasible basis.
    fn iterate(
        &mut self,
        cost: &[f64],
        limits: &SolveLimits,
        start: &Instant,
        iter_budget: &mut usize,
    ) -> Result<LoopEnd, LpError> {
        let rc_tol = 1e-9 * (1.0 + cost.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let ncols = self.cols.len();
        loop {
            if *iter_budget == 0 {
                return Err(LpError::LimitExceeded {
                    best_bound: Some(self.objective(cost)),
                    incumbent: None,
                });
            }
            *iter_budget -= 1;
            if self.pivots.is_multiple_of(64) {
                if let Some(t) = limits.time {
                    if start.elapsed() > t {
                        return Err(LpError::LimitExceeded {
                            best_bound: Some(self.objective(cost)),
                            incumbent: None,
                        });
                    }
                }
            }

            // Pricing: Dantzig (largest |reduced cost|), ties to the lowest
            // column; Bland takes the first eligible column instead.
            let y = self.duals(cost);
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..ncols {
                if matches!(self.state[j], VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced_cost(j, cost, &y);
                let dir = match self.state[j] {
                    VarState::AtLower => {
                        if d < -rc_tol {
                            1.0
                        } else {
                            continue;
                        }
                    }
                    VarState::AtUpper => {
                        if d > rc_tol {
                            -1.0
                        } else {
                            continue;
                        }
                    }
                    VarState::FreeZero => {
                        if d < -rc_tol {
                            1.0
                        } else if d > rc_tol {
                            -1.0
                        } else {
                            continue;
                        }
                    }
                    VarState::Basic(_) => unreachable!(),
                };
                if self.bland {
                    entering = Some((j, d, dir));
                    break;
                }
                match entering {
                    Some((_, dbest, _)) if d.abs() <= dbest.abs() => {}
                    _ => entering = Some((j, d, dir)),
                }
            }
            let Some((q, _dq, dir)) = entering else {
                return Ok(LoopEnd::Optimal);
            };

            let mut w = self.ftran(q);
            let (mut theta, mut leave) = self.ratio_test(q, dir, &w);
            // A pivot this small is as likely stale-inverse noise as real;
            // refresh the inverse once and retest before trusting it.
            if let Some((r, _)) = leave {
                if w[r].abs() < 1e-7 && self.pivots >= self.last_refactor + 8 {
                    self.last_refactor = self.pivots;
                    if !self.refactor() {
                        return Err(LpError::NumericalFailure("singular basis at retest".into()));
                    }
                    self.recompute_xb();
                    w = self.ftran(q);
                    (theta, leave) = self.ratio_test(q, dir, &w);
                }
            }

            match leave {
                None => {
                    if theta.is_infinite() {
                        return Ok(LoopEnd::Unbounded { entering: q, dir });
                    }
                    for i in 0..self.m {
                        self.xb[i] -= dir * w[i] * theta;
                    }
                    self.state[q] = match self.state[q] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        s => s,
                    };
                    self.after_step(theta)?;
                }
                Some((r, at_upper)) => {
                    let theta = theta.max(0.0);
                    let entering_val = self.nonbasic_value(q) + dir * theta;
                    for i in 0..self.m {
                        self.xb[i] -= dir * w[i] * theta;
                    }
                    let leaving = self.basis[r];
                    self.state[leaving] = if at_upper { VarState::AtUpper } else { VarState::AtLower };
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic(r);
                    self.xb[r] = entering_val;
                    let m = self.m;
                    let piv = w[r];
                    if piv.abs() < PIVOT_TOL {
                        return Err(LpError::NumericalFailure("vanishing pivot".into()));
                    }
                    let inv_piv = 1.0 / piv;
                    let (head, tail) = self.binv.split_at_mut(r * m);
                    let (prow, rest) = tail.split_at_mut(m);
                    for t in prow.iter_mut() {
                        *t *= inv_piv;
                    }
                    for (i, chunk) in head.chunks_exact_mut(m).enumerate() {
                        let f = w[i];
                        if f != 0.0 {
                            for (t, p) in chunk.iter_mut().zip(prow.iter()) {
                                *t -= f * p;
                            }
                        }
                    }
                    for (off, chunk) in rest.chunks_exact_mut(m).enumerate() {
                        let f = w[r + 1 + off];
                        if f != 0.0 {
                            for (t, p) in chunk.iter_mut().zip(prow.iter()) {
                                *t -= f * p;
                            }
                        }
                    }
                    self.after_step(theta)?;
                }
            }
        }
    }

    // Largest pivot wins, lowest basis index on ties. Keeping the pivot rule
    // under Bland trades the textbook cycling proof for inverse stability;
    // the degeneracy counter still bounds any stall.
    fn better_leave(&self, row: usize, piv: f64, cur: Option<(usize, bool)>, cur_piv: f64) -> bool {
        match cur {
            None => true,
            Some((r, _)) => {
                piv > cur_piv || (piv == cur_piv && self.basis[row] < self.basis[r])
            }
        }
    }

    /// Two-pass ratio test: entering moves by `dir * theta`, basic `i` at
    /// rate `-dir * w[i]`. Pass 1 finds the tolerance-relaxed step cap; pass
    /// 2 picks the largest-magnitude pivot among rows whose exact ratio fits
    /// under it. Fat pivots keep the explicit inverse from degrading.
    fn ratio_test(&self, q: usize, dir: f64, w: &[f64]) -> (f64, Option<(usize, bool)>) {
        let own_cap = if self.lower[q].is_finite() && self.upper[q].is_finite() {
            self.upper[q] - self.lower[q]
        } else {
            INF
        };
        let block = |i: usize| -> Option<(f64, f64, bool)> {
            let delta = -dir * w[i];
            if delta > PIVOT_TOL {
                let hi = self.upper[self.basis[i]];
                if !hi.is_finite() {
                    return None;
                }
                Some(((hi - self.xb[i]).max(0.0), delta, true))
            } else if delta < -PIVOT_TOL {
                let lo = self.lower[self.basis[i]];
                if !lo.is_finite() {
                    return None;
                }
                Some(((self.xb[i] - lo).max(0.0), -delta, false))
            } else {
                None
            }
        };
        let mut theta_relaxed = own_cap;
        for i in 0..self.m {
            if let Some((room, rate, _)) = block(i) {
                let slack = RATIO_TIE_TOL * (1.0 + self.xb[i].abs());
                theta_relaxed = theta_relaxed.min((room + slack) / rate);
            }
        }
        let mut theta = own_cap;
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_piv = 0.0;
        for i in 0..self.m {
            if let Some((room, rate, at_upper)) = block(i) {
                let t = room / rate;
                if t <= theta_relaxed && self.better_leave(i, rate, leave, leave_piv) {
                    theta = t;
                    leave = Some((i, at_upper));
                    leave_piv = rate;
                }
            }
        }
        if leave.is_none() && theta_relaxed < own_cap {
            // Numerical corner: relaxed pass blocked but no exact ratio fit
            // under it; fall back to the plain minimum ratio.
            for i in 0..self.m {
                if let Some((room, rate, at_upper)) = block(i) {
                    let t = room / rate;
                    if t < theta || leave.is_none() {
                        theta = t;
                        leave = Some((i, at_upper));
                    }
                }
            }
        }
        (theta, leave)
    }

    fn after_step(&mut self, theta: f64) -> Result<(), LpError> {
        self.pivots += 1;
        if theta <= 1e-10 {
            self.degen_run += 1;
            if self.degen_run > 4 * (self.m + 64) {
                self.bland = true;
            }
            if self.degen_run > 40 * (self.m + 64) {
                return Err(LpError::NumericalFailure("degenerate stall".into()));
            }
        } else {
            self.degen_run = 0;
        }
        if self.pivots.is_multiple_of(self.resync_every) {
            self.recompute_xb();
            // Catch inverse degradation early rather than at the optimum.
            if !self.solution_consistent(1e-5) {
                if !self.refactor() {
                    return Err(LpError::NumericalFailure("singular basis".into()));
                }
                self.recompute_xb();
                if !self.solution_consistent(1e-5) {
                    return Err(LpError::NumericalFailure("basis drift beyond repair".into()));
                }
            }
        }
        Ok(())
    }

    /// Phase 1. Returns `Some(farkas)` when the problem is infeasible.
    fn phase1(
        &mut self,
        limits: &SolveLimits,
        start: &Instant,
        iter_budget: &mut usize,
    ) -> Result<Option<Vec<f64>>, LpError> {
        let m = self.m;
        let n_base = self.cols.len();
        let mut art_cost = vec![0.0; n_base];
        for i in 0..m {
            let lj = self.basis[i];
            let beta = self.xb[i];
            let (lo, hi) = (self.lower[lj], self.upper[lj]);
            let tol = 1e-9 * (1.0 + beta.abs());
            if beta >= lo - tol && beta <= hi + tol {
                continue;
            }
            // Demote the logical to its bound nearest the violation and cover
            // the residual with a nonnegative artificial.
            let v = if beta > hi { hi } else { lo };
            self.state[lj] = if beta > hi { VarState::AtUpper } else { VarState::AtLower };
            let rho = beta - v;
            let sigma = if rho >= 0.0 { 1.0 } else { -1.0 };
            let aj = self.cols.len();
            self.cols.push(vec![(i, sigma)]);
            self.lower.push(0.0);
            self.upper.push(INF);
            self.state.push(VarState::Basic(i));
            self.basis[i] = aj;
            self.xb[i] = rho.abs();
            art_cost.push(1.0);
            // Basis column i changed from e_i to sigma*e_i.
            if sigma < 0.0 {
                for t in 0..m {
                    self.binv[i * m + t] = -self.binv[i * m + t];
                }
            }
        }
        if self.cols.len() == n_base {
            return Ok(None);
        }
        match self.iterate(&art_cost, limits, start, iter_budget)? {
            LoopEnd::Unbounded { .. } => {
                return Err(LpError::NumericalFailure("phase 1 reported unbounded".into()))
            }
            LoopEnd::Optimal => {}
        }
        self.recompute_xb();
        let infeas = self.objective(&art_cost);
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > 1e-7 * scale {
            return Ok(Some(self.duals(&art_cost)));
        }
        // Freeze artificials at zero for phase 2.
        for j in n_base..self.cols.len() {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            if let VarState::Basic(i) = self.state[j] {
                if self.xb[i].abs() < 1e-6 {
                    self.xb[i] = 0.0;
                }
            } else {
                self.state[j] = VarState::AtLower;
            }
        }
        Ok(None)
    }

    /// Residual and bound self-check of the final point, at tolerance `tol`.
    fn solution_consistent(&self, tol: f64) -> bool {
        let mut act = vec![0.0; self.m];
        for j in 0..self.cols.len() {
            let xj = match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
            if xj != 0.0 {
                for &(i, v) in &self.cols[j] {
                    act[i] += v * xj;
                }
            }
        }
        for i in 0..self.m {
            if (act[i] - self.rhs[i]).abs() > tol * (1.0 + self.rhs[i].abs()) {
                return false;
            }
        }
        for (i, &bj) in self.basis.iter().enumerate() {
            let v = self.xb[i];
            if v < self.lower[bj] - tol * (1.0 + self.lower[bj].abs())
                || v > self.upper[bj] + tol * (1.0 + self.upper[bj].abs())
            {
                return false;
            }
        }
        true
    }
}

fn solve_once(lp: &LinearProgram, limits: SolveLimits, conservative: bool) -> Result<LpOutcome, LpError> {
    let start = Instant::now();
    let n = lp.num_vars();
    let minimize = lp.sense == ObjSense::Minimize;
    let mut cost: Vec<f64> = lp.objective.iter().map(|&v| if minimize { v } else { -v }).collect();

    let mut tab = Tableau::new(lp, conservative);
    let mut iter_budget = limits.iterations.unwrap_or(400 * (tab.m + n) + 40_000);

    if let Some(y) = tab.phase1(&limits, &start, &mut iter_budget)? {
        // The certificate is sense-independent.
        return Ok(LpOutcome::Infeasible { certificate: y });
    }
    cost.resize(tab.cols.len(), 0.0);

    match tab.iterate(&cost, &limits, &start, &mut iter_budget)? {
        LoopEnd::Optimal => {
            tab.recompute_xb();
            if !tab.solution_consistent(1e-6) {
                if !tab.refactor() {
                    return Err(LpError::NumericalFailure("singular basis at optimum".into()));
                }
                tab.recompute_xb();
                if !tab.solution_consistent(1e-6) {
                    return Err(LpError::NumericalFailure("inconsistent optimal basis".into()));
                }
            }
            let mut primal = vec![0.0; n];
            for (j, p) in primal.iter_mut().enumerate() {
                *p = tab.nonbasic_value(j);
            }
            let y = tab.duals(&cost);
            let obj_min = tab.objective(&cost);
            let sgn = if minimize { 1.0 } else { -1.0 };
            let dual: Vec<f64> = y.iter().map(|v| sgn * v).collect();
            Ok(LpOutcome::Optimal { primal, dual, objective: sgn * obj_min })
        }
        LoopEnd::Unbounded { entering, dir } => {
            let w = tab.ftran(entering);
            let mut ray = vec![0.0; n];
            if entering < n {
                ray[entering] = dir;
            }
            for i in 0..tab.m {
                let bj = tab.basis[i];
                if bj < n {
                    ray[bj] = -dir * w[i];
                }
            }
            let norm = ray.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if norm < PIVOT_TOL {
                return Err(LpError::NumericalFailure("degenerate unbounded ray".into()));
            }
            for r in ray.iter_mut() {
                *r /= norm;
            }
            Ok(LpOutcome::Unbounded { ray })
        }
    }
}

/// Solve a linear program. Deterministic: identical input produces the
/// identical outcome (fixed pricing and tie-break rules).
pub fn solve_lp(lp: &LinearProgram, limits: SolveLimits) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    match solve_once(lp, limits, false) {
        Err(LpError::NumericalFailure(_)) => solve_once(lp, limits, true),
        other => other,
    }
}
