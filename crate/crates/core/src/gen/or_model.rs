//! Stochastic operating-room scheduling instances.
//!
//! First stage: room on/off switches, surgery-to-room assignment, in-room
//! ordering, surgeon start times and ordering ranks (with symmetry-breaking
//! rows). Second stage, per scenario: surgery completion times, surgeon idle
//! times and room overtime, whose cost is charged only on kept scenarios
//! through the generic scenario-selection mechanism. The recourse block, the
//! first-stage block inside the scenario rows, and the cost vector are shared
//! by all scenarios; only the right-hand side (the random stage durations)
//! varies, so these instances qualify for every aggregation-bound mode.

use super::rng::XorShift64;
use crate::lpkit::SparseMatrix;
use crate::model::{CcmpInstance, Scenario, VarSpec};

/// Duration randomness level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationGroup {
    /// pre/post in [32, 56], incision in [50, 150].
    Wide,
    /// pre/post in [26, 38], incision in [76, 123].
    Narrow,
}

impl DurationGroup {
    fn ranges(self) -> ((i64, i64), (i64, i64), (i64, i64)) {
        match self {
            DurationGroup::Wide => ((32, 56), (50, 150), (32, 56)),
            DurationGroup::Narrow => ((26, 38), (76, 123), (26, 38)),
        }
    }
}

/// Spec of one scheduling instance. Defaults mirror the standard test bed:
/// 8 surgeries, 2 surgeons (contiguous lists), 2 rooms, 540-minute sessions,
/// fixed cost 4437, overtime cost 12.37/min, idle cost 17.748/min, surgeon
/// turnover 0, room turnover 30, completion-time cap 2500, 100 scenarios.
#[derive(Debug, Clone, Copy)]
pub struct OrSpec {
    pub n_surgeries: usize,
    pub n_surgeons: usize,
    pub n_rooms: usize,
    pub session_len: f64,
    pub fixed_cost: f64,
    pub overtime_cost: f64,
    pub idle_cost: f64,
    pub surgeon_turnover: f64,
    pub room_turnover: f64,
    /// Cap on completion times; also relaxes the ordering rows.
    pub big_m: f64,
    pub scenarios: usize,
    pub group: DurationGroup,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for OrSpec {
    fn default() -> Self {
        Self {
            n_surgeries: 8,
            n_surgeons: 2,
            n_rooms: 2,
            session_len: 540.0,
            fixed_cost: 4437.0,
            overtime_cost: 12.37,
            idle_cost: 17.748,
            surgeon_turnover: 0.0,
            room_turnover: 30.0,
            big_m: 2500.0,
            scenarios: 100,
            group: DurationGroup::Wide,
            seed: 1,
            epsilon: 0.1,
        }
    }
}

impl OrSpec {
    /// Desk-scale variant used by tests: 4 surgeries, K = 4.
    pub fn desk(group: DurationGroup, seed: u64, epsilon: f64) -> Self {
        Self { n_surgeries: 4, scenarios: 4, group, seed, epsilon, ..Self::default() }
    }
}

/// First-stage and recourse column layout of a scheduling instance.
#[derive(Debug, Clone)]
pub struct OrLayout {
    pub n: usize,
    pub n_rooms: usize,
    pub n_surgeons: usize,
    /// Consecutive same-surgeon surgery pairs `(i, j)`, in surgeon order.
    pub pairs: Vec<(usize, usize)>,
}

impl OrLayout {
    fn new(spec: &OrSpec) -> Self {
        let per = spec.n_surgeries / spec.n_surgeons;
        let mut pairs = Vec::new();
        for k in 0..spec.n_surgeons {
            for s in 0..per - 1 {
                pairs.push((k * per + s, k * per + s + 1));
            }
        }
        Self { n: spec.n_surgeries, n_rooms: spec.n_rooms, n_surgeons: spec.n_surgeons, pairs }
    }

    // First-stage columns.
    pub fn room(&self, r: usize) -> usize {
        r
    }
    pub fn assign(&self, i: usize, r: usize) -> usize {
        self.n_rooms + i * self.n_rooms + r
    }
    pub fn order(&self, i: usize, j: usize, r: usize) -> usize {
        debug_assert!(i != j);
        let jj = if j > i { j - 1 } else { j };
        self.n_rooms + self.n * self.n_rooms + (i * (self.n - 1) + jj) * self.n_rooms + r
    }
    pub fn start(&self, k: usize) -> usize {
        self.n_rooms + self.n * self.n_rooms + self.n * (self.n - 1) * self.n_rooms + k
    }
    pub fn rank(&self, i: usize) -> usize {
        self.start(self.n_surgeons) + i
    }
    pub fn num_x(&self) -> usize {
        self.rank(self.n - 1) + 1
    }

    // Recourse columns (per scenario).
    pub fn completion(&self, i: usize, r: usize) -> usize {
        i * self.n_rooms + r
    }
    pub fn gap_idle(&self, pair: usize) -> usize {
        self.n * self.n_rooms + pair
    }
    pub fn lead_idle(&self, k: usize) -> usize {
        self.n * self.n_rooms + self.pairs.len() + k
    }
    pub fn overtime(&self, r: usize) -> usize {
        self.n * self.n_rooms + self.pairs.len() + self.n_surgeons + r
    }
    pub fn recourse_dim(&self) -> usize {
        self.overtime(self.n_rooms - 1) + 1
    }

    /// Surgeon owning surgery `i` (contiguous lists).
    pub fn surgeon_of(&self, i: usize, n_surgeons: usize) -> usize {
        i / (self.n / n_surgeons)
    }
}

/// Generate a chance-constrained scheduling instance.
///
/// Durations are drawn as whole minutes, scenario by scenario and surgery by
/// surgery in the order (pre-incision, incision, post-incision).
pub fn or_instance(spec: &OrSpec) -> CcmpInstance {
    assert!(spec.n_surgeons > 0 && spec.n_surgeries.is_multiple_of(spec.n_surgeons), "surgeon lists must be contiguous and equal-sized");
    let lay = OrLayout::new(spec);
    let n = lay.n;
    let n_r = lay.n_rooms;
    let n_s = lay.n_surgeons;
    let per = n / n_s;
    let m_big = spec.big_m;

    // First-stage variable specs.
    let mut x_specs = Vec::with_capacity(lay.num_x());
    for _ in 0..n_r + n * n_r + n * (n - 1) * n_r {
        x_specs.push(VarSpec::binary());
    }
    for _ in 0..n_s {
        x_specs.push(VarSpec::continuous(0.0, spec.session_len));
    }
    for _ in 0..n {
        x_specs.push(VarSpec::continuous(1.0, n as f64));
    }
    let nx = lay.num_x();
    debug_assert_eq!(x_specs.len(), nx);

    // First-stage cost: fixed cost on room switches only.
    let mut cost = vec![0.0; nx];
    for r in 0..n_r {
        cost[lay.room(r)] = spec.fixed_cost;
    }

    // First-stage rows, all in >= form; equalities appear as two rows.
    let mut tri: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut row = 0usize;
    let push_ge = |tri: &mut Vec<(usize, usize, f64)>, rhs: &mut Vec<f64>, row: &mut usize, coeffs: &[(usize, f64)], b: f64| {
        for &(c, v) in coeffs {
            tri.push((*row, c, v));
        }
        rhs.push(b);
        *row += 1;
    };
    let push_eq = |tri: &mut Vec<(usize, usize, f64)>, rhs: &mut Vec<f64>, row: &mut usize, coeffs: &[(usize, f64)], b: f64| {
        for &(c, v) in coeffs {
            tri.push((*row, c, v));
        }
        rhs.push(b);
        *row += 1;
        for &(c, v) in coeffs {
            tri.push((*row, c, -v));
        }
        rhs.push(-b);
        *row += 1;
    };

    // Assignment only in open rooms.
    for i in 0..n {
        for r in 0..n_r {
            push_ge(&mut tri, &mut rhs, &mut row, &[(lay.room(r), 1.0), (lay.assign(i, r), -1.0)], 0.0);
        }
    }
    // Every surgery in exactly one room.
    for i in 0..n {
        let coeffs: Vec<(usize, f64)> = (0..n_r).map(|r| (lay.assign(i, r), 1.0)).collect();
        push_eq(&mut tri, &mut rhs, &mut row, &coeffs, 1.0);
    }
    // Ordering variables tied to co-assignment.
    for i in 0..n {
        for j in i + 1..n {
            for r in 0..n_r {
                let zij = lay.order(i, j, r);
                let zji = lay.order(j, i, r);
                push_ge(&mut tri, &mut rhs, &mut row, &[(lay.assign(i, r), 1.0), (zij, -1.0), (zji, -1.0)], 0.0);
                push_ge(&mut tri, &mut rhs, &mut row, &[(lay.assign(j, r), 1.0), (zij, -1.0), (zji, -1.0)], 0.0);
                push_ge(
                    &mut tri,
                    &mut rhs,
                    &mut row,
                    &[(zij, 1.0), (zji, 1.0), (lay.assign(i, r), -1.0), (lay.assign(j, r), -1.0)],
                    -1.0,
                );
            }
        }
    }
    // Symmetry breaking: rooms open in order ...
    for r in 0..n_r.saturating_sub(1) {
        push_ge(&mut tri, &mut rhs, &mut row, &[(lay.room(r), 1.0), (lay.room(r + 1), -1.0)], 0.0);
    }
    // ... surgery i (0-based) uses a room of index <= i ...
    for i in 0..n.min(n_r) {
        let coeffs: Vec<(usize, f64)> = (0..=i).map(|r| (lay.assign(i, r), 1.0)).collect();
        push_eq(&mut tri, &mut rhs, &mut row, &coeffs, 1.0);
    }
    // ... and room r is reachable for surgery i only if some earlier surgery
    // sits in room r-1.
    for i in 0..n {
        let top = (i + 1).min(n_r);
        for r in 1..top {
            let mut coeffs: Vec<(usize, f64)> = (r - 1..i).map(|j| (lay.assign(j, r - 1), 1.0)).collect();
            for q in r..top {
                coeffs.push((lay.assign(i, q), -1.0));
            }
            push_ge(&mut tri, &mut rhs, &mut row, &coeffs, 0.0);
        }
    }
    // Rank consistency with in-room ordering.
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut coeffs = vec![(lay.rank(j), 1.0), (lay.rank(i), -1.0)];
            for r in 0..n_r {
                coeffs.push((lay.order(i, j, r), -(n as f64)));
            }
            push_ge(&mut tri, &mut rhs, &mut row, &coeffs, 1.0 - n as f64);
        }
    }
    // Surgeon list order is fixed.
    for &(i, j) in &lay.pairs {
        push_ge(&mut tri, &mut rhs, &mut row, &[(lay.rank(j), 1.0), (lay.rank(i), -1.0)], 1.0);
    }

    let first_stage_rows = SparseMatrix::from_triples(row, nx, &tri);
    let first_stage_rhs = rhs;

    // Scenario layout: recourse block, first-stage block and cost vector are
    // scenario-independent; durations enter only through the rhs.
    let m = lay.recourse_dim();
    let mut cost_y = vec![0.0; m];
    for p in 0..lay.pairs.len() {
        cost_y[lay.gap_idle(p)] = spec.idle_cost;
    }
    for k in 0..n_s {
        cost_y[lay.lead_idle(k)] = spec.idle_cost;
    }
    for r in 0..n_r {
        cost_y[lay.overtime(r)] = spec.overtime_cost;
    }

    let mut g_tri: Vec<(usize, usize, f64)> = Vec::new();
    let mut h_tri: Vec<(usize, usize, f64)> = Vec::new();
    // rhs builder per scenario: list of (constant, duration terms) evaluated
    // against that scenario's draws.
    enum RhsTerm {
        Const(f64),
        // constant + sum of signed stage durations: (surgery, stage, sign)
        WithDur(f64, Vec<(usize, usize, f64)>),
    }
    let mut rhs_terms: Vec<RhsTerm> = Vec::new();
    let mut srow = 0usize;

    // Completion capped unless assigned.
    for i in 0..n {
        for r in 0..n_r {
            g_tri.push((srow, lay.assign(i, r), m_big));
            h_tri.push((srow, lay.completion(i, r), -1.0));
            rhs_terms.push(RhsTerm::Const(0.0));
            srow += 1;
        }
    }
    // In-room precedence on completion times.
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for r in 0..n_r {
                h_tri.push((srow, lay.completion(j, r), 1.0));
                h_tri.push((srow, lay.completion(i, r), -1.0));
                g_tri.push((srow, lay.order(i, j, r), -m_big));
                rhs_terms.push(RhsTerm::WithDur(
                    spec.room_turnover - m_big,
                    vec![(j, 0, 1.0), (j, 1, 1.0), (j, 2, 1.0)],
                ));
                srow += 1;
            }
        }
    }
    // Surgeon lead idle time definition (equality -> two rows).
    for k in 0..n_s {
        let first = k * per;
        let base: Vec<(usize, f64)> = {
            let mut v = vec![(lay.lead_idle(k), 1.0)];
            for r in 0..n_r {
                v.push((lay.completion(first, r), -1.0));
            }
            v
        };
        let durs = [(first, 0, -1.0), (first, 1, -1.0), (first, 2, -1.0)];
        for sign in [1.0, -1.0] {
            for &(c, v) in &base {
                h_tri.push((srow, c, sign * v));
            }
            g_tri.push((srow, lay.start(k), sign * 1.0));
            rhs_terms.push(RhsTerm::WithDur(0.0, durs.iter().map(|&(i, s, sg)| (i, s, sign * sg)).collect()));
            srow += 1;
        }
    }
    // Non-first surgeries cannot finish before their surgeon starts.
    for &(_, j) in &lay.pairs {
        let k = lay.surgeon_of(j, n_s);
        for r in 0..n_r {
            h_tri.push((srow, lay.completion(j, r), 1.0));
        }
        g_tri.push((srow, lay.start(k), -1.0));
        rhs_terms.push(RhsTerm::WithDur(0.0, vec![(j, 0, 1.0), (j, 1, 1.0), (j, 2, 1.0)]));
        srow += 1;
    }
    // Between-surgery idle time definition (equality -> two rows).
    for (p, &(i, j)) in lay.pairs.iter().enumerate() {
        let base: Vec<(usize, f64)> = {
            let mut v = vec![(lay.gap_idle(p), 1.0)];
            for r in 0..n_r {
                v.push((lay.completion(i, r), 1.0));
                v.push((lay.completion(j, r), -1.0));
            }
            v
        };
        let durs = [(i, 2, 1.0), (j, 1, -1.0), (j, 2, -1.0)];
        for sign in [1.0, -1.0] {
            for &(c, v) in &base {
                h_tri.push((srow, c, sign * v));
            }
            rhs_terms.push(RhsTerm::WithDur(
                sign * -spec.surgeon_turnover,
                durs.iter().map(|&(a, s, sg)| (a, s, sign * sg)).collect(),
            ));
            srow += 1;
        }
    }
    // Overtime beyond the session length.
    for i in 0..n {
        for r in 0..n_r {
            h_tri.push((srow, lay.overtime(r), 1.0));
            h_tri.push((srow, lay.completion(i, r), -1.0));
            rhs_terms.push(RhsTerm::Const(-spec.session_len));
            srow += 1;
        }
    }

    let shared_g = SparseMatrix::from_triples(srow, nx, &g_tri);
    let shared_h = SparseMatrix::from_triples(srow, m, &h_tri);

    // Draw durations and materialize the per-scenario rhs.
    let (pre_r, p_r, post_r) = spec.group.ranges();
    let mut rng = XorShift64::new(spec.seed);
    let mut scenarios = Vec::with_capacity(spec.scenarios);
    for _ in 0..spec.scenarios {
        // durations[i] = [pre, incision, post]
        let durations: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.uniform_int(pre_r.0, pre_r.1) as f64,
                    rng.uniform_int(p_r.0, p_r.1) as f64,
                    rng.uniform_int(post_r.0, post_r.1) as f64,
                ]
            })
            .collect();
        let rhs: Vec<f64> = rhs_terms
            .iter()
            .map(|t| match t {
                RhsTerm::Const(c) => *c,
                RhsTerm::WithDur(c, terms) => {
                    c + terms.iter().map(|&(i, s, sg)| sg * durations[i][s]).sum::<f64>()
                }
            })
            .collect();
        scenarios.push(Scenario {
            prob: 1.0 / spec.scenarios as f64,
            first_stage: shared_g.clone(),
            recourse: shared_h.clone(),
            rhs,
            cost: cost_y.clone(),
        });
    }

    CcmpInstance {
        cost,
        first_stage_rows,
        first_stage_rhs,
        x_specs,
        recourse_dim: m,
        scenarios,
        epsilon: spec.epsilon,
    }
}
