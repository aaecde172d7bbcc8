//! Best-bound branch-and-bound over the simplex kernel. Branching picks the
//! integer variable whose fractional part is closest to one half, ties to the
//! lowest index; node selection is best bound, ties to the oldest node.

use super::{solve_lp, LpError, LpOutcome, MipProblem, ObjSense, SolveLimits};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

const INT_TOL: f64 = 1e-6;

/// Outcome of a MIP solve plus the proof state.
#[derive(Debug, Clone, PartialEq)]
pub struct MipResult {
    /// `Optimal` carries the incumbent (dual vector empty at MIP level);
    /// `Infeasible` carries no certificate; `Unbounded` carries the root
    /// relaxation ray.
    pub outcome: LpOutcome,
    /// Proven relative gap of the incumbent, `(incumbent - bound) / max(|incumbent|, 1e-10)`.
    pub gap: f64,
    /// Best proven bound in the problem's own sense.
    pub best_bound: f64,
    pub nodes: usize,
}

struct Node {
    id: usize,
    /// Bound on the objective in minimization form.
    key: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.id == other.id
    }
}
impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for best-first (smallest key).
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.id.cmp(&self.id))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn most_fractional(x: &[f64], integral: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &xi) in x.iter().enumerate() {
        if !integral[j] {
            continue;
        }
        let frac = xi - xi.floor();
        let dist = (frac - 0.5).abs();
        if frac > INT_TOL && frac < 1.0 - INT_TOL {
            match best {
                Some((_, bd)) if dist >= bd => {}
                _ => best = Some((j, dist)),
            }
        }
    }
    best.map(|(j, _)| j)
}

fn round_integral(x: &mut [f64], integral: &[bool]) {
    for (j, v) in x.iter_mut().enumerate() {
        if integral[j] {
            let r = v.round();
            if (*v - r).abs() <= INT_TOL {
                *v = r;
            }
        }
    }
}

/// Solve a MIP to the requested relative gap.
pub fn solve_mip(mip: &MipProblem, limits: SolveLimits, rel_gap: f64) -> Result<MipResult, LpError> {
    mip.validate()?;
    let start = Instant::now();
    let minimize = mip.lp.sense == ObjSense::Minimize;
    // Work on a minimization copy; flip results at the end.
    let mut lp = mip.lp.clone();
    if !minimize {
        for c in lp.objective.iter_mut() {
            *c = -*c;
        }
        lp.sense = ObjSense::Minimize;
    }

    let flip = |v: f64| if minimize { v } else { -v };
    let lp_limits = SolveLimits { time: limits.time, iterations: None };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        key: f64::NEG_INFINITY,
        lower: lp.bounds.iter().map(|b| b.0).collect(),
        upper: lp.bounds.iter().map(|b| b.1).collect(),
    });
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut root_infeasible: Option<LpOutcome> = None;
    let mut open_bound: Option<f64> = None;
    // Smallest bound among nodes pruned by the incumbent margin; the proven
    // bound can never claim more than this.
    let mut pruned_floor = f64::INFINITY;

    let gap_of = |inc: f64, bound: f64| ((inc - bound) / inc.abs().max(1e-10)).max(0.0);

    while let Some(node) = heap.pop() {
        // Best-first order: this node's key bounds everything still open.
        if let Some((_, inc)) = &incumbent {
            let margin = rel_gap * inc.abs().max(1e-10);
            if node.key >= inc - margin {
                open_bound = Some(node.key);
                break;
            }
        }
        if let Some(t) = limits.time {
            if start.elapsed() > t {
                let bound = node.key;
                return Err(LpError::LimitExceeded {
                    best_bound: Some(flip(bound)),
                    incumbent: incumbent.map(|(x, v)| (x, flip(v))),
                });
            }
        }
        if let Some(cap) = limits.iterations {
            if nodes >= cap {
                let bound = node.key;
                return Err(LpError::LimitExceeded {
                    best_bound: Some(flip(bound)),
                    incumbent: incumbent.map(|(x, v)| (x, flip(v))),
                });
            }
        }
        nodes += 1;

        let mut node_lp = lp.clone();
        for j in 0..node_lp.bounds.len() {
            node_lp.bounds[j] = (node.lower[j], node.upper[j]);
        }
        let outcome = match solve_lp(&node_lp, lp_limits) {
            Ok(o) => o,
            Err(LpError::LimitExceeded { .. }) => {
                return Err(LpError::LimitExceeded {
                    best_bound: Some(flip(node.key)),
                    incumbent: incumbent.map(|(x, v)| (x, flip(v))),
                })
            }
            Err(e) => return Err(e),
        };
        match outcome {
            LpOutcome::Infeasible { .. } => {
                if nodes == 1 {
                    root_infeasible = Some(LpOutcome::Infeasible { certificate: Vec::new() });
                }
                continue;
            }
            LpOutcome::Unbounded { ray } => {
                if nodes == 1 {
                    return Ok(MipResult {
                        outcome: LpOutcome::Unbounded { ray },
                        gap: f64::INFINITY,
                        best_bound: flip(f64::NEG_INFINITY),
                        nodes,
                    });
                }
                // A bounded root cannot spawn unbounded children.
                return Err(LpError::NumericalFailure("unbounded node below bounded root".into()));
            }
            LpOutcome::Optimal { mut primal, objective, .. } => {
                if let Some((_, inc)) = &incumbent {
                    let margin = rel_gap * inc.abs().max(1e-10);
                    if objective >= inc - margin {
                        pruned_floor = pruned_floor.min(objective);
                        continue;
                    }
                }
                round_integral(&mut primal, &mip.integral);
                match most_fractional(&primal, &mip.integral) {
                    None => {
                        let better = incumbent.as_ref().is_none_or(|(_, inc)| objective < *inc);
                        if better {
                            incumbent = Some((primal, objective));
                        }
                    }
                    Some(j) => {
                        let v = primal[j];
                        let (fl, ce) = (v.floor(), v.ceil());
                        let lo1 = node.lower.clone();
                        let mut hi1 = node.upper.clone();
                        hi1[j] = fl;
                        let mut lo2 = node.lower.clone();
                        let hi2 = node.upper.clone();
                        lo2[j] = ce;
                        if hi1[j] >= lo1[j] {
                            heap.push(Node { id: next_id, key: objective, lower: lo1, upper: hi1 });
                            next_id += 1;
                        }
                        if hi2[j] >= lo2[j] {
                            heap.push(Node { id: next_id, key: objective, lower: lo2, upper: hi2 });
                            next_id += 1;
                        }
                    }
                }
            }
        }
    }

    match incumbent {
        Some((x, obj)) => {
            let bound = open_bound.unwrap_or(f64::INFINITY).min(pruned_floor).min(obj);
            Ok(MipResult {
                outcome: LpOutcome::Optimal { primal: x, dual: Vec::new(), objective: flip(obj) },
                gap: gap_of(obj, bound),
                best_bound: flip(bound),
                nodes,
            })
        }
        None => Ok(MipResult {
            outcome: root_infeasible.unwrap_or(LpOutcome::Infeasible { certificate: Vec::new() }),
            gap: f64::INFINITY,
            best_bound: flip(f64::INFINITY),
            nodes,
        })
    }
}
