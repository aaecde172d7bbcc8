//! Report rows, the loss-free CSV, and the per-method benchmark table.

use crate::methods::{MethodId, MethodOutcome};
use ccmp_core::model::SolveStatus;
use std::fmt::Write as _;

/// One solve = one row.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub instance: String,
    pub method: MethodId,
    pub epsilon: f64,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub lb: f64,
    pub ub: f64,
    /// `(ub - lb) / max(|lb|, lb_floor) * 100`, when both bounds are finite.
    pub gap_pct: Option<f64>,
    pub iterations_init: usize,
    pub iterations_main: usize,
    pub seconds: f64,
}

impl ReportRow {
    pub fn new(instance: String, method: MethodId, epsilon: f64, out: &MethodOutcome, lb_floor: f64) -> Self {
        let gap_pct = if out.ub.is_finite() && out.lb.is_finite() {
            Some(100.0 * ((out.ub - out.lb) / out.lb.abs().max(lb_floor)).max(0.0))
        } else {
            None
        };
        Self {
            instance,
            method,
            epsilon,
            status: out.status,
            objective: out.objective,
            lb: out.lb,
            ub: out.ub,
            gap_pct,
            iterations_init: out.iterations_init,
            iterations_main: out.iterations_main,
            seconds: out.seconds,
        }
    }

    /// `init+main` when a warm start ran, plain count otherwise.
    pub fn iterations(&self) -> String {
        if self.iterations_init > 0 {
            format!("{}+{}", self.iterations_init, self.iterations_main)
        } else {
            format!("{}", self.iterations_main)
        }
    }

    pub fn status_str(&self) -> String {
        format!("{}", self.status)
    }
}

fn csv_f(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: &str = "instance,method,epsilon,status,objective,lb,ub,gap_pct,itr_init,itr_main,sec";

pub fn csv_row(r: &ReportRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.instance,
        r.method,
        csv_f(r.epsilon),
        r.status_str(),
        r.objective.map_or(String::new(), csv_f),
        csv_f(r.lb),
        csv_f(r.ub),
        r.gap_pct.map_or("NA".into(), csv_f),
        r.iterations_init,
        r.iterations_main,
        csv_f(r.seconds)
    )
}

/// Aggregates per (method, epsilon) column, mirroring the benchmark table
/// footers.
pub struct ColumnSummary {
    pub solved: usize,
    pub unsolved: usize,
    pub avg_sec_solved: Option<f64>,
    pub avg_gap_unsolved: Option<f64>,
}

pub fn summarize(rows: &[&ReportRow]) -> ColumnSummary {
    let solved: Vec<&&ReportRow> = rows.iter().filter(|r| r.status.is_success()).collect();
    let unsolved: Vec<&&ReportRow> = rows.iter().filter(|r| !r.status.is_success()).collect();
    let avg_sec_solved = if solved.is_empty() {
        None
    } else {
        Some(solved.iter().map(|r| r.seconds).sum::<f64>() / solved.len() as f64)
    };
    let gaps: Vec<f64> = unsolved.iter().filter_map(|r| r.gap_pct).collect();
    let avg_gap_unsolved =
        if gaps.is_empty() { None } else { Some(gaps.iter().sum::<f64>() / gaps.len() as f64) };
    ColumnSummary { solved: solved.len(), unsolved: unsolved.len(), avg_sec_solved, avg_gap_unsolved }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => "NA".into(),
    }
}

/// Benchmark table: one column group (`itr. sec. g(%)`) per method/epsilon
/// cell, footer rows `# solved (S)`, `# unsolved (U)`, `avg. sec.: S`,
/// `avg. gap: U`.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut cols: Vec<(MethodId, f64)> = Vec::new();
    for r in rows {
        if !cols.iter().any(|&(m, e)| m == r.method && e == r.epsilon) {
            cols.push((r.method, r.epsilon));
        }
    }
    let mut instances: Vec<&str> = Vec::new();
    for r in rows {
        if !instances.contains(&r.instance.as_str()) {
            instances.push(&r.instance);
        }
    }
    let name_w = instances.iter().map(|s| s.len()).max().unwrap_or(8).max("avg. gap: U".len());
    let cell_w = 26;

    let mut out = String::new();
    let _ = write!(out, "{:name_w$}", "");
    for (m, e) in &cols {
        let _ = write!(out, " | {:cell_w$}", format!("{m} eps={e}"));
    }
    out.push('\n');
    let _ = write!(out, "{:name_w$}", "instance");
    for _ in &cols {
        let _ = write!(out, " | {:8} {:10} {:6}", "itr.", "sec.", "g(%)");
    }
    out.push('\n');
    for inst in &instances {
        let _ = write!(out, "{inst:name_w$}");
        for &(m, e) in &cols {
            match rows.iter().find(|r| r.instance == *inst && r.method == m && r.epsilon == e) {
                Some(r) => {
                    let g = match r.status {
                        SolveStatus::Optimal => String::new(),
                        _ => fmt_opt(r.gap_pct, 2),
                    };
                    let _ = write!(out, " | {:8} {:10.2} {:6}", r.iterations(), r.seconds, g);
                }
                None => {
                    let _ = write!(out, " | {:cell_w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    for (label, pick) in [
        ("# solved (S)", 0usize),
        ("# unsolved (U)", 1),
        ("avg. sec.: S", 2),
        ("avg. gap: U", 3),
    ] {
        let _ = write!(out, "{label:name_w$}");
        for &(m, e) in &cols {
            let group: Vec<&ReportRow> =
                rows.iter().filter(|r| r.method == m && r.epsilon == e).collect();
            let s = summarize(&group);
            let cell = match pick {
                0 => s.solved.to_string(),
                1 => s.unsolved.to_string(),
                2 => fmt_opt(s.avg_sec_solved, 2),
                _ => fmt_opt(s.avg_gap_unsolved, 2),
            };
            let _ = write!(out, " | {cell:cell_w$}");
        }
        out.push('\n');
    }
    out
}

/// CSV with data rows followed by the footer aggregates per column.
pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    let mut cols: Vec<(MethodId, f64)> = Vec::new();
    for r in rows {
        if !cols.iter().any(|&(m, e)| m == r.method && e == r.epsilon) {
            cols.push((r.method, r.epsilon));
        }
    }
    for (m, e) in cols {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.method == m && r.epsilon == e).collect();
        let s = summarize(&group);
        let _ = writeln!(out, "# solved (S),{m},{},,,,,,,,{}", csv_f(e), s.solved);
        let _ = writeln!(out, "# unsolved (U),{m},{},,,,,,,,{}", csv_f(e), s.unsolved);
        let _ = writeln!(
            out,
            "avg. sec.: S,{m},{},,,,,,,,{}",
            csv_f(e),
            s.avg_sec_solved.map_or("NA".into(), csv_f)
        );
        let _ = writeln!(
            out,
            "avg. gap: U,{m},{},,,,,,,,{}",
            csv_f(e),
            s.avg_gap_unsolved.map_or("NA".into(), csv_f)
        );
    }
    out
}
