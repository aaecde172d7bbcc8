//! Human-readable LP dump for debugging.
//!
//! Grammar (one statement per line, `#` starts a comment):
//!
//! ```text
//! minimize|maximize  <coef>*<name> [+|- <coef>*<name> ...]
//! subject to
//! <rowname>: <coef>*<name> [...] >=|<=|= <rhs>
//! bounds
//! <lo> <= <name> <= <hi>          # -inf / inf allowed
//! integer <name> ...               # only when marks are supplied
//! end
//! ```

use super::{LinearProgram, ObjSense, RowSense};
use std::fmt::Write;

fn term(buf: &mut String, first: &mut bool, coef: f64, name: &str) {
    if coef == 0.0 {
        return;
    }
    if *first {
        let _ = write!(buf, "{coef}*{name}");
        *first = false;
    } else if coef < 0.0 {
        let _ = write!(buf, " - {}*{name}", -coef);
    } else {
        let _ = write!(buf, " + {coef}*{name}");
    }
}

/// Render an LP (optionally with integrality marks) in the debug text format.
/// `names` overrides the default `x0, x1, ...` column names.
pub fn write_lp_text(lp: &LinearProgram, names: Option<&[String]>, integral: Option<&[bool]>) -> String {
    let name = |j: usize| -> String {
        match names {
            Some(ns) if j < ns.len() => ns[j].clone(),
            _ => format!("x{j}"),
        }
    };
    let mut out = String::new();
    out.push_str(match lp.sense {
        ObjSense::Minimize => "minimize ",
        ObjSense::Maximize => "maximize ",
    });
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        term(&mut out, &mut first, c, &name(j));
    }
    if first {
        out.push('0');
    }
    out.push_str("\nsubject to\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, "r{i}: ");
        let mut first = true;
        for &(c, v) in &row.coeffs {
            term(&mut out, &mut first, v, &name(c));
        }
        if first {
            out.push('0');
        }
        let op = match row.sense {
            RowSense::Ge => ">=",
            RowSense::Le => "<=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("bounds\n");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let lo_s = if lo == f64::NEG_INFINITY { "-inf".to_string() } else { format!("{lo}") };
        let hi_s = if hi == f64::INFINITY { "inf".to_string() } else { format!("{hi}") };
        let _ = writeln!(out, "{lo_s} <= {} <= {hi_s}", name(j));
    }
    if let Some(marks) = integral {
        let ints: Vec<String> = marks
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| name(j))
            .collect();
        if !ints.is_empty() {
            let _ = writeln!(out, "integer {}", ints.join(" "));
        }
    }
    out.push_str("end\n");
    out
}
