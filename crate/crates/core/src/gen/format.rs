//! Instance file format: a line-oriented UTF-8 text document with a fixed
//! field order. Floats are written with Rust's shortest round-trip decimal
//! formatting (one fixed rule, platform-stable, bit-exact on re-read);
//! `inf`/`-inf` spell the infinite bounds. `#` starts a comment line.
//!
//! ```text
//! ccmp-instance v1
//! epsilon <f>
//! vars <n>
//! var <j> <cont|bin|int> <lo> <hi>      # n lines, j ascending
//! obj <n floats>
//! rows <I1>
//! amat <nnz>
//! <row> <col> <value>                   # sorted lexicographically
//! rhs <I1 floats>
//! recourse <m>
//! scenarios <K>
//! scenario <k>                          # K blocks, k ascending
//! prob <f>
//! gmat <nnz> / triples
//! hmat <nnz> / triples
//! hvec <I2 floats>
//! fvec <m floats>
//! end
//! ```

use crate::lpkit::SparseMatrix;
use crate::model::{validate_instance, CcmpInstance, Scenario, VarKind, VarSpec};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("line {line}: {field}: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_f(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_vec(out: &mut String, key: &str, vs: &[f64]) {
    out.push_str(key);
    for v in vs {
        let _ = write!(out, " {}", fmt_f(*v));
    }
    out.push('\n');
}

fn fmt_mat(out: &mut String, key: &str, m: &SparseMatrix) {
    let _ = writeln!(out, "{key} {}", m.nnz());
    for (r, row) in m.rows.iter().enumerate() {
        for &(c, v) in row {
            let _ = writeln!(out, "{r} {c} {}", fmt_f(v));
        }
    }
}

/// Serialize an instance to the canonical text form.
pub fn write_instance_string(inst: &CcmpInstance) -> Result<String, GenError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(GenError::InvalidInstance(violations[0].to_string()));
    }
    let mut out = String::new();
    out.push_str("ccmp-instance v1\n");
    let _ = writeln!(out, "epsilon {}", fmt_f(inst.epsilon));
    let _ = writeln!(out, "vars {}", inst.num_x());
    for (j, s) in inst.x_specs.iter().enumerate() {
        let kind = match s.kind {
            VarKind::Continuous => "cont",
            VarKind::Binary => "bin",
            VarKind::GeneralInteger => "int",
        };
        let _ = writeln!(out, "var {j} {kind} {} {}", fmt_f(s.lower), fmt_f(s.upper));
    }
    fmt_vec(&mut out, "obj", &inst.cost);
    let _ = writeln!(out, "rows {}", inst.first_stage_rows.nrows);
    fmt_mat(&mut out, "amat", &inst.first_stage_rows);
    fmt_vec(&mut out, "rhs", &inst.first_stage_rhs);
    let _ = writeln!(out, "recourse {}", inst.recourse_dim);
    let _ = writeln!(out, "scenarios {}", inst.num_scenarios());
    for (k, s) in inst.scenarios.iter().enumerate() {
        let _ = writeln!(out, "scenario {k}");
        let _ = writeln!(out, "prob {}", fmt_f(s.prob));
        fmt_mat(&mut out, "gmat", &s.first_stage);
        fmt_mat(&mut out, "hmat", &s.recourse);
        fmt_vec(&mut out, "hvec", &s.rhs);
        fmt_vec(&mut out, "fvec", &s.cost);
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn write_instance(inst: &CcmpInstance, path: &Path) -> Result<(), GenError> {
    let text = write_instance_string(inst)?;
    std::fs::write(path, text)?;
    Ok(())
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { lines, pos: 0 }
    }

    fn err<T>(&self, line: usize, field: &str, message: impl Into<String>) -> Result<T, GenError> {
        Err(GenError::Schema { line, field: field.to_string(), message: message.into() })
    }

    fn next_line(&mut self, field: &str) -> Result<(usize, &'a str), GenError> {
        if self.pos >= self.lines.len() {
            return self.err(self.lines.last().map_or(0, |l| l.0), field, "unexpected end of file");
        }
        let l = self.lines[self.pos];
        self.pos += 1;
        Ok(l)
    }

    /// A line `key tail...`; returns the tail tokens.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), GenError> {
        let (line, text) = self.next_line(key)?;
        let mut toks = text.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok((line, toks.collect())),
            Some(other) => self.err(line, key, format!("expected '{key}', found '{other}'")),
            None => self.err(line, key, "empty line"),
        }
    }

    fn parse_f(&self, line: usize, field: &str, tok: &str) -> Result<f64, GenError> {
        let v = match tok {
            "inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            _ => tok
                .parse::<f64>()
                .map_err(|e| GenError::Schema { line, field: field.into(), message: e.to_string() })?,
        };
        if v.is_nan() {
            return self.err(line, field, "NaN not allowed");
        }
        Ok(v)
    }

    fn parse_usize(&self, line: usize, field: &str, tok: &str) -> Result<usize, GenError> {
        tok.parse::<usize>()
            .map_err(|e| GenError::Schema { line, field: field.into(), message: e.to_string() })
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize, GenError> {
        let (line, toks) = self.keyed(key)?;
        if toks.len() != 1 {
            return self.err(line, key, format!("expected one value, found {}", toks.len()));
        }
        self.parse_usize(line, key, toks[0])
    }

    fn keyed_f(&mut self, key: &str) -> Result<f64, GenError> {
        let (line, toks) = self.keyed(key)?;
        if toks.len() != 1 {
            return self.err(line, key, format!("expected one value, found {}", toks.len()));
        }
        self.parse_f(line, key, toks[0])
    }

    fn keyed_fvec(&mut self, key: &str, expect: usize) -> Result<Vec<f64>, GenError> {
        let (line, toks) = self.keyed(key)?;
        if toks.len() != expect {
            return self.err(line, key, format!("expected {expect} values, found {}", toks.len()));
        }
        toks.iter().map(|t| self.parse_f(line, key, t)).collect()
    }

    fn matrix(&mut self, key: &str, nrows: usize, ncols: usize) -> Result<SparseMatrix, GenError> {
        let nnz = self.keyed_usize(key)?;
        let mut triples = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (line, text) = self.next_line(key)?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 3 {
                return self.err(line, key, "expected 'row col value'");
            }
            let r = self.parse_usize(line, key, toks[0])?;
            let c = self.parse_usize(line, key, toks[1])?;
            let v = self.parse_f(line, key, toks[2])?;
            if r >= nrows || c >= ncols {
                return self.err(line, key, format!("entry ({r}, {c}) outside {nrows}x{ncols}"));
            }
            triples.push((r, c, v));
        }
        Ok(SparseMatrix::from_triples(nrows, ncols, &triples))
    }
}

/// Parse an instance from its text form.
pub fn read_instance_str(text: &str) -> Result<CcmpInstance, GenError> {
    let mut p = Parser::new(text);
    let (line, header) = p.next_line("header")?;
    if header != "ccmp-instance v1" {
        return p.err(line, "header", format!("expected 'ccmp-instance v1', found '{header}'"));
    }
    let epsilon = p.keyed_f("epsilon")?;
    let n = p.keyed_usize("vars")?;
    let mut x_specs = Vec::with_capacity(n);
    for j in 0..n {
        let (line, toks) = p.keyed("var")?;
        if toks.len() != 4 {
            return p.err(line, "var", "expected 'var j kind lo hi'");
        }
        let idx = p.parse_usize(line, "var", toks[0])?;
        if idx != j {
            return p.err(line, "var", format!("expected index {j}, found {idx}"));
        }
        let kind = match toks[1] {
            "cont" => VarKind::Continuous,
            "bin" => VarKind::Binary,
            "int" => VarKind::GeneralInteger,
            other => return p.err(line, "var", format!("unknown kind '{other}'")),
        };
        let lower = p.parse_f(line, "var", toks[2])?;
        let upper = p.parse_f(line, "var", toks[3])?;
        x_specs.push(VarSpec { kind, lower, upper });
    }
    let cost = p.keyed_fvec("obj", n)?;
    let i1 = p.keyed_usize("rows")?;
    let first_stage_rows = p.matrix("amat", i1, n)?;
    let first_stage_rhs = p.keyed_fvec("rhs", i1)?;
    let m = p.keyed_usize("recourse")?;
    let kk = p.keyed_usize("scenarios")?;
    if kk == 0 {
        return p.err(0, "scenarios", "at least one scenario required");
    }
    // Scenario row count is discovered from the first block's hvec length;
    // simpler: parse all matrices with a deferred row bound. The format
    // carries no separate I2 field, so read the first scenario loosely.
    let mut scenarios = Vec::with_capacity(kk);
    let mut i2: Option<usize> = None;
    for k in 0..kk {
        let (line, toks) = p.keyed("scenario")?;
        if toks.len() != 1 || p.parse_usize(line, "scenario", toks[0])? != k {
            return p.err(line, "scenario", format!("expected 'scenario {k}'"));
        }
        let prob = p.keyed_f("prob")?;
        let bound = i2.unwrap_or(usize::MAX);
        let g = p.matrix_deferred("gmat", bound, n)?;
        let h = p.matrix_deferred("hmat", bound, m)?;
        let (line, toks) = p.keyed("hvec")?;
        let rhs: Vec<f64> =
            toks.iter().map(|t| p.parse_f(line, "hvec", t)).collect::<Result<_, _>>()?;
        if let Some(e) = i2 {
            if rhs.len() != e {
                return p.err(line, "hvec", format!("expected {e} values, found {}", rhs.len()));
            }
        }
        let rows = rhs.len();
        i2 = Some(rows);
        let cost = p.keyed_fvec("fvec", m)?;
        let fit = |mx: SparseMatrix, ncols: usize| -> Result<SparseMatrix, GenError> {
            for row in &mx.rows[rows.min(mx.rows.len())..] {
                if !row.is_empty() {
                    return Err(GenError::Schema {
                        line,
                        field: "gmat/hmat".into(),
                        message: format!("matrix entries beyond {rows} rows"),
                    });
                }
            }
            let mut rws = mx.rows;
            rws.resize(rows, Vec::new());
            rws.truncate(rows);
            Ok(SparseMatrix { nrows: rows, ncols, rows: rws })
        };
        scenarios.push(Scenario {
            prob,
            first_stage: fit(g, n)?,
            recourse: fit(h, m)?,
            rhs,
            cost,
        });
    }
    let (line, tail) = p.next_line("end")?;
    if tail != "end" {
        return p.err(line, "end", format!("expected 'end', found '{tail}'"));
    }
    let inst = CcmpInstance {
        cost,
        first_stage_rows,
        first_stage_rhs,
        x_specs,
        recourse_dim: m,
        scenarios,
        epsilon,
    };
    let violations = validate_instance(&inst);
    if let Some(v) = violations.first() {
        return Err(GenError::InvalidInstance(v.to_string()));
    }
    Ok(inst)
}

impl<'a> Parser<'a> {
    /// Like [`Parser::matrix`] but with a row bound discovered later; rows are
    /// sized to the maximum index seen.
    fn matrix_deferred(&mut self, key: &str, max_rows: usize, ncols: usize) -> Result<SparseMatrix, GenError> {
        let nnz = self.keyed_usize(key)?;
        let mut triples = Vec::with_capacity(nnz);
        let mut top = 0usize;
        for _ in 0..nnz {
            let (line, text) = self.next_line(key)?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 3 {
                return self.err(line, key, "expected 'row col value'");
            }
            let r = self.parse_usize(line, key, toks[0])?;
            let c = self.parse_usize(line, key, toks[1])?;
            let v = self.parse_f(line, key, toks[2])?;
            if (max_rows != usize::MAX && r >= max_rows) || c >= ncols {
                return self.err(line, key, format!("entry ({r}, {c}) out of range"));
            }
            top = top.max(r + 1);
            triples.push((r, c, v));
        }
        Ok(SparseMatrix::from_triples(top, ncols, &triples))
    }
}

pub fn read_instance(path: &Path) -> Result<CcmpInstance, GenError> {
    let text = std::fs::read_to_string(path)?;
    read_instance_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::fixtures::{conflict1, tiny1, tiny2};
    use crate::gen::{or_instance, random_instance, DurationGroup, OrSpec, RandomSetup, RandomSpec, XKind};

    #[test]
    fn tiny_roundtrip_is_identity() {
        for inst in [tiny1(0.5), tiny2(0.25), conflict1(0.0)] {
            let text = write_instance_string(&inst).unwrap();
            let back = read_instance_str(&text).unwrap();
            assert_eq!(back, inst);
        }
    }

    #[test]
    fn generated_roundtrip_is_identity() {
        let inst = random_instance(&RandomSpec::new(RandomSetup::T1, 3, XKind::Mixed, 11));
        let text = write_instance_string(&inst).unwrap();
        assert_eq!(read_instance_str(&text).unwrap(), inst);
        let or = or_instance(&OrSpec::desk(DurationGroup::Wide, 2, 0.25));
        let text = write_instance_string(&or).unwrap();
        assert_eq!(read_instance_str(&text).unwrap(), or);
    }

    #[test]
    fn serialization_is_byte_deterministic() {
        let spec = RandomSpec::new(RandomSetup::T1, 4, XKind::Binary, 5);
        let a = write_instance_string(&random_instance(&spec)).unwrap();
        let b = write_instance_string(&random_instance(&spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_epsilon_is_a_schema_error() {
        let text = write_instance_string(&tiny1(0.5)).unwrap();
        let broken: String =
            text.lines().filter(|l| !l.starts_with("epsilon")).collect::<Vec<_>>().join("\n");
        match read_instance_str(&broken) {
            Err(GenError::Schema { field, .. }) => assert_eq!(field, "epsilon"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn nan_coefficient_rejected() {
        let text = write_instance_string(&tiny1(0.5)).unwrap();
        let broken = text.replace("epsilon 0.5", "epsilon NaN");
        assert!(matches!(read_instance_str(&broken), Err(GenError::Schema { .. })));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = write_instance_string(&tiny2(0.5)).unwrap();
        let commented = format!("# header comment\n\n{}", text.replace("prob", "# note\nprob"));
        assert_eq!(read_instance_str(&commented).unwrap(), tiny2(0.5));
    }
}
