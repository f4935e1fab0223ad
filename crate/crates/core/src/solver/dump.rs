//! Plain-text dump of an LP/MILP instance for bug reports.
//!
//! The layout is documented in `docs/lp_dump_format.md`. Numbers are written
//! with Rust's shortest round-trip formatting, infinities as `inf`/`-inf`.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::lp::{ConstraintSense, LinearProgram};
use super::milp::MixedIntegerProgram;

const MAGIC: &str = "adol-lp 1";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn sense_token(s: ConstraintSense) -> &'static str {
    match s {
        ConstraintSense::Le => "<=",
        ConstraintSense::Eq => "=",
        ConstraintSense::Ge => ">=",
    }
}

pub fn write_lp(lp: &LinearProgram) -> String {
    write_inner(lp, None)
}

pub fn write_milp(mip: &MixedIntegerProgram) -> String {
    write_inner(&mip.base, Some(&mip.binaries))
}

fn write_inner(lp: &LinearProgram, binaries: Option<&[usize]>) -> String {
    let mut out = String::new();
    let join = |vals: &[f64]| vals.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "objective {}", lp.num_vars()).unwrap();
    writeln!(out, "{}", join(&lp.objective)).unwrap();
    writeln!(out, "rows {}", lp.num_rows()).unwrap();
    for i in 0..lp.num_rows() {
        writeln!(out, "{} {} : {}", sense_token(lp.senses[i]), num(lp.rhs[i]), join(&lp.rows[i])).unwrap();
    }
    writeln!(out, "bounds").unwrap();
    for j in 0..lp.num_vars() {
        writeln!(out, "{} {}", num(lp.lower[j]), num(lp.upper[j])).unwrap();
    }
    if let Some(bin) = binaries {
        writeln!(out, "binaries {}", bin.len()).unwrap();
        writeln!(out, "{}", bin.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, DumpError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim())
            }
            None => Err(self.err("unexpected end of input")),
        }
    }
    fn err(&self, msg: impl Into<String>) -> DumpError {
        DumpError::Parse { line: self.last, msg: msg.into() }
    }
    fn header(&mut self, key: &str) -> Result<usize, DumpError> {
        let l = self.next()?;
        let rest = l.strip_prefix(key).ok_or_else(|| self.err(format!("expected `{key}`")))?;
        rest.trim().parse().map_err(|_| self.err(format!("bad count after `{key}`")))
    }
    fn numbers<T: FromStr>(&self, s: &str, expect: usize) -> Result<Vec<T>, DumpError> {
        let vals: Vec<T> = s
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != expect {
            return Err(self.err(format!("expected {expect} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}

fn parse_inner(text: &str) -> Result<(LinearProgram, Option<Vec<usize>>), DumpError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    if lines.next()? != MAGIC {
        return Err(lines.err(format!("expected `{MAGIC}`")));
    }
    let n = lines.header("objective")?;
    let l = lines.next()?;
    let objective = lines.numbers::<f64>(l, n)?;
    let m = lines.header("rows")?;
    let mut lp = LinearProgram::new(n);
    lp.objective = objective;
    for _ in 0..m {
        let l = lines.next()?;
        let (head, coeffs) = l.split_once(':').ok_or_else(|| lines.err("missing `:`"))?;
        let mut head = head.split_whitespace();
        let sense = match head.next() {
            Some("<=") => ConstraintSense::Le,
            Some("=") => ConstraintSense::Eq,
            Some(">=") => ConstraintSense::Ge,
            _ => return Err(lines.err("bad sense")),
        };
        let rhs: f64 = head.next().and_then(|t| t.parse().ok()).ok_or_else(|| lines.err("bad rhs"))?;
        let row = lines.numbers::<f64>(coeffs, n)?;
        lp.add_row(row, sense, rhs);
    }
    if lines.next()? != "bounds" {
        return Err(lines.err("expected `bounds`"));
    }
    for j in 0..n {
        let l = lines.next()?;
        let b = lines.numbers::<f64>(l, 2)?;
        lp.set_bounds(j, b[0], b[1]);
    }
    let binaries = match lines.inner.next() {
        None => None,
        Some((_, l)) if l.trim().is_empty() => None,
        Some((i, l)) => {
            lines.last = i + 1;
            let k: usize = l
                .trim()
                .strip_prefix("binaries")
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| lines.err("expected `binaries`"))?;
            let l = if k == 0 { lines.inner.next().map_or("", |(_, l)| l) } else { lines.next()? };
            Some(lines.numbers::<usize>(l, k)?)
        }
    };
    Ok((lp, binaries))
}

pub fn read_lp(text: &str) -> Result<LinearProgram, DumpError> {
    parse_inner(text).map(|(lp, _)| lp)
}

pub fn read_milp(text: &str) -> Result<MixedIntegerProgram, DumpError> {
    let (lp, bin) = parse_inner(text)?;
    Ok(MixedIntegerProgram::new(lp, bin.unwrap_or_default()))
}
