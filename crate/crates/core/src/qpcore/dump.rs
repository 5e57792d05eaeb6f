//! Plain-text sparse triplet format for QP problems.
//!
//! ```text
//! cesplan-qp 1
//! dims <n> <m>
//! P <nnz>
//! <row> <col> <value>        (full symmetric matrix, one entry per line)
//! q
//! <value>                    (n lines)
//! A <nnz>
//! <row> <col> <value>
//! l
//! <value>                    (m lines)
//! u
//! <value>                    (m lines)
//! ```
//!
//! Indices are zero-based. Infinite bounds are written as `±1e20`; on read
//! any magnitude at or beyond that is infinite again. Lines starting with
//! `#` and blank lines are ignored.

use std::fmt::Write as _;

use super::{CscMatrix, QpError, QuadraticProgram, INFINITY_SENTINEL};

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unexpected end of input, expected {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Problem(#[from] QpError),
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        format!("{INFINITY_SENTINEL:e}")
    } else if v == f64::NEG_INFINITY {
        format!("{:e}", -INFINITY_SENTINEL)
    } else {
        format!("{v:?}")
    }
}

pub fn write_problem(prob: &QuadraticProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "cesplan-qp 1");
    let _ = writeln!(out, "dims {} {}", prob.n(), prob.m());
    let _ = writeln!(out, "P {}", prob.p().nnz());
    for (r, c, v) in prob.p().triplets() {
        let _ = writeln!(out, "{r} {c} {v:?}");
    }
    let _ = writeln!(out, "q");
    for v in prob.q() {
        let _ = writeln!(out, "{v:?}");
    }
    let _ = writeln!(out, "A {}", prob.a().nnz());
    for (r, c, v) in prob.a().triplets() {
        let _ = writeln!(out, "{r} {c} {v:?}");
    }
    let _ = writeln!(out, "l");
    for &v in prob.l() {
        let _ = writeln!(out, "{}", fmt_bound(v));
    }
    let _ = writeln!(out, "u");
    for &v in prob.u() {
        let _ = writeln!(out, "{}", fmt_bound(v));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &'static str) -> Result<(usize, Vec<&'a str>), DumpError> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((i + 1, t.split_whitespace().collect()));
        }
        Err(DumpError::Truncated(what))
    }

    fn header(&mut self, tag: &'static str, fields: usize) -> Result<Vec<usize>, DumpError> {
        let (line, tok) = self.next(tag)?;
        if tok.first() != Some(&tag) || tok.len() != fields + 1 {
            return Err(DumpError::Parse {
                line,
                msg: format!("expected `{tag}` header with {fields} field(s)"),
            });
        }
        tok[1..]
            .iter()
            .map(|t| {
                t.parse().map_err(|_| DumpError::Parse {
                    line,
                    msg: format!("bad integer `{t}`"),
                })
            })
            .collect()
    }

    fn values(&mut self, what: &'static str, count: usize) -> Result<Vec<f64>, DumpError> {
        (0..count)
            .map(|_| {
                let (line, tok) = self.next(what)?;
                match tok.as_slice() {
                    [v] => parse_f64(v, line),
                    _ => Err(DumpError::Parse {
                        line,
                        msg: "expected one value".into(),
                    }),
                }
            })
            .collect()
    }

    fn triplets(
        &mut self,
        what: &'static str,
        count: usize,
    ) -> Result<Vec<(usize, usize, f64)>, DumpError> {
        (0..count)
            .map(|_| {
                let (line, tok) = self.next(what)?;
                let bad = |msg: &str| DumpError::Parse {
                    line,
                    msg: msg.to_string(),
                };
                match tok.as_slice() {
                    [r, c, v] => Ok((
                        r.parse().map_err(|_| bad("bad row index"))?,
                        c.parse().map_err(|_| bad("bad column index"))?,
                        parse_f64(v, line)?,
                    )),
                    _ => Err(bad("expected `row col value`")),
                }
            })
            .collect()
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, DumpError> {
    s.parse().map_err(|_| DumpError::Parse {
        line,
        msg: format!("bad number `{s}`"),
    })
}

pub fn read_problem(text: &str) -> Result<QuadraticProgram, DumpError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, tok) = lines.next("format header")?;
    if tok != ["cesplan-qp", "1"] {
        return Err(DumpError::Parse {
            line,
            msg: "expected `cesplan-qp 1`".into(),
        });
    }
    let dims = lines.header("dims", 2)?;
    let (n, m) = (dims[0], dims[1]);
    let pnnz = lines.header("P", 1)?[0];
    let ptrip = lines.triplets("P entries", pnnz)?;
    lines.header("q", 0)?;
    let q = lines.values("q values", n)?;
    let annz = lines.header("A", 1)?[0];
    let atrip = lines.triplets("A entries", annz)?;
    lines.header("l", 0)?;
    let l = lines.values("l values", m)?;
    lines.header("u", 0)?;
    let u = lines.values("u values", m)?;

    let check = |trip: &[(usize, usize, f64)], rows: usize, cols: usize, name: &str| {
        trip.iter()
            .all(|&(r, c, _)| r < rows && c < cols)
            .then_some(())
            .ok_or_else(|| QpError::DimensionMismatch(format!("{name} index out of range")))
    };
    check(&ptrip, n, n, "P")?;
    check(&atrip, m, n, "A")?;
    Ok(QuadraticProgram::new(
        CscMatrix::from_triplets(n, n, &ptrip),
        q,
        CscMatrix::from_triplets(m, n, &atrip),
        l,
        u,
    )?)
}
