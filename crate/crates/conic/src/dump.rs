//! Line-oriented text format for programs.
//!
//! ```text
//! conic 1
//! vars <n>
//! objective <expr>
//! vector <name> <start> <len>
//! matrix <name> <start> <dim>
//! scalar <name> <index>
//! precoder <name>
//! lift <vector> <matrix>
//! nonneg <label> <expr>
//! soc <label> <m>          followed by `t <expr>` and m lines `v <expr>`
//! psd <label> <dim> <nnz>  followed by nnz lines `e <row> <col> <expr>`
//! end
//! ```
//!
//! An `<expr>` is `<constant> <nterms> <idx>:<coef> ...`. Floats are written
//! in shortest round-trip form, so dump followed by parse is lossless.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;

use crate::error::ParseError;
use crate::expr::{LinExpr, SymAffine};
use crate::program::{ConicProgram, Constraint, ConstraintKind, Lift, MatVar, VarBlock};

fn write_expr(out: &mut String, e: &LinExpr) {
    write!(out, "{} {}", e.constant, e.n_terms()).unwrap();
    for (i, c) in e.terms() {
        write!(out, " {i}:{c}").unwrap();
    }
}

pub fn dump(p: &ConicProgram) -> String {
    let mut out = String::new();
    writeln!(out, "conic 1").unwrap();
    writeln!(out, "vars {}", p.n_vars).unwrap();
    out.push_str("objective ");
    write_expr(&mut out, &p.objective);
    out.push('\n');
    for v in &p.meta.vectors {
        writeln!(out, "vector {} {} {}", v.name, v.start, v.len).unwrap();
    }
    for m in &p.meta.matrices {
        writeln!(out, "matrix {} {} {}", m.name, m.start, m.dim).unwrap();
    }
    for s in &p.meta.scalars {
        writeln!(out, "scalar {} {}", s.name, s.start).unwrap();
    }
    for name in &p.meta.precoders {
        writeln!(out, "precoder {name}").unwrap();
    }
    for l in &p.meta.lifts {
        writeln!(out, "lift {} {}", l.vector, l.matrix).unwrap();
    }
    for c in &p.constraints {
        match &c.kind {
            ConstraintKind::Nonneg(e) => {
                write!(out, "nonneg {} ", c.label).unwrap();
                write_expr(&mut out, e);
                out.push('\n');
            }
            ConstraintKind::Soc { t, v } => {
                writeln!(out, "soc {} {}", c.label, v.len()).unwrap();
                out.push_str("t ");
                write_expr(&mut out, t);
                out.push('\n');
                for e in v {
                    out.push_str("v ");
                    write_expr(&mut out, e);
                    out.push('\n');
                }
            }
            ConstraintKind::Psd(m) => {
                let nnz = m.entries().count();
                writeln!(out, "psd {} {} {}", c.label, m.dim(), nnz).unwrap();
                for (r, col, e) in m.entries() {
                    write!(out, "e {r} {col} ").unwrap();
                    write_expr(&mut out, e);
                    out.push('\n');
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Some((i + 1, line.split_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, head: &str) -> Result<(usize, Vec<&'a str>), ParseError> {
        match self.next() {
            Some((ln, toks)) if toks[0] == head => Ok((ln, toks)),
            Some((ln, toks)) => Err(err(ln, format!("expected `{head}`, found `{}`", toks[0]))),
            None => Err(err(self.last, format!("unexpected end of input, expected `{head}`"))),
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(ln: usize, tok: Option<&&str>, what: &str) -> Result<T, ParseError> {
    tok.ok_or_else(|| err(ln, format!("missing {what}")))?
        .parse()
        .map_err(|_| err(ln, format!("bad {what}")))
}

fn parse_expr(ln: usize, toks: &[&str]) -> Result<LinExpr, ParseError> {
    let constant: f64 = num(ln, toks.first(), "constant")?;
    let n: usize = num(ln, toks.get(1), "term count")?;
    if toks.len() != n + 2 {
        return Err(err(ln, format!("expected {n} terms, found {}", toks.len().saturating_sub(2))));
    }
    let mut e = LinExpr::constant(constant);
    for t in &toks[2..] {
        let (i, c) = t
            .split_once(':')
            .ok_or_else(|| err(ln, format!("bad term `{t}`")))?;
        let i: usize = i.parse().map_err(|_| err(ln, format!("bad index `{i}`")))?;
        let c: f64 = c.parse().map_err(|_| err(ln, format!("bad coefficient `{c}`")))?;
        e.add_term(i, c);
    }
    Ok(e)
}

pub fn parse(text: &str) -> Result<ConicProgram, ParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
        last: 0,
    };
    let (ln, toks) = lines.expect("conic")?;
    if toks.get(1) != Some(&"1") {
        return Err(err(ln, "unsupported format version"));
    }
    let (ln, toks) = lines.expect("vars")?;
    let mut p = ConicProgram {
        n_vars: num(ln, toks.get(1), "variable count")?,
        ..Default::default()
    };
    let (ln, toks) = lines.expect("objective")?;
    p.objective = parse_expr(ln, &toks[1..])?;
    loop {
        let (ln, toks) = lines
            .next()
            .ok_or_else(|| err(lines.last, "missing `end`"))?;
        let name = || -> Result<String, ParseError> {
            toks.get(1)
                .map(|s| s.to_string())
                .ok_or_else(|| err(ln, "missing name"))
        };
        match toks[0] {
            "end" => break,
            "vector" => p.meta.vectors.push(VarBlock {
                name: name()?,
                start: num(ln, toks.get(2), "start")?,
                len: num(ln, toks.get(3), "length")?,
            }),
            "matrix" => p.meta.matrices.push(MatVar {
                name: name()?,
                start: num(ln, toks.get(2), "start")?,
                dim: num(ln, toks.get(3), "dimension")?,
            }),
            "scalar" => p.meta.scalars.push(VarBlock {
                name: name()?,
                start: num(ln, toks.get(2), "index")?,
                len: 1,
            }),
            "precoder" => p.meta.precoders.push(name()?),
            "lift" => p.meta.lifts.push(Lift {
                vector: name()?,
                matrix: toks
                    .get(2)
                    .ok_or_else(|| err(ln, "missing matrix name"))?
                    .to_string(),
            }),
            "nonneg" => p.constraints.push(Constraint {
                label: name()?,
                kind: ConstraintKind::Nonneg(parse_expr(ln, &toks[2..])?),
            }),
            "soc" => {
                let m: usize = num(ln, toks.get(2), "cone size")?;
                let (tl, tt) = lines.expect("t")?;
                let t = parse_expr(tl, &tt[1..])?;
                let mut v = Vec::with_capacity(m);
                for _ in 0..m {
                    let (vl, vt) = lines.expect("v")?;
                    v.push(parse_expr(vl, &vt[1..])?);
                }
                p.constraints.push(Constraint {
                    label: name()?,
                    kind: ConstraintKind::Soc { t, v },
                });
            }
            "psd" => {
                let dim: usize = num(ln, toks.get(2), "dimension")?;
                let nnz: usize = num(ln, toks.get(3), "entry count")?;
                let mut m = SymAffine::zeros(dim);
                for _ in 0..nnz {
                    let (el, et) = lines.expect("e")?;
                    let r: usize = num(el, et.get(1), "row")?;
                    let c: usize = num(el, et.get(2), "column")?;
                    if r >= dim || c >= dim {
                        return Err(err(el, "entry outside block"));
                    }
                    m.add(r, c, &parse_expr(el, &et[3..])?);
                }
                p.constraints.push(Constraint {
                    label: name()?,
                    kind: ConstraintKind::Psd(m),
                });
            }
            other => return Err(err(ln, format!("unknown record `{other}`"))),
        }
    }
    let max_idx = p
        .constraints
        .iter()
        .filter_map(|c| match &c.kind {
            ConstraintKind::Nonneg(e) => e.max_index(),
            ConstraintKind::Soc { t, v } => v.iter().filter_map(LinExpr::max_index).chain(t.max_index()).max(),
            ConstraintKind::Psd(m) => m.max_index(),
        })
        .chain(p.objective.max_index())
        .max();
    if let Some(i) = max_idx {
        if i >= p.n_vars {
            return Err(err(lines.last, format!("variable index {i} exceeds {}", p.n_vars)));
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::lift_rank_one;

    #[test]
    fn round_trip() {
        let mut p = ConicProgram::new();
        let w = p.add_vector("w", 2).unwrap();
        p.mark_precoder("w").unwrap();
        let big_w = lift_rank_one(&mut p, &w, "W").unwrap();
        p.add_soc("cone", LinExpr::constant(0.1) + w.expr(0), vec![w.expr(1) * (1.0 / 3.0)])
            .unwrap();
        p.add_le("cap", big_w.trace(), LinExpr::constant(2.5)).unwrap();
        p.minimize(big_w.trace()).unwrap();
        let text = dump(&p);
        assert_eq!(parse(&text).unwrap(), p);
    }

    #[test]
    fn rejects_truncated_input() {
        let e = parse("conic 1\nvars 2\nobjective 0 0\nnonneg a 1 1 0:1\n").unwrap_err();
        assert!(e.msg.contains("end"));
    }
}
