//! Line-oriented text formats.
//!
//! A hierarchy file:
//!
//! ```text
//! # comment
//! nz 2
//! rho 1.0000000000000000e-3
//! level
//! -inf <= 1.0000000000000000e0 0.0000000000000000e0 <= 0.0000000000000000e0
//! level
//! 1.0000000000000000e0 <= 1.0000000000000000e0 0.0000000000000000e0 <= inf weight 2.0000000000000000e0
//! objective
//! h 1.0000000000000000e0 0.0000000000000000e0
//! h 0.0000000000000000e0 1.0000000000000000e0
//! f 0.0000000000000000e0 0.0000000000000000e0
//! ```
//!
//! Each `level` line opens a level (the first is the hard one) and every
//! following row line belongs to it. The `objective` block is optional and
//! must come last: `nz` lines of `h` followed by one `f` line. Numbers are
//! written with 17 significant digits, so values survive a round trip
//! exactly, and `inf`/`-inf` mark absent sides.
//!
//! A solution file mirrors it: a `z` line, one `eps <level>` line per level
//! (1-based; the hard level reports zeros), an optional `u` line with the
//! objective-stage minimizer, then statistics as `# key=value` comments.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hierarchy::HierarchySolution;
use crate::model::{Hierarchy, HierarchyLevel, Polyhedron};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Quadratic cost `1/2 u^T H u + f^T u` attached to a hierarchy file.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub hess: DMatrix<f64>,
    pub lin: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyFile {
    pub hierarchy: Hierarchy,
    pub objective: Option<Objective>,
}

pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

fn push_numbers<'a>(out: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.push(' ');
        out.push_str(&format_number(*v));
    }
}

pub fn write_hierarchy(file: &HierarchyFile) -> String {
    let h = &file.hierarchy;
    let mut out = String::new();
    let _ = writeln!(out, "nz {}", h.dim());
    let _ = writeln!(out, "rho {}", format_number(h.rho));
    for level in &h.levels {
        out.push_str("level\n");
        let p = &level.poly;
        for r in 0..p.nrows() {
            out.push_str(&format_number(p.lower()[r]));
            out.push_str(" <=");
            push_numbers(&mut out, p.a().row(r).iter());
            out.push_str(" <= ");
            out.push_str(&format_number(p.upper()[r]));
            if level.weights[r] != 1.0 {
                out.push_str(" weight ");
                out.push_str(&format_number(level.weights[r]));
            }
            out.push('\n');
        }
    }
    if let Some(obj) = &file.objective {
        out.push_str("objective\n");
        for r in 0..obj.hess.nrows() {
            out.push('h');
            push_numbers(&mut out, obj.hess.row(r).iter());
            out.push('\n');
        }
        out.push('f');
        push_numbers(&mut out, obj.lin.iter());
        out.push('\n');
    }
    out
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token { text: &line[s..i], column: line[..s].chars().count() + 1 });
                start = None;
            }
            _ => {}
        }
    }
    out
}

struct Parser {
    line: usize,
    line_len: usize,
}

impl Parser {
    fn err(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column, message: message.into() }
    }

    fn number(&self, t: &Token) -> Result<f64, ParseError> {
        let v: f64 = match t.text {
            "inf" | "+inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            s => s.parse().map_err(|_| self.err(t.column, format!("expected a number, found `{s}`")))?,
        };
        if v.is_nan() {
            return Err(self.err(t.column, "NaN is not allowed"));
        }
        Ok(v)
    }

    fn finite(&self, t: &Token) -> Result<f64, ParseError> {
        let v = self.number(t)?;
        if !v.is_finite() {
            return Err(self.err(t.column, "expected a finite number"));
        }
        Ok(v)
    }

    fn end_column(&self) -> usize {
        self.line_len + 1
    }

    fn vector(&self, toks: &[Token], n: usize) -> Result<Vec<f64>, ParseError> {
        if toks.len() != n {
            let col = toks.get(n).map_or(self.end_column(), |t| t.column);
            return Err(self.err(col, format!("expected {n} numbers, found {}", toks.len())));
        }
        toks.iter().map(|t| self.finite(t)).collect()
    }
}

#[derive(Default)]
struct LevelRows {
    a: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    weights: Vec<f64>,
}

pub fn parse_hierarchy(text: &str) -> Result<HierarchyFile, ParseError> {
    let mut p = Parser { line: 0, line_len: 0 };
    let mut nz: Option<usize> = None;
    let mut rho: Option<f64> = None;
    let mut levels: Vec<LevelRows> = Vec::new();
    let mut hess_rows: Vec<Vec<f64>> = Vec::new();
    let mut lin: Option<Vec<f64>> = None;
    let mut in_objective = false;

    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        p.line_len = raw.chars().count();
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokens(content);
        let Some(first) = toks.first() else { continue };
        if lin.is_some() {
            return Err(p.err(first.column, "nothing may follow the `f` line"));
        }
        match first.text {
            "nz" | "rho" if !levels.is_empty() || in_objective => {
                return Err(p.err(first.column, format!("`{}` must precede the first level", first.text)));
            }
            "nz" => {
                if nz.is_some() {
                    return Err(p.err(first.column, "duplicate `nz`"));
                }
                let t = toks.get(1).ok_or_else(|| p.err(p.end_column(), "missing dimension"))?;
                let n: usize = t.text.parse().map_err(|_| p.err(t.column, "dimension must be a positive integer"))?;
                if n == 0 {
                    return Err(p.err(t.column, "dimension must be a positive integer"));
                }
                if let Some(extra) = toks.get(2) {
                    return Err(p.err(extra.column, "unexpected token"));
                }
                nz = Some(n);
            }
            "rho" => {
                if rho.is_some() {
                    return Err(p.err(first.column, "duplicate `rho`"));
                }
                let t = toks.get(1).ok_or_else(|| p.err(p.end_column(), "missing value"))?;
                let v = p.finite(t)?;
                if v <= 0.0 {
                    return Err(p.err(t.column, "rho must be positive"));
                }
                if let Some(extra) = toks.get(2) {
                    return Err(p.err(extra.column, "unexpected token"));
                }
                rho = Some(v);
            }
            "level" => {
                if in_objective {
                    return Err(p.err(first.column, "levels must precede the objective"));
                }
                if nz.is_none() || rho.is_none() {
                    return Err(p.err(first.column, "`nz` and `rho` must precede the first level"));
                }
                if let Some(extra) = toks.get(1) {
                    return Err(p.err(extra.column, "unexpected token"));
                }
                levels.push(LevelRows::default());
            }
            "objective" => {
                if in_objective {
                    return Err(p.err(first.column, "duplicate objective"));
                }
                if levels.is_empty() {
                    return Err(p.err(first.column, "objective before any level"));
                }
                if let Some(extra) = toks.get(1) {
                    return Err(p.err(extra.column, "unexpected token"));
                }
                in_objective = true;
            }
            "h" if in_objective => {
                let n = nz.unwrap_or(0);
                if hess_rows.len() == n {
                    return Err(p.err(first.column, format!("more than {n} `h` rows")));
                }
                hess_rows.push(p.vector(&toks[1..], n)?);
            }
            "f" if in_objective => {
                let n = nz.unwrap_or(0);
                if hess_rows.len() != n {
                    return Err(p.err(first.column, format!("expected {n} `h` rows before `f`")));
                }
                lin = Some(p.vector(&toks[1..], n)?);
            }
            _ if in_objective => return Err(p.err(first.column, "expected `h` or `f`")),
            _ => {
                let Some(level) = levels.last_mut() else {
                    return Err(p.err(first.column, format!("unexpected `{}` before the first level", first.text)));
                };
                parse_row(&p, &toks, nz.unwrap_or(0), level)?;
            }
        }
    }

    p.line += 1;
    p.line_len = 0;
    let n = nz.ok_or_else(|| p.err(1, "missing `nz`"))?;
    let rho = rho.ok_or_else(|| p.err(1, "missing `rho`"))?;
    if levels.is_empty() {
        return Err(p.err(1, "no levels"));
    }
    if in_objective && lin.is_none() {
        return Err(p.err(1, "objective block is missing its `f` line"));
    }
    let levels = levels
        .into_iter()
        .map(|l| {
            let m = l.lower.len();
            let poly = Polyhedron::new(
                DMatrix::from_row_slice(m, n, &l.a),
                DVector::from_vec(l.lower),
                DVector::from_vec(l.upper),
            )
            .expect("row lengths were checked while parsing");
            HierarchyLevel::with_weights(poly, DVector::from_vec(l.weights)).expect("one weight per row")
        })
        .collect();
    let objective = lin.map(|f| Objective {
        hess: DMatrix::from_fn(n, n, |r, c| hess_rows[r][c]),
        lin: DVector::from_vec(f),
    });
    Ok(HierarchyFile { hierarchy: Hierarchy::new(levels, rho), objective })
}

fn parse_row(p: &Parser, toks: &[Token], n: usize, level: &mut LevelRows) -> Result<(), ParseError> {
    // lo <= a_1 .. a_n <= hi [weight w]
    let expect = |i: usize, what: &str| -> Result<&Token, ParseError> {
        toks.get(i).ok_or_else(|| p.err(p.end_column(), format!("expected {what}")))
    };
    let lo = p.number(&toks[0])?;
    let le = expect(1, "`<=`")?;
    if le.text != "<=" {
        return Err(p.err(le.column, format!("expected `<=`, found `{}`", le.text)));
    }
    let mut coeffs = Vec::with_capacity(n);
    for i in 0..n {
        let t = expect(2 + i, &format!("{n} coefficients"))?;
        if t.text == "<=" {
            return Err(p.err(t.column, format!("expected {n} coefficients, found {i}")));
        }
        coeffs.push(p.finite(t)?);
    }
    let le = expect(2 + n, "`<=`")?;
    if le.text != "<=" {
        return Err(p.err(le.column, format!("expected `<=` after {n} coefficients, found `{}`", le.text)));
    }
    let hi = p.number(expect(3 + n, "an upper bound")?)?;
    let mut weight = 1.0;
    if let Some(t) = toks.get(4 + n) {
        if t.text != "weight" {
            return Err(p.err(t.column, format!("expected `weight`, found `{}`", t.text)));
        }
        let wt = expect(5 + n, "a weight")?;
        weight = p.finite(wt)?;
        if weight <= 0.0 {
            return Err(p.err(wt.column, "weight must be positive"));
        }
        if let Some(extra) = toks.get(6 + n) {
            return Err(p.err(extra.column, "unexpected token"));
        }
    }
    level.a.extend(coeffs);
    level.lower.push(lo);
    level.upper.push(hi);
    level.weights.push(weight);
    Ok(())
}

/// Solution file text. `u` is the objective-stage minimizer, if one was
/// computed. Wall times are left out so the file is reproducible.
pub fn write_solution(h: &Hierarchy, sol: &HierarchySolution, u: Option<&DVector<f64>>) -> String {
    let mut out = String::from("z");
    push_numbers(&mut out, sol.z_star.iter());
    out.push('\n');
    for i in 0..h.num_levels() {
        let _ = write!(out, "eps {}", i + 1);
        push_numbers(&mut out, sol.eps_for_level(h, i).iter());
        out.push('\n');
    }
    if let Some(u) = u {
        out.push('u');
        push_numbers(&mut out, u.iter());
        out.push('\n');
    }
    let _ = writeln!(out, "# levels={}", h.num_levels());
    let iters: Vec<String> = sol.stats.levels.iter().map(|l| l.iterations.to_string()).collect();
    let _ = writeln!(out, "# iterations={}", iters.join(","));
    let _ = writeln!(out, "# total_iterations={}", sol.stats.total_iterations());
    if let Some(k) = sol.stats.objective_iterations {
        let _ = writeln!(out, "# objective_iterations={k}");
    }
    let _ = writeln!(out, "# working_set_size={}", sol.working_set.len());
    out
}

/// Vectors read back from a solution file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolutionFile {
    pub z: Vec<f64>,
    /// Perturbation of every level, first (hard) level included.
    pub eps: Vec<Vec<f64>>,
    pub u: Option<Vec<f64>>,
}

pub fn parse_solution(text: &str) -> Result<SolutionFile, ParseError> {
    let mut p = Parser { line: 0, line_len: 0 };
    let mut sol = SolutionFile::default();
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        p.line_len = raw.chars().count();
        let toks = tokens(raw.split('#').next().unwrap_or(""));
        let Some(first) = toks.first() else { continue };
        let values = |from: usize| toks[from..].iter().map(|t| p.number(t)).collect::<Result<Vec<f64>, _>>();
        match first.text {
            "z" => sol.z = values(1)?,
            "u" => sol.u = Some(values(1)?),
            "eps" => {
                let t = toks.get(1).ok_or_else(|| p.err(p.end_column(), "missing level number"))?;
                let level: usize = t.text.parse().map_err(|_| p.err(t.column, "level must be an integer"))?;
                if level != sol.eps.len() + 1 {
                    return Err(p.err(t.column, format!("expected level {}", sol.eps.len() + 1)));
                }
                sol.eps.push(values(2)?);
            }
            other => return Err(p.err(first.column, format!("unexpected `{other}`"))),
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_D: &str = "nz 1\nrho 1e-3\nlevel\n-inf <= 1 <= 0\nlevel\n1 <= 1 <= inf weight 2\n";

    #[test]
    fn parses_small_file() {
        let f = parse_hierarchy(ONE_D).unwrap();
        let h = &f.hierarchy;
        assert_eq!(h.num_levels(), 2);
        assert_eq!(h.rho, 1e-3);
        assert_eq!(h.levels[0].poly.lower()[0], f64::NEG_INFINITY);
        assert_eq!(h.levels[1].poly.upper()[0], f64::INFINITY);
        assert_eq!(h.levels[1].weights[0], 2.0);
        assert!(f.objective.is_none());
    }

    #[test]
    fn reports_positions() {
        let e = parse_hierarchy("nz 2\nrho 1\nlevel\n0 <= 1 x <= 1\n").unwrap_err();
        assert_eq!((e.line, e.column), (4, 8));
        let e = parse_hierarchy("nz 2\nrho 1\nlevel\n0 <= 1 <= 1\n").unwrap_err();
        assert_eq!((e.line, e.column), (4, 8));
        let e = parse_hierarchy("nz 1\nlevel\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 1));
        let e = parse_hierarchy("nz 1\nrho 1\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn objective_block() {
        let text = format!("{ONE_D}objective\nh 2\nf -1\n");
        let f = parse_hierarchy(&text).unwrap();
        let obj = f.objective.as_ref().unwrap();
        assert_eq!(obj.hess[(0, 0)], 2.0);
        assert_eq!(obj.lin[0], -1.0);
        assert!(parse_hierarchy(&format!("{ONE_D}objective\nh 2\n")).is_err());
        assert!(parse_hierarchy(&format!("{ONE_D}objective\nf 1\n")).is_err());
    }

    #[test]
    fn writer_is_canonical() {
        let f = parse_hierarchy(ONE_D).unwrap();
        let text = write_hierarchy(&f);
        assert_eq!(
            text,
            "nz 1\nrho 1.0000000000000000e-3\nlevel\n-inf <= 1.0000000000000000e0 <= 0.0000000000000000e0\nlevel\n\
             1.0000000000000000e0 <= 1.0000000000000000e0 <= inf weight 2.0000000000000000e0\n"
        );
        assert_eq!(write_hierarchy(&parse_hierarchy(&text).unwrap()), text);
    }
}
