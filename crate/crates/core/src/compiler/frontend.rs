//! Parser for `.fgg` graph programs.
//!
//! ```text
//! # declarations
//! msg x 4                  # external message, mean/covariance form
//! msg w 2 WeightedMean     # external message in weighted-mean form
//! msg y[8] 1               # array of external messages
//! mat A[8] 1x4             # array of state matrices
//! mat B 4x4
//! out x                    # read back after the program
//!
//! for i in 8
//!   Y = add_b(y[i], n)
//!   x = mult_eq_f(x, Y, A[i])
//! end
//! ```
//!
//! Node functions: `add_f(x, y)`, `add_b(z, y)`, `eq(x, y)`, `mult_f(x, A)`,
//! `mult_b(y, A)`, `mult_eq_f(x, y, A)`, `add_mult_f(x, u, A)`.

use crate::gmp::Param;

use super::CompileError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgDecl {
    pub name: String,
    pub dim: usize,
    pub form: Param,
    /// Element count for arrays.
    pub count: Option<usize>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatDecl {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub count: Option<usize>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Index {
    Lit(usize),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub name: String,
    pub index: Option<Index>,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign { lhs: String, func: String, args: Vec<Arg>, line: usize },
    For { var: String, count: usize, body: Vec<Stmt>, line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub msgs: Vec<MsgDecl>,
    pub mats: Vec<MatDecl>,
    pub outputs: Vec<String>,
    pub body: Vec<Stmt>,
}

impl Graph {
    pub fn msg(&self, name: &str) -> Option<&MsgDecl> {
        self.msgs.iter().find(|m| m.name == name)
    }

    pub fn mat(&self, name: &str) -> Option<&MatDecl> {
        self.mats.iter().find(|m| m.name == name)
    }
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> CompileError {
    CompileError::Parse { line, col, msg: msg.into() }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `name[count]` into its parts.
fn name_and_count(tok: &str, line: usize, col: usize) -> Result<(String, Option<String>), CompileError> {
    match tok.split_once('[') {
        None => {
            if !is_ident(tok) {
                return Err(perr(line, col, format!("bad identifier {tok:?}")));
            }
            Ok((tok.to_string(), None))
        }
        Some((name, rest)) => {
            let inner = rest.strip_suffix(']').ok_or_else(|| perr(line, col, format!("unclosed `[` in {tok:?}")))?;
            if !is_ident(name) {
                return Err(perr(line, col, format!("bad identifier {name:?}")));
            }
            Ok((name.to_string(), Some(inner.trim().to_string())))
        }
    }
}

struct Line<'a> {
    no: usize,
    text: &'a str,
    indent: usize,
}

/// Parses a graph program.
pub fn parse_graph(src: &str) -> Result<Graph, CompileError> {
    let lines: Vec<Line> = src
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let code = l.split('#').next().unwrap_or("");
            let t = code.trim();
            (!t.is_empty()).then(|| Line { no: i + 1, text: t, indent: code.len() - code.trim_start().len() })
        })
        .collect();
    let mut g = Graph::default();
    let mut pos = 0;
    g.body = parse_block(&lines, &mut pos, &mut g, 0)?;
    if pos < lines.len() {
        let l = &lines[pos];
        return Err(perr(l.no, l.indent + 1, "`end` without `for`"));
    }
    Ok(g)
}

fn parse_block(lines: &[Line], pos: &mut usize, g: &mut Graph, depth: usize) -> Result<Vec<Stmt>, CompileError> {
    let mut body = Vec::new();
    while *pos < lines.len() {
        let l = &lines[*pos];
        let col0 = l.indent + 1;
        let toks: Vec<&str> = l.text.split_whitespace().collect();
        match toks[0] {
            "end" => {
                if depth == 0 {
                    return Err(perr(l.no, col0, "`end` without `for`"));
                }
                if toks.len() != 1 {
                    return Err(perr(l.no, col0, "`end` takes no arguments"));
                }
                *pos += 1;
                return Ok(body);
            }
            "msg" | "mat" | "out" if depth > 0 => {
                return Err(perr(l.no, col0, "declarations must be at top level"));
            }
            "msg" => {
                *pos += 1;
                let (name, count, dim, form) = match toks.as_slice() {
                    [_, n, d] => (n, None, d, Param::MeanCov),
                    [_, n, d, f] => {
                        let form = match *f {
                            "MeanCov" => Param::MeanCov,
                            "WeightedMean" => Param::WeightedMean,
                            other => return Err(perr(l.no, col0, format!("unknown form {other:?}"))),
                        };
                        (n, None, d, form)
                    }
                    _ => return Err(perr(l.no, col0, "expected `msg <name> <dim> [form]`")),
                };
                let (name, cnt) = name_and_count(name, l.no, col0 + 4)?;
                let count = match (count, cnt) {
                    (_, Some(c)) => Some(c.parse().map_err(|_| perr(l.no, col0 + 4, format!("bad array size {c:?}")))?),
                    (c, None) => c,
                };
                let dim = dim.parse().map_err(|_| perr(l.no, col0, format!("bad dimension {dim:?}")))?;
                if g.msg(&name).is_some() || g.mat(&name).is_some() {
                    return Err(perr(l.no, col0 + 4, format!("`{name}` declared twice")));
                }
                g.msgs.push(MsgDecl { name, dim, form, count, line: l.no });
            }
            "mat" => {
                *pos += 1;
                let [_, n, shape] = toks.as_slice() else {
                    return Err(perr(l.no, col0, "expected `mat <name> <rows>x<cols>`"));
                };
                let (name, cnt) = name_and_count(n, l.no, col0 + 4)?;
                let (r, c) = shape.split_once('x').ok_or_else(|| perr(l.no, col0, format!("bad shape {shape:?}")))?;
                let bad = || perr(l.no, col0, format!("bad shape {shape:?}"));
                let rows = r.parse().map_err(|_| bad())?;
                let cols = c.parse().map_err(|_| bad())?;
                let count = match cnt {
                    Some(c) => Some(c.parse().map_err(|_| perr(l.no, col0 + 4, format!("bad array size {c:?}")))?),
                    None => None,
                };
                if g.msg(&name).is_some() || g.mat(&name).is_some() {
                    return Err(perr(l.no, col0 + 4, format!("`{name}` declared twice")));
                }
                g.mats.push(MatDecl { name, rows, cols, count, line: l.no });
            }
            "out" => {
                *pos += 1;
                if toks.len() < 2 {
                    return Err(perr(l.no, col0, "expected `out <name>..`"));
                }
                for t in &toks[1..] {
                    if !is_ident(t) {
                        return Err(perr(l.no, col0, format!("bad identifier {t:?}")));
                    }
                    g.outputs.push(t.to_string());
                }
            }
            "for" => {
                let [_, var, "in", count] = toks.as_slice() else {
                    return Err(perr(l.no, col0, "expected `for <var> in <count>`"));
                };
                if !is_ident(var) {
                    return Err(perr(l.no, col0 + 4, format!("bad loop variable {var:?}")));
                }
                let count = count.parse().map_err(|_| perr(l.no, col0, format!("bad loop count {count:?}")))?;
                let line = l.no;
                *pos += 1;
                let inner = parse_block(lines, pos, g, depth + 1)?;
                body.push(Stmt::For { var: var.to_string(), count, body: inner, line });
            }
            _ => {
                *pos += 1;
                body.push(parse_assign(l)?);
            }
        }
    }
    if depth > 0 {
        let l = lines.last().expect("inside a block");
        return Err(perr(l.no, l.indent + 1, "missing `end`"));
    }
    Ok(body)
}

fn parse_assign(l: &Line) -> Result<Stmt, CompileError> {
    let col0 = l.indent + 1;
    let (lhs, rhs) = l.text.split_once('=').ok_or_else(|| perr(l.no, col0, format!("expected assignment, got {:?}", l.text)))?;
    let lhs = lhs.trim();
    if !is_ident(lhs) {
        return Err(perr(l.no, col0, format!("bad assignment target {lhs:?}")));
    }
    let rhs_off = col0 + l.text.find('=').expect("split above") + 1;
    let rhs_t = rhs.trim_start();
    let rhs_col = rhs_off + (rhs.len() - rhs_t.len());
    let open = rhs_t.find('(').ok_or_else(|| perr(l.no, rhs_col, "expected `func(args)`"))?;
    let func = rhs_t[..open].trim();
    if !is_ident(func) {
        return Err(perr(l.no, rhs_col, format!("bad function name {func:?}")));
    }
    let inner = rhs_t[open + 1..].trim_end().strip_suffix(')').ok_or_else(|| perr(l.no, rhs_col + rhs_t.len(), "missing `)`"))?;
    let mut args = Vec::new();
    let mut off = rhs_col + open + 1;
    for piece in inner.split(',') {
        let t = piece.trim();
        let col = off + (piece.len() - piece.trim_start().len());
        off += piece.len() + 1;
        if t.is_empty() {
            return Err(perr(l.no, col, "empty argument"));
        }
        let (name, idx) = name_and_count(t, l.no, col)?;
        let index = idx.map(|s| match s.parse::<usize>() {
            Ok(n) => Index::Lit(n),
            Err(_) => Index::Var(s),
        });
        args.push(Arg { name, index, col });
    }
    Ok(Stmt::Assign { lhs: lhs.to_string(), func: func.to_string(), args, line: l.no })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rls_program() {
        let g = parse_graph(
            "msg x 4\nmsg n 1\nmsg y[2] 1\nmat A[2] 1x4\nout x\nfor i in 2\n  Y = add_b(y[i], n)\n  x = mult_eq_f(x, Y, A[i])\nend\n",
        )
        .unwrap();
        assert_eq!(g.msgs.len(), 3);
        assert_eq!(g.msg("y").unwrap().count, Some(2));
        assert_eq!((g.mat("A").unwrap().rows, g.mat("A").unwrap().cols), (1, 4));
        let Stmt::For { count, body, .. } = &g.body[0] else { panic!() };
        assert_eq!(*count, 2);
        assert_eq!(body.len(), 2);
        let Stmt::Assign { args, .. } = &body[1] else { panic!() };
        assert_eq!(args[2].index, Some(Index::Var("i".into())));
    }

    #[test]
    fn parse_errors_carry_location() {
        let e = parse_graph("msg x 2\nz = add_f(x, )\n").unwrap_err();
        assert!(matches!(e, CompileError::Parse { line: 2, col: 14, .. }), "{e:?}");
        assert!(matches!(parse_graph("for i in 2\nx = eq(a, b)\n"), Err(CompileError::Parse { .. })));
        assert!(matches!(parse_graph("end\n"), Err(CompileError::Parse { line: 1, .. })));
        assert!(matches!(parse_graph("msg x 2 Other\n"), Err(CompileError::Parse { .. })));
    }

    #[test]
    fn empty_program() {
        assert_eq!(parse_graph("# nothing\n").unwrap(), Graph::default());
    }
}
