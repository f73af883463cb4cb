//! Plain-text exchange format for messages and matrices.
//!
//! ```text
//! # optional comments
//! msg 2 MeanCov
//! 1+0j 0.5-2j            # mean (n entries)
//! 1+0j 0+0j              # matrix, row-major (n*n entries)
//! 0+0j 1+0j
//! ```
//!
//! State matrices use a `mat <rows> <cols>` header followed by the entries.
//! Line breaks between entries are not significant.

use std::fmt::Write as _;

use thiserror::Error;

use crate::gmp::{GaussianMessage, Param};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {msg}")]
pub struct TextError {
    pub line: usize,
    pub msg: String,
}

fn err(line: usize, msg: impl Into<String>) -> TextError {
    TextError { line, msg: msg.into() }
}

/// Parses one `re+imj` token (`3`, `-1.5j`, `2e-3-4j` are also accepted).
pub fn parse_complex(tok: &str) -> Option<C64> {
    let t = tok.trim();
    if let Some(body) = t.strip_suffix('j') {
        // Split at the last sign that is not a leading sign or an exponent sign.
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        match split {
            Some(i) => {
                let re: f64 = body[..i].parse().ok()?;
                let im_str = &body[i..];
                let im: f64 = match im_str {
                    "+" => 1.0,
                    "-" => -1.0,
                    s => s.parse().ok()?,
                };
                Some(C64::new(re, im))
            }
            None => {
                let im: f64 = match body {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    s => s.parse().ok()?,
                };
                Some(C64::new(0.0, im))
            }
        }
    } else {
        t.parse().ok().map(|re| C64::new(re, 0.0))
    }
}

pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}j", z.re, sign, z.im.abs())
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                l.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Self { items, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let t = self.items.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.items.len()
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |t| t.0)
    }

    fn complex(&mut self, count: usize) -> Result<Vec<C64>, TextError> {
        (0..count)
            .map(|_| {
                let (line, tok) = self.next().ok_or_else(|| err(self.last_line(), "unexpected end of input"))?;
                parse_complex(tok).ok_or_else(|| err(line, format!("bad complex entry {tok:?}")))
            })
            .collect()
    }

    fn usize(&mut self, what: &str) -> Result<usize, TextError> {
        let (line, tok) = self.next().ok_or_else(|| err(self.last_line(), format!("missing {what}")))?;
        tok.parse().map_err(|_| err(line, format!("bad {what} {tok:?}")))
    }

    fn finish(&mut self) -> Result<(), TextError> {
        match self.next() {
            None => Ok(()),
            Some((line, tok)) => Err(err(line, format!("trailing token {tok:?}"))),
        }
    }
}

fn message_record(t: &mut Tokens) -> Result<GaussianMessage, TextError> {
    let line = match t.next() {
        Some((line, "msg")) => line,
        Some((line, tok)) => return Err(err(line, format!("expected `msg` header, got {tok:?}"))),
        None => return Err(err(1, "empty input")),
    };
    let n = t.usize("dimension")?;
    let param = match t.next() {
        Some((_, "MeanCov")) => Param::MeanCov,
        Some((_, "WeightedMean")) => Param::WeightedMean,
        Some((line, tok)) => return Err(err(line, format!("unknown parametrization {tok:?}"))),
        None => return Err(err(t.last_line(), "missing parametrization")),
    };
    let mean = t.complex(n)?;
    let cov = CMat::from_vec(n, n, t.complex(n * n)?);
    GaussianMessage::new(mean, cov, param).map_err(|e| err(line, e.to_string()))
}

pub fn parse_message(text: &str) -> Result<GaussianMessage, TextError> {
    let mut t = Tokens::new(text);
    let m = message_record(&mut t)?;
    t.finish()?;
    Ok(m)
}

/// One or more concatenated `msg` records (an array binding).
pub fn parse_messages(text: &str) -> Result<Vec<GaussianMessage>, TextError> {
    let mut t = Tokens::new(text);
    let mut out = vec![message_record(&mut t)?];
    while !t.at_end() {
        out.push(message_record(&mut t)?);
    }
    Ok(out)
}

pub fn format_message(msg: &GaussianMessage) -> String {
    let n = msg.dim();
    let mut s = format!("msg {n} {}\n", msg.param.name());
    let mean: Vec<String> = msg.mean.iter().map(|&z| format_complex(z)).collect();
    let _ = writeln!(s, "{}", mean.join(" "));
    for r in 0..n {
        let row: Vec<String> = (0..n).map(|c| format_complex(msg.cov[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

fn matrix_record(t: &mut Tokens) -> Result<CMat, TextError> {
    match t.next() {
        Some((_, "mat")) => {}
        Some((line, tok)) => return Err(err(line, format!("expected `mat` header, got {tok:?}"))),
        None => return Err(err(1, "empty input")),
    }
    let rows = t.usize("row count")?;
    let cols = t.usize("column count")?;
    let data = t.complex(rows * cols)?;
    Ok(CMat::from_vec(rows, cols, data))
}

pub fn parse_matrix(text: &str) -> Result<CMat, TextError> {
    let mut t = Tokens::new(text);
    let m = matrix_record(&mut t)?;
    t.finish()?;
    Ok(m)
}

pub fn parse_matrices(text: &str) -> Result<Vec<CMat>, TextError> {
    let mut t = Tokens::new(text);
    let mut out = vec![matrix_record(&mut t)?];
    while !t.at_end() {
        out.push(matrix_record(&mut t)?);
    }
    Ok(out)
}

pub fn format_matrix(m: &CMat) -> String {
    let mut s = format!("mat {} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| format_complex(m[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_tokens() {
        assert_eq!(parse_complex("1.5+2j"), Some(C64::new(1.5, 2.0)));
        assert_eq!(parse_complex("-1-0.25j"), Some(C64::new(-1.0, -0.25)));
        assert_eq!(parse_complex("2e-3+1e+2j"), Some(C64::new(2e-3, 100.0)));
        assert_eq!(parse_complex("-3j"), Some(C64::new(0.0, -3.0)));
        assert_eq!(parse_complex("4"), Some(C64::new(4.0, 0.0)));
        assert_eq!(parse_complex("1+j"), Some(C64::new(1.0, 1.0)));
        assert_eq!(parse_complex("abc"), None);
    }

    #[test]
    fn message_roundtrip() {
        let msg = GaussianMessage::mean_cov(
            vec![C64::new(1.0, -0.5), C64::new(0.0, 2.0)],
            CMat::from_vec(2, 2, vec![C64::new(2.0, 0.0), C64::new(0.5, 0.1), C64::new(0.5, -0.1), C64::new(1.0, 0.0)]),
        )
        .unwrap();
        let text = format_message(&msg);
        assert!(text.starts_with("msg 2 MeanCov\n"));
        assert_eq!(parse_message(&text).unwrap(), msg);
    }

    #[test]
    fn message_errors_have_lines() {
        let e = parse_message("msg 1 MeanCov\n1+0j\nfoo\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse_message("msg 1 Other\n").is_err());
        assert!(parse_message("msg 1 MeanCov 1 1 1").is_err());
    }

    #[test]
    fn matrix_roundtrip() {
        let m = CMat::from_real(1, 3, &[0.5, -1.0, 2.0]);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn concatenated_records() {
        let a = CMat::from_real(1, 2, &[1.0, 2.0]);
        let b = CMat::from_real(1, 2, &[3.0, 4.0]);
        let text = format!("{}{}", format_matrix(&a), format_matrix(&b));
        assert_eq!(parse_matrices(&text).unwrap(), vec![a, b]);
        assert!(parse_matrix(&text).is_err());
        let m = GaussianMessage::mean_cov(vec![C64::new(1.0, 0.0)], CMat::identity(1)).unwrap();
        let text = format!("{}{}", format_message(&m), format_message(&m));
        assert_eq!(parse_messages(&text).unwrap().len(), 2);
    }
}
