//! Plain-text matrix and mask files.
//!
//! Matrices: a header line `n1 n2`, then `n1` lines of whitespace-separated
//! decimals (`nan` allowed). Masks: a header line `n1 n2`, then one `i j`
//! pair per line, 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problem::SampleMask;

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

fn parse_err(context: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_header(context: &str, line: Option<(usize, &str)>) -> Result<(usize, usize)> {
    let (_, line) = line.ok_or_else(|| parse_err(context, "missing `n1 n2` header"))?;
    let dims: Vec<&str> = line.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(context, format!("header must be `n1 n2`, got `{line}`")));
    }
    let n = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| parse_err(context, format!("bad dimension `{s}`: {e}")))
    };
    Ok((n(dims[0])?, n(dims[1])?))
}

pub fn parse_matrix(text: &str, context: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (n1, n2) = parse_header(context, lines.next())?;
    let mut data = Vec::with_capacity(n1 * n2);
    let mut rows = 0;
    for (line_no, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| parse_err(context, format!("line {line_no}: bad number `{tok}`: {e}")))?;
            data.push(v);
        }
        if data.len() - before != n2 {
            return Err(parse_err(
                context,
                format!("line {line_no}: expected {n2} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n1 {
        return Err(parse_err(context, format!("expected {n1} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(n1, n2, &data))
}

pub fn format_mask(mask: &SampleMask) -> String {
    let (n1, n2) = mask.shape();
    let mut s = format!("{n1} {n2}\n");
    for (i, j) in mask.entries() {
        let _ = writeln!(s, "{i} {j}");
    }
    s
}

pub fn parse_mask(text: &str, context: &str) -> Result<SampleMask> {
    let mut lines = content_lines(text);
    let (n1, n2) = parse_header(context, lines.next())?;
    let mut entries = Vec::new();
    for (line_no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(context, format!("line {line_no}: expected `i j`, got `{line}`")));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(context, format!("line {line_no}: bad index `{s}`: {e}")))
        };
        entries.push((idx(toks[0])?, idx(toks[1])?));
    }
    SampleMask::new(n1, n2, entries)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn write_mask(path: &Path, mask: &SampleMask) -> Result<()> {
    fs::write(path, format_mask(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<SampleMask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text, &path.display().to_string())
}
