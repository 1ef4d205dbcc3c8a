//! Plain-text matrix files shared by mask sets and model checkpoints.
//!
//! A file starts with a `rows cols` header line. Binary matrices follow
//! with one line of `cols` contiguous `0`/`1` digits per row; real-valued
//! matrices with one line of whitespace-separated values per row, each
//! printed in shortest round-trip form.

use std::fs;
use std::path::Path;

use crate::engine::Matrix;
use crate::error::{Error, Result};

pub fn format_binary(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        out.extend(m.row(r).iter().map(|&v| if v == 1.0 { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

pub fn format_values(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses either layout; a row line is read as digits when it is a single
/// token of exactly `cols` binary characters.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate();
    let (rows, cols) = match lines.next() {
        Some((_, header)) => {
            let dims: Vec<usize> = header
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
            if dims.len() != 2 {
                return Err(Error::parse(path, 1, "header must be `rows cols`"));
            }
            (dims[0], dims[1])
        }
        None => return Err(Error::parse(path, 1, "empty matrix file")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let digits = tokens.len() == 1
            && tokens[0].len() == cols
            && cols > 1
            && tokens[0].bytes().all(|b| b == b'0' || b == b'1');
        if digits {
            data.extend(tokens[0].bytes().map(|b| f64::from(b - b'0')));
        } else if tokens.len() == cols {
            for t in tokens {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad number `{t}`")))?;
                data.push(v);
            }
        } else {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {cols} entries, found {}", tokens.len()),
            ));
        }
    }
    Matrix::from_vec(rows, cols, data).map_err(|_| {
        Error::parse(path, rows + 1, format!("expected {rows} rows of {cols} entries"))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read_text(path)?, path)
}
