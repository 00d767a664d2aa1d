//! Reading response series from text.
//!
//! Accepted layouts: one value per line, or two comma-separated columns
//! `x,y` where the second column is the response and the first must be an
//! equispaced design. Blank lines and lines starting with `#` are skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::step_model::Dataset;

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let field = field.trim();
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value: {field:?}"),
        });
    }
    Ok(v)
}

/// Parses a series; line numbers in errors are 1-based.
pub fn parse_series(text: &str) -> Result<Dataset> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut columns = None;
    let mut first_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        match columns {
            None => {
                if fields.len() > 2 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected 1 or 2 columns, found {}", fields.len()),
                    });
                }
                columns = Some(fields.len());
                first_line = line;
            }
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "expected {c} columns as on line {first_line}, found {}",
                        fields.len()
                    ),
                });
            }
            Some(_) => {}
        }
        if fields.len() == 2 {
            xs.push(parse_number(fields[0], line)?);
            ys.push(parse_number(fields[1], line)?);
        } else {
            ys.push(parse_number(fields[0], line)?);
        }
    }
    if ys.len() < 2 {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            msg: format!("need at least 2 observations, found {}", ys.len()),
        });
    }
    if xs.is_empty() {
        Dataset::new(ys)
    } else {
        Dataset::with_design(&xs, ys)
    }
}

pub fn read_series(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_series(&std::fs::read_to_string(path)?)
}
