//! File readers: text corpora, vocabulary files, reference files and logits
//! CSV.

use std::fs;
use std::path::Path;

use bleubound::{TokenSeq, Vocab};
use ndarray::Array2;

use crate::exit::CliError;

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = read_file(path)?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn read_vocab(path: &Path) -> Result<Vocab, CliError> {
    Vocab::from_vocab_file(&read_file(path)?).map_err(CliError::from)
}

/// First non-empty line of `path`, as words mapped through `vocab` or, without
/// a vocabulary, as integer ids.
pub fn read_reference(path: &Path, vocab: Option<&Vocab>) -> Result<TokenSeq, CliError> {
    let text = read_file(path)?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::usage(format!("{} contains no reference", path.display())))?;
    match vocab {
        Some(v) => v.encode(line).map_err(CliError::from),
        None => line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| {
                    CliError::usage(format!(
                        "reference token {tok:?} is not an id; pass --vocab to read words"
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TokenSeq::new),
    }
}

/// Parses a CSV of reals, one row per position. Blank lines are ignored; the
/// first line is skipped when `header` is set.
pub fn parse_logits(text: &str, header: bool) -> Result<Array2<f64>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let lines = text.lines().enumerate().skip(usize::from(header));
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    CliError::usage(format!("line {}: {:?} is not a number", lineno + 1, cell.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::usage(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::usage("logits file has no rows"));
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| CliError::usage(e.to_string()))
}

pub fn read_logits(path: &Path, header: bool) -> Result<Array2<f64>, CliError> {
    parse_logits(&read_file(path)?, header)
}
