//! Text exchange of parity-check matrices in the alist format (1-based
//! adjacency lists, zero padded).

use std::io::{BufRead, Write};

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

pub fn write_alist<W: Write>(pcm: &ParityCheckMatrix, mut out: W) -> std::io::Result<()> {
    let max_col = pcm.cols().iter().map(Vec::len).max().unwrap_or(0);
    let max_row = pcm.rows().iter().map(Vec::len).max().unwrap_or(0);
    writeln!(out, "{} {}", pcm.n(), pcm.m())?;
    writeln!(out, "{max_col} {max_row}")?;
    let degrees = |lists: &[Vec<usize>]| lists.iter().map(|l| l.len().to_string()).collect::<Vec<_>>().join(" ");
    writeln!(out, "{}", degrees(pcm.cols()))?;
    writeln!(out, "{}", degrees(pcm.rows()))?;
    let padded = |list: &Vec<usize>, width: usize| {
        let mut items: Vec<String> = list.iter().map(|i| (i + 1).to_string()).collect();
        items.resize(width, "0".to_string());
        items.join(" ")
    };
    for col in pcm.cols() {
        writeln!(out, "{}", padded(col, max_col))?;
    }
    for row in pcm.rows() {
        writeln!(out, "{}", padded(row, max_row))?;
    }
    Ok(())
}

pub fn read_alist<R: BufRead>(input: R) -> Result<ParityCheckMatrix> {
    let bad = |msg: &str| Error::Code(format!("alist: {msg}"));
    let mut numbers = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::Code(format!("alist: {e}")))?;
        for tok in line.split_whitespace() {
            numbers.push(tok.parse::<usize>().map_err(|_| bad(&format!("bad token `{tok}`")))?);
        }
    }
    let mut it = numbers.into_iter();
    let mut next = || it.next().ok_or_else(|| bad("truncated"));
    let (n, m) = (next()?, next()?);
    let (max_col, max_row) = (next()?, next()?);
    let col_deg = (0..n).map(|_| next()).collect::<Result<Vec<_>>>()?;
    let row_deg = (0..m).map(|_| next()).collect::<Result<Vec<_>>>()?;
    let mut cols = Vec::with_capacity(n);
    for &d in &col_deg {
        let entries = (0..max_col).map(|_| next()).collect::<Result<Vec<_>>>()?;
        cols.push(entries.into_iter().filter(|&e| e != 0).map(|e| e - 1).collect::<Vec<_>>());
        if cols.last().map(Vec::len) != Some(d) {
            return Err(bad("column degree mismatch"));
        }
    }
    let mut rows = Vec::with_capacity(m);
    for &d in &row_deg {
        let entries = (0..max_row).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let row: Vec<usize> = entries.into_iter().filter(|&e| e != 0).map(|e| e - 1).collect();
        if row.len() != d {
            return Err(bad("row degree mismatch"));
        }
        rows.push(row);
    }
    let pcm = ParityCheckMatrix::from_rows(n, rows)?;
    let consistent = pcm.cols().iter().zip(&cols).all(|(a, b)| {
        let mut b = b.clone();
        b.sort_unstable();
        *a == b
    });
    if !consistent {
        return Err(bad("row and column lists disagree"));
    }
    Ok(pcm)
}
