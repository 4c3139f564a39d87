//! Binary data matrices and the comma-separated text format.
//!
//! One sample per line, comma-separated `0`/`1` tokens. An optional first line
//! holding non-binary tokens is treated as column names. This is the layout of
//! the usual density-estimation benchmark files (`nltcs.train.data`, ...).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, XspnError};

/// Row-major `N × n` matrix of binary values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    rows: usize,
    cols: usize,
    values: Vec<u8>,
    names: Option<Vec<String>>,
}

impl BinaryDataset {
    pub fn new(rows: usize, cols: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(XspnError::input(format!(
                "expected {} values for a {rows}x{cols} dataset, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(XspnError::input(format!(
                "non-binary value {} at row {}, column {}",
                values[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            names: None,
        })
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(XspnError::input(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(XspnError::input(format!(
                "{} column names for {} columns",
                names.len(),
                self.cols
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    /// New dataset holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
            names: self.names.clone(),
        }
    }

    /// New dataset holding the given columns, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * columns.len());
        for row in self.iter_rows() {
            values.extend(columns.iter().map(|&c| row[c]));
        }
        let names = self
            .names
            .as_ref()
            .map(|n| columns.iter().map(|&c| n[c].clone()).collect());
        Self {
            rows: self.rows,
            cols: columns.len(),
            values,
            names,
        }
    }

    /// Splits off one column as integer labels and returns the remaining features.
    pub fn split_label_column(&self, label_col: usize) -> Result<(Self, Vec<u32>)> {
        if label_col >= self.cols {
            return Err(XspnError::input(format!(
                "label column {label_col} out of range for {} columns",
                self.cols
            )));
        }
        let keep: Vec<usize> = (0..self.cols).filter(|&c| c != label_col).collect();
        let labels = (0..self.rows)
            .map(|r| u32::from(self.get(r, label_col)))
            .collect();
        Ok((self.select_columns(&keep), labels))
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let (rows, names) = parse_table(reader, |tok| match tok {
            "0" => Some(0u8),
            "1" => Some(1u8),
            _ => None,
        })?;
        let cols = rows.first().map(Vec::len).unwrap_or_else(|| names.as_ref().map_or(0, Vec::len));
        let values: Vec<u8> = rows.into_iter().flatten().collect();
        let rows = values.len().checked_div(cols).unwrap_or(0);
        let ds = Self::new(rows, cols, values)?;
        match names {
            Some(n) => ds.with_names(n),
            None => Ok(ds),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = fs::File::open(path.as_ref())?;
        Self::parse(file)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        if let Some(names) = &self.names {
            writeln!(out, "{}", names.join(","))?;
        }
        let mut line = String::with_capacity(self.cols * 2);
        for row in self.iter_rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push(if *v == 1 { '1' } else { '0' });
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path.as_ref())?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

type Table<T> = (Vec<Vec<T>>, Option<Vec<String>>);

/// Parses comma-separated rows with a per-token decoder. A first line that fails
/// to decode is taken as a header; any later failure is a data error carrying the
/// 1-based line number.
pub(crate) fn parse_table<R: Read, T>(
    reader: R,
    decode: impl Fn(&str) -> Option<T>,
) -> Result<Table<T>> {
    let reader = BufReader::new(reader);
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut names = None;
    let mut width: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let decoded: Option<Vec<T>> = tokens.iter().map(|t| decode(t)).collect();
        let row = match decoded {
            Some(r) => r,
            None if rows.is_empty() && names.is_none() => {
                names = Some(tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>());
                width = Some(tokens.len());
                continue;
            }
            None => {
                let bad = tokens.iter().find(|t| decode(t).is_none()).unwrap_or(&"");
                return Err(XspnError::Data {
                    line: line_no,
                    message: format!("invalid token {bad:?}"),
                });
            }
        };
        match width {
            Some(w) if w != row.len() => {
                return Err(XspnError::Data {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            None => width = Some(row.len()),
            _ => {}
        }
        rows.push(row);
    }
    Ok((rows, names))
}
