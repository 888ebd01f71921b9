//! Tidy CSV input and output over a [`Layout`].

use std::path::Path;

use pclm::NdArray;

use crate::error::{CliError, Result};
use crate::layout::Layout;

/// Whether CSV coordinates address groups (by lower bound) or fine cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Grouped,
    Fine,
}

impl Scale {
    fn extents(self, layout: &Layout) -> Vec<usize> {
        match self {
            Scale::Grouped => layout.group_dims(),
            Scale::Fine => layout.fine_dims(),
        }
    }

    fn index(self, layout: &Layout, k: usize, coord: i64) -> Option<usize> {
        let d = &layout.dims[k];
        match self {
            Scale::Grouped => d.group_index(coord),
            Scale::Fine => d.fine_index(coord),
        }
    }

    fn coordinate(self, layout: &Layout, k: usize, i: usize) -> i64 {
        let d = &layout.dims[k];
        match self {
            Scale::Grouped => d.lower_bounds[i],
            Scale::Fine => d.first + i as i64,
        }
    }
}

/// Visit every multi-index of `dims` with the first index fastest.
pub fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == dims.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Read a CSV with one coordinate column per dimension plus `value_column`.
/// Every cell must appear exactly once.
pub fn read_grid(path: &Path, layout: &Layout, scale: Scale, value_column: &str) -> Result<NdArray> {
    let data_err = |message: String| CliError::Data { path: path.to_path_buf(), message };
    let parse_err = |line: u64, message: String| CliError::Parse { path: path.to_path_buf(), line, message };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let coord_cols = layout
        .dims
        .iter()
        .map(|d| column(&d.name).ok_or_else(|| data_err(format!("missing column {:?}", d.name))))
        .collect::<Result<Vec<_>>>()?;
    let value_col = column(value_column).ok_or_else(|| data_err(format!("missing column {value_column:?}")))?;
    if headers.len() != layout.ndim() + 1 {
        let known: Vec<&str> = layout.names().into_iter().chain([value_column]).collect();
        let extra: Vec<&str> = headers.iter().filter(|h| !known.contains(h)).collect();
        return Err(data_err(format!("unexpected columns {extra:?}")));
    }

    let extents = scale.extents(layout);
    let total: usize = extents.iter().product();
    let mut values = vec![f64::NAN; total];
    let mut seen_on = vec![0u64; total];
    let mut idx = vec![0usize; layout.ndim()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (k, &col) in coord_cols.iter().enumerate() {
            let raw = &record[col];
            let coord: i64 = raw.parse().map_err(|_| {
                parse_err(line, format!("{} coordinate {raw:?} is not an integer", layout.dims[k].name))
            })?;
            idx[k] = scale.index(layout, k, coord).ok_or_else(|| {
                let what = match scale {
                    Scale::Grouped => "is not a group lower bound",
                    Scale::Fine => "is outside the coordinate range",
                };
                parse_err(line, format!("{} {coord} {what}", layout.dims[k].name))
            })?;
        }
        let raw = &record[value_col];
        let value: f64 = raw.parse().map_err(|_| parse_err(line, format!("{value_column} {raw:?} is not a number")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(parse_err(line, format!("{value_column} must be finite and non-negative, got {value}")));
        }
        let offset = offset(&idx, &extents);
        if seen_on[offset] != 0 {
            return Err(parse_err(line, format!("{} repeats line {}", describe(layout, scale, &idx), seen_on[offset])));
        }
        seen_on[offset] = line;
        values[offset] = value;
    }
    if let Some(missing) = seen_on.iter().position(|&l| l == 0) {
        let idx = unravel(missing, &extents);
        return Err(data_err(format!("no {value_column} for {}", describe(layout, scale, &idx))));
    }
    Ok(NdArray::new(extents, values)?)
}

/// Write coordinate columns followed by the given value columns, one row per cell.
pub fn write_grid(path: &Path, layout: &Layout, scale: Scale, columns: &[(&str, &NdArray)]) -> Result<()> {
    let extents = scale.extents(layout);
    for (name, arr) in columns {
        if arr.dims() != &extents[..] {
            return Err(CliError::config(format!("column {name} has extents {:?}, expected {extents:?}", arr.dims())));
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<&str> = layout.names().into_iter().chain(columns.iter().map(|c| c.0)).collect();
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    let mut result = Ok(());
    let mut flat = 0;
    for_each_index(&extents, |idx| {
        if result.is_err() {
            return;
        }
        row.clear();
        row.extend(idx.iter().enumerate().map(|(k, &i)| scale.coordinate(layout, k, i).to_string()));
        row.extend(columns.iter().map(|(_, arr)| arr.data()[flat].to_string()));
        flat += 1;
        result = writer.write_record(&row);
    });
    result.map_err(|e| csv_error(path, e))?;
    writer.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    let message = e.to_string();
    match (e.into_kind(), line) {
        (csv::ErrorKind::Io(source), _) => CliError::io(path, source),
        (_, Some(line)) => CliError::Parse { path: path.to_path_buf(), line, message },
        (_, None) => CliError::Data { path: path.to_path_buf(), message },
    }
}

fn offset(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).rev().fold(0, |acc, (&i, &m)| acc * m + i)
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .map(|&m| {
            let i = flat % m;
            flat /= m;
            i
        })
        .collect()
}

fn describe(layout: &Layout, scale: Scale, idx: &[usize]) -> String {
    let parts: Vec<String> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| format!("{}={}", layout.dims[k].name, scale.coordinate(layout, k, i)))
        .collect();
    parts.join(", ")
}
