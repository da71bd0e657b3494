//! CSV stream files.
//!
//! Streams are written as `n,x1,...,xp` and may carry a trailing `label`
//! column. Raw accelerometer logs in the `user,activity,timestamp,x,y,z`
//! layout (lines optionally ending in `;`) are also accepted on input.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use qdepth_core::synth::Observation;

/// Share of malformed rows above which a read is aborted.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

/// Row-major observations with optional labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub dim: usize,
    pub values: Vec<f64>,
    pub labels: Option<Vec<String>>,
    /// Malformed rows dropped while reading.
    pub skipped: usize,
}

impl Table {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    /// 1-based indices where the label differs from the previous row's.
    pub fn change_points(&self) -> Vec<u64> {
        let Some(labels) = &self.labels else { return Vec::new() };
        labels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| i as u64 + 2)
            .collect()
    }
}

pub fn header(dim: usize, labelled: bool) -> Vec<String> {
    let mut h = vec!["n".to_string()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    if labelled {
        h.push("label".into());
    }
    h
}

/// Writes `n,x1..xp` rows; returns the row count.
pub fn write_stream<W: Write>(
    out: W,
    dim: usize,
    rows: impl IntoIterator<Item = qdepth_core::Result<Observation>>,
) -> Result<u64> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(dim, false))?;
    let mut count = 0;
    let mut record = Vec::with_capacity(dim + 1);
    for row in rows {
        let row = row?;
        record.clear();
        record.push(row.index.to_string());
        record.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

/// Writes `n,x1..xp,label` rows.
pub fn write_labelled<W: Write>(out: W, dim: usize, rows: impl IntoIterator<Item = (Observation, String)>) -> Result<u64> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(dim, true))?;
    let mut count = 0;
    for (row, label) in rows {
        let mut record = vec![row.index.to_string()];
        record.extend(row.values.iter().map(|v| v.to_string()));
        record.push(label);
        w.write_record(&record)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

pub fn read_path(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_table(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Reads either layout, picking by the first line.
pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let head = first.trim();
    if head.is_empty() {
        bail!("input is empty");
    }
    let columns: Vec<&str> = head.split(',').map(str::trim).collect();
    if columns[0] == "n" {
        read_native(&columns, reader)
    } else {
        let first_is_header = columns.first().is_some_and(|c| c.eq_ignore_ascii_case("user"));
        let pending = if first_is_header { None } else { Some(first.clone()) };
        read_accelerometer(pending, reader)
    }
}

fn check_skipped(table: &Table, total: usize) -> Result<()> {
    if total == 0 || table.is_empty() {
        bail!("no usable rows ({} malformed)", table.skipped);
    }
    if table.skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        bail!("{} of {} rows are malformed (more than 1%)", table.skipped, total);
    }
    Ok(())
}

fn read_native<R: BufRead>(columns: &[&str], rest: R) -> Result<Table> {
    let labelled = columns.last() == Some(&"label");
    let dim = columns.len() - 1 - usize::from(labelled);
    if dim == 0 {
        bail!("header declares no value columns");
    }
    for (i, c) in columns[1..=dim].iter().enumerate() {
        if *c != format!("x{}", i + 1) {
            bail!("unexpected column {c:?} in header");
        }
    }
    let mut table = Table { dim, labels: labelled.then(Vec::new), ..Table::default() };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(rest);
    let mut total = 0;
    let mut row = vec![0.0; dim];
    for record in rdr.records() {
        total += 1;
        let Ok(record) = record else {
            table.skipped += 1;
            continue;
        };
        if record.len() != columns.len() || !parse_values(record.iter().skip(1).take(dim), &mut row) {
            table.skipped += 1;
            continue;
        }
        table.values.extend_from_slice(&row);
        if let Some(labels) = table.labels.as_mut() {
            labels.push(record[dim + 1].to_string());
        }
    }
    check_skipped(&table, total)?;
    Ok(table)
}

fn parse_values<'a>(fields: impl Iterator<Item = &'a str>, out: &mut [f64]) -> bool {
    let mut k = 0;
    for f in fields {
        match f.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && k < out.len() => out[k] = v,
            _ => return false,
        }
        k += 1;
    }
    k == out.len()
}

/// `user,activity,timestamp,x,y,z`; the label is the activity.
fn read_accelerometer<R: BufRead>(pending: Option<String>, rest: R) -> Result<Table> {
    let mut table = Table { dim: 3, labels: Some(Vec::new()), ..Table::default() };
    let mut total = 0;
    let mut row = [0.0; 3];
    let lines = pending.into_iter().map(Ok).chain(rest.lines());
    for line in lines {
        let line = line?;
        // some exports pack several records on one line, each ending in ';'
        for rec in line.split(';') {
            let rec = rec.trim();
            if rec.is_empty() {
                continue;
            }
            total += 1;
            let fields: Vec<&str> = rec.split(',').collect();
            if fields.len() != 6 || fields[1].trim().is_empty() || !parse_values(fields[3..].iter().copied(), &mut row) {
                table.skipped += 1;
                continue;
            }
            table.values.extend_from_slice(&row);
            table.labels.as_mut().unwrap().push(fields[1].trim().to_string());
        }
    }
    check_skipped(&table, total)?;
    Ok(table)
}
