//! CSV input of flight-search datasets and CSV/JSON output of experiment
//! reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ImpactRecord, REPORT_COLUMNS};
use crate::synth::{standardize, FeatureScale};
use crate::types::{Dataset, FEATURE_NAMES};

const SIDE_COLUMNS: [&str; 4] = ["bookings", "hidden_segment", "origin", "destination"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    /// Load bookings, hidden_segment, origin and destination when present.
    pub has_hidden_columns: bool,
    pub standardize: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            has_hidden_columns: true,
            standardize: true,
        }
    }
}

/// A loaded dataset and, when standardized, the applied scaling.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub scales: Option<Vec<FeatureScale>>,
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, column: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::ParseCell {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        value: value.to_string(),
    })
}

/// Reads a dataset with the eight flight-search feature columns, in any
/// column order. Rows are numbered from 1 after the header in errors.
pub fn read_csv(path: &Path, options: ReadOptions) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|&name| find(name).ok_or_else(|| Error::MissingColumn(name.to_string())))
        .collect::<Result<_>>()?;
    let side: Vec<Option<usize>> = SIDE_COLUMNS
        .iter()
        .map(|&name| if options.has_hidden_columns { find(name) } else { None })
        .collect();
    for h in headers.iter() {
        if !FEATURE_NAMES.contains(&h) && !SIDE_COLUMNS.contains(&h) {
            log::warn!("{}: ignoring unknown column `{h}`", path.display());
        }
    }

    let mut points = Vec::new();
    let mut bookings = Vec::new();
    let mut segments = Vec::new();
    let mut origin = Vec::new();
    let mut destination = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = i + 1;
        let point = feature_cols
            .iter()
            .zip(FEATURE_NAMES)
            .map(|(&c, name)| parse_cell::<f64>(path, row, name, &record[c]))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = point.iter().position(|x| !x.is_finite()) {
            return Err(Error::ParseCell {
                path: path.to_path_buf(),
                row,
                column: FEATURE_NAMES[bad].to_string(),
                value: record[feature_cols[bad]].to_string(),
            });
        }
        points.push(point);
        if let Some(c) = side[0] {
            bookings.push(parse_cell::<u64>(path, row, SIDE_COLUMNS[0], &record[c])?);
        }
        if let Some(c) = side[1] {
            segments.push(parse_cell::<u32>(path, row, SIDE_COLUMNS[1], &record[c])?);
        }
        if let Some(c) = side[2] {
            origin.push(record[c].to_string());
        }
        if let Some(c) = side[3] {
            destination.push(record[c].to_string());
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }

    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut dataset = Dataset::new(points, names)?;
    if side[0].is_some() {
        dataset = dataset.with_bookings(bookings)?;
    }
    if side[1].is_some() {
        dataset = dataset.with_hidden_segments(segments)?;
    }
    if side[2].is_some() && side[3].is_some() {
        dataset = dataset.with_route(origin, destination)?;
    }
    if options.standardize {
        let (dataset, scales) = standardize(&dataset);
        Ok(Loaded { dataset, scales: Some(scales) })
    } else {
        Ok(Loaded { dataset, scales: None })
    }
}

/// Writes features then whatever side columns the dataset carries. Floats
/// use the shortest representation that reads back to the same value.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    if dataset.bookings().is_some() {
        header.push(SIDE_COLUMNS[0]);
    }
    if dataset.hidden_segments().is_some() {
        header.push(SIDE_COLUMNS[1]);
    }
    let route = dataset.origin().zip(dataset.destination());
    if route.is_some() {
        header.extend(&SIDE_COLUMNS[2..]);
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, p) in dataset.points().enumerate() {
        row.clear();
        row.extend(p.iter().map(|x| x.to_string()));
        if let Some(b) = dataset.bookings() {
            row.push(b[i].to_string());
        }
        if let Some(s) = dataset.hidden_segments() {
            row.push(s[i].to_string());
        }
        if let Some((o, d)) = route {
            row.push(o[i].clone());
            row.push(d[i].clone());
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(ReportFormat::Csv),
            Some("json") => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidConfig(format!(
                "cannot tell report format of {}",
                path.display()
            ))),
        }
    }
}

/// Writes one row per record. An empty report still gets a header (CSV)
/// or an empty array (JSON).
pub fn write_report(records: &[ImpactRecord], path: &Path, format: ReportFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(BufWriter::new(file));
            w.write_record(REPORT_COLUMNS).map_err(|e| Error::csv(path, e))?;
            for r in records {
                w.serialize(r).map_err(|e| Error::csv(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => {
            // Value maps keep keys sorted, so the output is stable.
            let value = serde_json::to_value(records).map_err(|e| Error::json(path, e))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &value).map_err(|e| Error::json(path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ImpactRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(BufReader::new(file));
            let headers = r.headers().map_err(|e| Error::csv(path, e))?.clone();
            if let Some(missing) = REPORT_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
                return Err(Error::MissingColumn(missing.to_string()));
            }
            r.deserialize()
                .map(|rec| rec.map_err(|e| Error::csv(path, e)))
                .collect()
        }
        ReportFormat::Json => serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path, e)),
    }
}
