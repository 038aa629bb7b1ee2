//! Multivariate time series container, CSV ingestion and overview downsampling.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A series of `n` time steps over `d` named tracks, stored row-major (`n × d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateTimeSeries {
    values: Array2<f64>,
    track_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling_note: Option<String>,
}

impl MultivariateTimeSeries {
    pub fn new(values: Array2<f64>, track_names: Vec<String>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if track_names.len() != d {
            return Err(Error::InvalidSeries(format!("{} track names for {d} tracks", track_names.len())));
        }
        let unique: HashSet<&str> = track_names.iter().map(String::as_str).collect();
        if unique.len() != d {
            return Err(Error::InvalidSeries("track names must be distinct".into()));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at row {row}, column {col}")));
        }
        Ok(Self { values, track_names, sampling_note: None })
    }

    /// Builds a series with default track names `track_0 … track_{d-1}`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::new(values, names)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.sampling_note = Some(note.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn track_names(&self) -> &[String] {
        &self.track_names
    }

    pub fn sampling_note(&self) -> Option<&str> {
        self.sampling_note.as_deref()
    }

    pub fn track(&self, track: usize) -> Result<ArrayView1<'_, f64>> {
        if track >= self.dims() {
            return Err(Error::UnknownTrack { track, d: self.dims() });
        }
        Ok(self.values.column(track))
    }

    /// Keeps only the listed tracks, in the given order.
    pub fn select_tracks(&self, tracks: &[usize]) -> Result<Self> {
        let mut out = Array2::zeros((self.len(), tracks.len()));
        let mut names = Vec::with_capacity(tracks.len());
        for (dst, &src) in tracks.iter().enumerate() {
            out.column_mut(dst).assign(&self.track(src)?);
            names.push(self.track_names[src].clone());
        }
        Self::new(out, names)
    }

    /// Keeps the first `n` time steps.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(self.values.slice(ndarray::s![..n, ..]).to_owned(), self.track_names.clone())
    }
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("track_{j}")).collect()
}

/// Reads a CSV file where every column is one track.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<MultivariateTimeSeries> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header)
}

pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<MultivariateTimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);

    let mut names: Option<Vec<String>> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Io(std::io::Error::other(e)))?;
        if has_header && i == 0 {
            names = Some(record.iter().map(str::to_owned).collect());
            width = Some(record.len());
            continue;
        }
        let row = rows;
        match width {
            Some(w) if w != record.len() => return Err(Error::Format { row, expected: w, found: record.len() }),
            None => width = Some(record.len()),
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse { row, col, value: cell.to_owned() })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, col, value: cell.to_owned() });
            }
            data.push(v);
        }
        rows += 1;
    }

    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let values = Array2::from_shape_vec((rows, d), data).map_err(|e| Error::InvalidSeries(e.to_string()))?;
    let names = names.unwrap_or_else(|| default_names(d));
    MultivariateTimeSeries::new(values, names)
}

/// Writes the series as CSV with a header row.
pub fn write_csv<W: std::io::Write>(series: &MultivariateTimeSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(series.track_names()).map_err(io)?;
    for row in series.values().rows() {
        wtr.write_record(row.iter().map(|v| format!("{v}"))).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One overview bucket: first time index of the chunk plus its min, max and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverviewPoint {
    pub time: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Splits one track into `target_points` contiguous chunks and summarizes each.
pub fn downsample_track(
    series: &MultivariateTimeSeries,
    track: usize,
    target_points: usize,
) -> Result<Vec<OverviewPoint>> {
    let column = series.track(track)?;
    let n = series.len();
    if target_points == 0 || target_points > n {
        return Err(Error::InvalidConfig(format!("target_points must be in 1..={n}, got {target_points}")));
    }
    let points = (0..target_points)
        .map(|i| {
            let lo = i * n / target_points;
            let hi = (i + 1) * n / target_points;
            let chunk = column.slice(ndarray::s![lo..hi]);
            let (min, max, sum) = chunk
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(mn, mx, s), &v| (mn.min(v), mx.max(v), s + v));
            OverviewPoint { time: lo, min, max, mean: sum / (hi - lo) as f64 }
        })
        .collect();
    Ok(points)
}
