//! Curve files and time-series windows.
//!
//! A curve file is comma-separated, one sample per row. An optional header
//! row starts with `id`, lists the grid abscissae, then optionally `y` and
//! `z1..zp`. Without a header every cell after the id is a curve value and
//! the grid is `1..m`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::curves::{Curve, FunctionalDataset, Grid};
use crate::error::{Error, Result};

/// Curves with their ids and whatever response and covariate columns the
/// file carried.
#[derive(Debug, Clone)]
pub struct CurveTable {
    pub ids: Vec<String>,
    pub grid: Arc<Grid>,
    pub curves: Vec<Curve>,
    pub responses: Option<Vec<f64>>,
    /// `n x p` linear covariates.
    pub covariates: Option<DMatrix<f64>>,
}

impl CurveTable {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// The labelled dataset; fails with `MissingColumn("y")` when the file
    /// had no response column.
    pub fn dataset(&self) -> Result<FunctionalDataset> {
        let y = self.responses.clone().ok_or_else(|| Error::MissingColumn("y".into()))?;
        let ds = FunctionalDataset::new(self.curves.clone(), y)?;
        match &self.covariates {
            Some(z) => ds.with_linear_covariates(z.clone()),
            None => Ok(ds),
        }
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            grid: Arc::clone(&self.grid),
            curves: indices.iter().map(|&i| self.curves[i].clone()).collect(),
            responses: self.responses.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect()),
            covariates: self.covariates.as_ref().map(|z| z.select_rows(indices)),
        }
    }

    /// Table of a dataset with generated ids `0..n`.
    pub fn from_dataset(ds: &FunctionalDataset) -> Self {
        Self {
            ids: (0..ds.len()).map(|i| i.to_string()).collect(),
            grid: Arc::clone(ds.grid()),
            curves: ds.curves().to_vec(),
            responses: Some(ds.responses().to_vec()),
            covariates: ds.linear_covariates().cloned(),
        }
    }
}

enum Extra {
    Response,
    Covariate(usize),
}

struct Layout {
    grid: Option<Vec<f64>>,
    width: usize,
    extras: Vec<(usize, Extra)>,
}

fn parse_header(record: &csv::StringRecord, line: usize) -> Result<Layout> {
    let mut grid = Vec::new();
    let mut extras = Vec::new();
    for (col, cell) in record.iter().enumerate().skip(1) {
        let cell = cell.trim();
        if extras.is_empty() {
            if let Ok(t) = cell.parse::<f64>() {
                grid.push(t);
                continue;
            }
        }
        let extra = if cell.eq_ignore_ascii_case("y") {
            Extra::Response
        } else if let Some(k) = cell
            .strip_prefix(['z', 'Z'])
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
        {
            Extra::Covariate(k)
        } else {
            return Err(Error::Parse {
                line,
                column: Some(col + 1),
                message: format!("unexpected header cell {cell:?}"),
            });
        };
        extras.push((col, extra));
    }
    let p = extras.iter().filter(|(_, e)| matches!(e, Extra::Covariate(_))).count();
    for k in 1..=p {
        if !extras.iter().any(|(_, e)| matches!(e, Extra::Covariate(j) if *j == k)) {
            return Err(Error::MissingColumn(format!("z{k}")));
        }
    }
    if extras.iter().filter(|(_, e)| matches!(e, Extra::Response)).count() > 1 {
        return Err(Error::Parse {
            line,
            column: None,
            message: "duplicate y column".into(),
        });
    }
    Ok(Layout {
        width: record.len(),
        grid: Some(grid),
        extras,
    })
}

fn parse_cell(cell: &str, line: usize, col: usize) -> Result<f64> {
    let cell = cell.trim();
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            column: Some(col + 1),
            message: format!("not a finite number: {cell:?}"),
        }),
    }
}

/// Parses a curve file from any reader.
pub fn read_curves<R: Read>(reader: R) -> Result<CurveTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut layout: Option<Layout> = None;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    let mut zs: Vec<Vec<f64>> = Vec::new();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: None,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if layout.is_none() {
            if rec.get(0).is_some_and(|c| c.eq_ignore_ascii_case("id")) {
                layout = Some(parse_header(&rec, line)?);
                continue;
            }
            layout = Some(Layout {
                grid: None,
                width: rec.len(),
                extras: Vec::new(),
            });
        }
        let lay = layout.as_ref().expect("layout set above");
        if rec.len() != lay.width {
            return Err(Error::Parse {
                line,
                column: None,
                message: format!("expected {} fields, found {}", lay.width, rec.len()),
            });
        }
        let m = lay.width - 1 - lay.extras.len();
        ids.push(rec[0].to_string());
        let values = (1..=m)
            .map(|c| parse_cell(&rec[c], line, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
        let mut z = vec![0.0; lay.extras.len()];
        let mut p = 0;
        for (col, extra) in &lay.extras {
            let v = parse_cell(&rec[*col], line, *col)?;
            match extra {
                Extra::Response => ys.push(v),
                Extra::Covariate(k) => {
                    z[*k - 1] = v;
                    p += 1;
                }
            }
        }
        z.truncate(p);
        zs.push(z);
    }

    let Some(lay) = layout else {
        return Err(Error::InsufficientData("curve file has no data rows".into()));
    };
    if rows.is_empty() {
        return Err(Error::InsufficientData("curve file has no data rows".into()));
    }
    let m = rows[0].len();
    let grid_points = lay.grid.unwrap_or_else(|| (1..=m).map(|t| t as f64).collect());
    if grid_points.len() != m {
        return Err(Error::Parse {
            line: 1,
            column: None,
            message: format!("header lists {} grid points for {m} values", grid_points.len()),
        });
    }
    let grid = Arc::new(Grid::new(grid_points)?);
    let curves = rows
        .into_iter()
        .map(|v| Curve::new(Arc::clone(&grid), v))
        .collect::<Result<Vec<_>>>()?;
    let has_y = lay.extras.iter().any(|(_, e)| matches!(e, Extra::Response));
    let p = zs.first().map_or(0, Vec::len);
    let covariates = (p > 0).then(|| DMatrix::from_fn(zs.len(), p, |i, j| zs[i][j]));
    Ok(CurveTable {
        ids,
        grid,
        curves,
        responses: has_y.then_some(ys),
        covariates,
    })
}

pub fn load_curves(path: impl AsRef<Path>) -> Result<CurveTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_curves(file)
}

/// Writes a table with a header row. Values use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_curves<W: Write>(table: &CurveTable, writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let p = table.covariates.as_ref().map_or(0, |z| z.ncols());
    let mut header = vec!["id".to_string()];
    header.extend(table.grid.points().iter().map(|t| t.to_string()));
    if table.responses.is_some() {
        header.push("y".into());
    }
    header.extend((1..=p).map(|k| format!("z{k}")));
    w.write_record(&header).map_err(io)?;
    for (i, curve) in table.curves.iter().enumerate() {
        let mut row = vec![table.ids[i].clone()];
        row.extend(curve.values().iter().map(|v| v.to_string()));
        if let Some(y) = &table.responses {
            row.push(y[i].to_string());
        }
        if let Some(z) = &table.covariates {
            row.extend(z.row(i).iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_curves(table: &CurveTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_curves(table, std::io::BufWriter::new(file))
}

/// Sliding windows over a series: the curve starting at `s` is
/// `series[s..s + window]` on the grid `1..window`, and its response is
/// `series[s + window - 1 + horizon]`. Starts advance by `stride`.
pub fn series_to_curves(series: &[f64], window: usize, horizon: usize, stride: usize) -> Result<FunctionalDataset> {
    if window < 2 || horizon < 1 || stride < 1 {
        return Err(Error::InvalidArgument(format!(
            "need window >= 2, horizon >= 1, stride >= 1; got {window}, {horizon}, {stride}"
        )));
    }
    if series.len() < window + horizon {
        return Err(Error::InsufficientData(format!(
            "series of length {} is shorter than window {window} plus horizon {horizon}",
            series.len()
        )));
    }
    let grid = Arc::new(Grid::uniform(1.0, window as f64, window)?);
    let last_start = series.len() - window - horizon;
    let mut curves = Vec::new();
    let mut responses = Vec::new();
    for s in (0..=last_start).step_by(stride) {
        curves.push(Curve::new(Arc::clone(&grid), series[s..s + window].to_vec())?);
        responses.push(series[s + window - 1 + horizon]);
    }
    FunctionalDataset::new(curves, responses)
}
