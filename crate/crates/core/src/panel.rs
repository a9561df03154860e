//! Multivariate panel of aligned series, CSV ingestion and train/validation/test slicing.
//!
//! Time is an abstract integer axis. A panel stores its values row-per-series and records
//! the absolute index `t0` of its first column, so slices keep their position on the axis.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N` aligned, finite, real-valued series of common length `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePanel {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    t0: i64,
}

impl TimePanel {
    /// Builds a panel, checking that it is non-empty, rectangular and finite.
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>, t0: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Ingest("panel has no series".into()));
        }
        if names.len() != values.len() {
            return Err(Error::Ingest(format!(
                "{} names for {} series",
                names.len(),
                values.len()
            )));
        }
        let len = values[0].len();
        if len == 0 {
            return Err(Error::Ingest("series are empty".into()));
        }
        for (name, series) in names.iter().zip(&values) {
            if series.len() != len {
                return Err(Error::Ingest(format!(
                    "series '{name}' has length {} but expected {len}",
                    series.len()
                )));
            }
            if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingest(format!(
                    "series '{name}' has a non-finite value at position {pos}"
                )));
            }
        }
        Ok(Self { names, values, t0 })
    }

    /// Panel with default names `s1..sN` starting at `t0 = 1`.
    pub fn from_series(values: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=values.len()).map(|i| format!("s{i}")).collect();
        Self::new(names, values, 1)
    }

    pub fn n_series(&self) -> usize {
        self.values.len()
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    /// Always false: a constructed panel holds at least one observation.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    /// Absolute time index one past the last column.
    pub fn t_end(&self) -> i64 {
        self.t0 + self.len() as i64
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn series(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Value of series `n` at absolute time `t`, if inside the panel.
    pub fn at(&self, n: usize, t: i64) -> Option<f64> {
        let pos = usize::try_from(t - self.t0).ok()?;
        self.values.get(n)?.get(pos).copied()
    }

    /// Columns `[start, end)` by position, keeping absolute time.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Split(format!(
                "slice [{start}, {end}) is empty or exceeds length {}",
                self.len()
            )));
        }
        Ok(Self {
            names: self.names.clone(),
            values: self.values.iter().map(|s| s[start..end].to_vec()).collect(),
            t0: self.t0 + start as i64,
        })
    }

    /// Appends `later` along the time axis. Both panels must share names and be contiguous.
    pub fn concat(&self, later: &TimePanel) -> Result<Self> {
        if self.names != later.names {
            return Err(Error::Shape("panels have different series".into()));
        }
        if later.t0 != self.t_end() {
            return Err(Error::Shape(format!(
                "panel starting at t={} does not continue panel ending at t={}",
                later.t0,
                self.t_end() - 1
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&later.values)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Ok(Self {
            names: self.names.clone(),
            values,
            t0: self.t0,
        })
    }

    /// Same shape and time axis with replaced values.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.names.clone(), values, self.t0)
    }
}

/// Split points counted in columns from the start of the panel (1-based, inclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

impl SplitSpec {
    pub fn new(train_end: usize, valid_end: usize, test_end: usize) -> Self {
        Self {
            train_end,
            valid_end,
            test_end,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        let ok = 1 <= self.train_end
            && self.train_end < self.valid_end
            && self.valid_end <= self.test_end
            && self.test_end <= len;
        if ok {
            Ok(())
        } else {
            Err(Error::Split(format!(
                "need 1 <= train_end < valid_end <= test_end <= {len}, got ({}, {}, {})",
                self.train_end, self.valid_end, self.test_end
            )))
        }
    }
}

/// Splits into train `[1, train_end]`, validation `(train_end, valid_end]` and
/// test `(valid_end, test_end]`. The test panel is `None` when `valid_end == test_end`.
pub fn split(
    panel: &TimePanel,
    spec: SplitSpec,
) -> Result<(TimePanel, TimePanel, Option<TimePanel>)> {
    spec.validate(panel.len())?;
    let train = panel.slice(0, spec.train_end)?;
    let valid = panel.slice(spec.train_end, spec.valid_end)?;
    let test = if spec.test_end > spec.valid_end {
        Some(panel.slice(spec.valid_end, spec.test_end)?)
    } else {
        None
    };
    Ok((train, valid, test))
}

/// CSV layout: one column per series, or `(series, t, value)` triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Wide,
    Long,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::Config(format!(
                "unknown layout '{other}' (expected wide|long)"
            ))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Wide => "wide",
            Layout::Long => "long",
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, layout: Layout) -> Result<TimePanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, layout)
}

pub fn save_csv(panel: &TimePanel, path: impl AsRef<Path>, layout: Layout) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_csv(panel, &mut writer, layout)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<R: Read>(reader: R, layout: Layout) -> Result<TimePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            msg: e.to_string(),
        })?;
        // skip blank lines
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push((i + 1, rec));
    }
    if rows.is_empty() {
        return Err(Error::Ingest("no rows".into()));
    }
    match layout {
        Layout::Wide => read_wide(rows),
        Layout::Long => read_long(rows),
    }
}

fn parse_value(cell: &str, row: usize) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::Ingest(format!("missing value at row {row}")));
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            msg: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

fn read_wide(rows: Vec<(usize, csv::StringRecord)>) -> Result<TimePanel> {
    let width = rows[0].1.len();
    // A first row with no numeric cell is a header.
    let has_header = rows[0].1.iter().all(|c| c.parse::<f64>().is_err());
    let names: Vec<String> = if has_header {
        rows[0].1.iter().map(str::to_owned).collect()
    } else {
        (1..=width).map(|i| format!("s{i}")).collect()
    };
    let mut values = vec![Vec::with_capacity(rows.len()); width];
    for (row, rec) in rows.iter().skip(usize::from(has_header)) {
        if rec.len() != width {
            return Err(Error::Ingest(format!(
                "row {row} has {} cells but expected {width}",
                rec.len()
            )));
        }
        for (series, cell) in values.iter_mut().zip(rec.iter()) {
            series.push(parse_value(cell, *row)?);
        }
    }
    if values[0].is_empty() {
        return Err(Error::Ingest("header without data rows".into()));
    }
    TimePanel::new(names, values, 1)
}

fn read_long(rows: Vec<(usize, csv::StringRecord)>) -> Result<TimePanel> {
    let first = &rows[0].1;
    let has_header = first.len() == 3 && first[1].parse::<i64>().is_err();
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<HashMap<i64, f64>> = Vec::new();
    for (row, rec) in rows.iter().skip(usize::from(has_header)) {
        if rec.len() != 3 {
            return Err(Error::Ingest(format!(
                "row {row} has {} cells but expected 3 (series,t,value)",
                rec.len()
            )));
        }
        let t: i64 = rec[1].parse().map_err(|_| Error::Parse {
            row: *row,
            msg: format!("time index '{}' is not an integer", &rec[1]),
        })?;
        let v = parse_value(&rec[2], *row)?;
        let n = *index.entry(rec[0].to_owned()).or_insert_with(|| {
            order.push(rec[0].to_owned());
            cells.push(HashMap::new());
            order.len() - 1
        });
        if cells[n].insert(t, v).is_some() {
            return Err(Error::Ingest(format!(
                "duplicate entry for series '{}' at t={t} (row {row})",
                &rec[0]
            )));
        }
    }
    if order.is_empty() {
        return Err(Error::Ingest("header without data rows".into()));
    }
    let t_min = cells.iter().flat_map(|c| c.keys()).min().copied().unwrap();
    let t_max = cells.iter().flat_map(|c| c.keys()).max().copied().unwrap();
    let mut values = Vec::with_capacity(order.len());
    for (name, series) in order.iter().zip(&cells) {
        let mut out = Vec::with_capacity((t_max - t_min + 1) as usize);
        for t in t_min..=t_max {
            match series.get(&t) {
                Some(v) => out.push(*v),
                None => {
                    return Err(Error::Ingest(format!(
                        "series '{name}' has no value at t={t}"
                    )))
                }
            }
        }
        values.push(out);
    }
    TimePanel::new(order, values, t_min)
}

/// Writes the panel. Values use the shortest decimal that round-trips to the same `f64`.
pub fn write_csv<W: Write>(panel: &TimePanel, writer: W, layout: Layout) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Persist(e.to_string());
    match layout {
        Layout::Wide => {
            wtr.write_record(panel.names()).map_err(map)?;
            for pos in 0..panel.len() {
                wtr.write_record(panel.values.iter().map(|s| s[pos].to_string()))
                    .map_err(map)?;
            }
        }
        Layout::Long => {
            wtr.write_record(["series", "t", "value"]).map_err(map)?;
            for (name, series) in panel.names.iter().zip(&panel.values) {
                for (pos, v) in series.iter().enumerate() {
                    let t = panel.t0 + pos as i64;
                    wtr.write_record([name.clone(), t.to_string(), v.to_string()])
                        .map_err(map)?;
                }
            }
        }
    }
    wtr.flush().map_err(|e| Error::Persist(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide(s: &str) -> Result<TimePanel> {
        read_csv(s.as_bytes(), Layout::Wide)
    }

    #[test]
    fn wide_with_header() {
        let p = wide("a,b\n1,4\n2,5\n3,6").unwrap();
        assert_eq!(p.n_series(), 2);
        assert_eq!(p.len(), 3);
        assert_eq!(p.values(), &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(p.names(), &["a", "b"]);
        assert_eq!(p.t0(), 1);
    }

    #[test]
    fn wide_without_header() {
        let p = wide("1,4\n2,5").unwrap();
        assert_eq!(p.names(), &["s1", "s2"]);
        assert_eq!(p.series(1), &[4.0, 5.0]);
    }

    #[test]
    fn long_triples() {
        let p = read_csv("a,1,1\na,2,2\nb,1,4\nb,2,5".as_bytes(), Layout::Long).unwrap();
        assert_eq!(p.n_series(), 2);
        assert_eq!(p.len(), 2);
        assert_eq!(p.values(), &[vec![1.0, 2.0], vec![4.0, 5.0]]);
    }

    #[test]
    fn long_with_header_and_offset_start() {
        let p = read_csv(
            "series,t,value\nx,5,1.5\nx,6,2.5\n".as_bytes(),
            Layout::Long,
        )
        .unwrap();
        assert_eq!(p.t0(), 5);
        assert_eq!(p.at(0, 6), Some(2.5));
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        match wide("a\n1\nx") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(wide("a,b\n1,2\n3"), Err(Error::Ingest(_))));
    }

    #[test]
    fn missing_values_rejected() {
        assert!(matches!(wide("a,b\n1,\n3,4"), Err(Error::Ingest(_))));
        let gap = read_csv("a,1,1\na,2,2\nb,1,4".as_bytes(), Layout::Long);
        assert!(matches!(gap, Err(Error::Ingest(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(wide("a\n1\nNaN"), Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn split_lengths() {
        let p = TimePanel::from_series(vec![(1..=10).map(f64::from).collect()]).unwrap();
        let (a, b, c) = split(&p, SplitSpec::new(6, 8, 10)).unwrap();
        assert_eq!((a.len(), b.len(), c.as_ref().unwrap().len()), (6, 2, 2));
        assert_eq!(b.t0(), 7);
        assert_eq!(c.unwrap().t0(), 9);
        assert!(matches!(
            split(&p, SplitSpec::new(10, 10, 10)),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn split_unit_lengths() {
        let p = TimePanel::from_series(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let (a, b, c) = split(&p, SplitSpec::new(1, 2, 3)).unwrap();
        assert_eq!((a.len(), b.len(), c.unwrap().len()), (1, 1, 1));
    }

    #[test]
    fn split_concat_reproduces() {
        let p = TimePanel::from_series(vec![
            (0..10).map(|i| i as f64 * 0.5).collect(),
            (0..10).map(|i| -(i as f64)).collect(),
        ])
        .unwrap();
        let (a, b, c) = split(&p, SplitSpec::new(3, 7, 10)).unwrap();
        let joined = a.concat(&b).unwrap().concat(&c.unwrap()).unwrap();
        assert_eq!(joined, p);
    }

    #[test]
    fn layout_parses() {
        assert_eq!("long".parse::<Layout>().unwrap(), Layout::Long);
        assert!("tall".parse::<Layout>().is_err());
    }
}
