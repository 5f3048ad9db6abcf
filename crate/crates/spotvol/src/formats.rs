//! On-disk formats. Numbers are written with Rust's shortest round-trip
//! formatting, so every file reads back to the exact same `f64`s.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{NaiveDate, NaiveDateTime};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use spotvol_core::panel::{AuditAction, AuditRecord};
use spotvol_core::rcv::RcvSeries;
use spotvol_core::{DeliveryPartition, Mat, PricePanel};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    match s {
        "NaN" => Ok(f64::NAN),
        _ => s.parse().map_err(|_| anyhow!("{}: bad number `{s}`", path.display())),
    }
}

fn parse_date(s: &str, path: &Path) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| anyhow!("{}: bad date `{s}`", path.display()))
}

/// A date column followed by one column per matrix column.
pub fn write_dated_matrix(path: &Path, names: &[String], dates: &[NaiveDate], m: &Mat) -> Result<()> {
    if dates.len() != m.nrows() || names.len() != m.ncols() {
        bail!("{}: shape mismatch", path.display());
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (r, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend((0..m.ncols()).map(|c| m[(r, c)].to_string()));
        w.write_record(&rec)?;
    }
    Ok(w.flush()?)
}

pub fn read_dated_matrix(path: &Path) -> Result<(Vec<String>, Vec<NaiveDate>, Mat)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        dates.push(parse_date(&rec[0], path)?);
        for v in rec.iter().skip(1) {
            data.push(parse_f64(v, path)?);
        }
    }
    if data.len() != dates.len() * names.len() {
        bail!("{}: ragged rows", path.display());
    }
    let m = Mat::from_row_slice(dates.len(), names.len(), &data);
    Ok((names, dates, m))
}

/// Square or rectangular matrix with a leading label column.
pub fn write_matrix(path: &Path, row_labels: &[String], col_labels: &[String], m: &Mat) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec![String::new()];
    header.extend(col_labels.iter().cloned());
    w.write_record(&header)?;
    for (r, label) in row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..m.ncols()).map(|c| m[(r, c)].to_string()));
        w.write_record(&rec)?;
    }
    Ok(w.flush()?)
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let cols = r.headers()?.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for v in rec.iter().skip(1) {
            data.push(parse_f64(v, path)?);
        }
        rows += 1;
    }
    if data.len() != rows * cols {
        bail!("{}: ragged rows", path.display());
    }
    Ok(Mat::from_row_slice(rows, cols, &data))
}

pub fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.flush()?)
}

pub fn read_rows<S: DeserializeOwned>(path: &Path) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|x| x.with_context(|| format!("reading {}", path.display()))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub date: NaiveDate,
    pub action: String,
    pub bin: Option<usize>,
    pub timestamp_utc: Option<NaiveDateTime>,
    pub values: Vec<f64>,
}

impl From<&AuditRecord> for AuditEntry {
    fn from(r: &AuditRecord) -> Self {
        let (action, bin, timestamp_utc, values) = match &r.action {
            AuditAction::Imputed { bin, value } => ("imputed", Some(*bin), None, vec![*value]),
            AuditAction::Merged { bin, first, second } => ("merged", Some(*bin), None, vec![*first, *second]),
            AuditAction::Duplicate { timestamp, dropped, kept } => ("duplicate", None, Some(*timestamp), vec![*dropped, *kept]),
        };
        Self { date: r.date, action: action.into(), bin, timestamp_utc, values }
    }
}

impl TryFrom<&AuditEntry> for AuditRecord {
    type Error = anyhow::Error;

    fn try_from(e: &AuditEntry) -> Result<Self> {
        let v = |i: usize| e.values.get(i).copied().ok_or_else(|| anyhow!("audit entry on {} lacks values", e.date));
        let bin = || e.bin.ok_or_else(|| anyhow!("audit entry on {} lacks a bin", e.date));
        let action = match e.action.as_str() {
            "imputed" => AuditAction::Imputed { bin: bin()?, value: v(0)? },
            "merged" => AuditAction::Merged { bin: bin()?, first: v(0)?, second: v(1)? },
            "duplicate" => AuditAction::Duplicate {
                timestamp: e.timestamp_utc.ok_or_else(|| anyhow!("duplicate entry lacks a timestamp"))?,
                dropped: v(0)?,
                kept: v(1)?,
            },
            other => bail!("unknown audit action `{other}`"),
        };
        Ok(AuditRecord { date: e.date, action })
    }
}

/// JSON sidecar of a panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub zone: String,
    pub breakpoints: Vec<f64>,
    pub labels: Vec<String>,
    pub dst_log: Vec<AuditEntry>,
}

pub fn bin_labels(p: &DeliveryPartition) -> Vec<String> {
    (0..p.bins()).map(|i| p.label(i)).collect()
}

pub fn write_panel(csv_path: &Path, json_path: &Path, panel: &PricePanel) -> Result<()> {
    let labels = bin_labels(panel.partition());
    write_dated_matrix(csv_path, &labels, panel.dates(), panel.values())?;
    let meta = PanelMeta {
        zone: panel.zone().to_string(),
        breakpoints: panel.partition().breakpoints().to_vec(),
        labels,
        dst_log: panel.dst_log().iter().map(AuditEntry::from).collect(),
    };
    write_json(json_path, &meta)
}

pub fn read_panel(csv_path: &Path, json_path: &Path) -> Result<PricePanel> {
    let meta: PanelMeta = read_json(json_path)?;
    let (names, dates, values) = read_dated_matrix(csv_path)?;
    if names != meta.labels {
        bail!("{}: columns do not match the sidecar labels", csv_path.display());
    }
    let partition = DeliveryPartition::new(meta.breakpoints.clone(), Some(meta.labels.clone()))?;
    let log = meta.dst_log.iter().map(AuditRecord::try_from).collect::<Result<Vec<_>>>()?;
    Ok(PricePanel::new(dates, values, partition, meta.zone, log)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcvManifest {
    pub window: usize,
    pub delta: f64,
    pub adjusted: bool,
    pub rolling: bool,
    pub dim: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RcvEntry {
    date: NaiveDate,
    i: usize,
    j: usize,
    value: f64,
}

/// Long format `date,i,j,value` (1-based indices, full matrix) plus a manifest.
pub fn write_rcv(csv_path: &Path, json_path: &Path, s: &RcvSeries) -> Result<()> {
    let d = s.dim();
    let mut w = csv::Writer::from_writer(create(csv_path)?);
    for (date, m) in s.dates.iter().zip(&s.mats) {
        for i in 0..d {
            for j in 0..d {
                w.serialize(RcvEntry { date: *date, i: i + 1, j: j + 1, value: m[(i, j)] })?;
            }
        }
    }
    w.flush()?;
    let manifest = RcvManifest { window: s.window, delta: s.delta, adjusted: s.adjusted, rolling: s.rolling, dim: d, windows: s.len() };
    write_json(json_path, &manifest)
}

pub fn read_rcv(csv_path: &Path, json_path: &Path) -> Result<RcvSeries> {
    let m: RcvManifest = read_json(json_path)?;
    let entries: Vec<RcvEntry> = read_rows(csv_path)?;
    let d = m.dim;
    if entries.len() != m.windows * d * d {
        bail!("{}: expected {} entries, found {}", csv_path.display(), m.windows * d * d, entries.len());
    }
    let mut dates = Vec::with_capacity(m.windows);
    let mut mats = Vec::with_capacity(m.windows);
    for chunk in entries.chunks(d * d) {
        let mut mat = Mat::zeros(d, d);
        for e in chunk {
            if e.date != chunk[0].date || e.i == 0 || e.j == 0 || e.i > d || e.j > d {
                bail!("{}: malformed block at {}", csv_path.display(), e.date);
            }
            mat[(e.i - 1, e.j - 1)] = e.value;
        }
        dates.push(chunk[0].date);
        mats.push(mat);
    }
    Ok(RcvSeries { dates, mats, window: m.window, delta: m.delta, adjusted: m.adjusted, rolling: m.rolling })
}
