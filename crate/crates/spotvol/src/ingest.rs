//! Raw price exports to a [`PricePanel`].
//!
//! Timestamps are resolved to UTC instants, then converted to the zone's civil
//! time so that each local calendar day becomes one panel row. Short and long
//! days around daylight-saving transitions are repaired; any other day with the
//! wrong number of periods is an error.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, LocalResult, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use spotvol_core::panel::{time_to_angle, AuditAction, AuditRecord};
use spotvol_core::{DeliveryPartition, Mat, PricePanel};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("unknown time zone `{0}`")]
    UnknownTimezone(String),
    #[error("no records for zone `{0}`")]
    EmptyZone(String),
    #[error("{date}: missing day")]
    MissingDay { date: NaiveDate },
    #[error("{date}: {found} periods on a {hours}-hour day, expected {expected}")]
    DayLength { date: NaiveDate, hours: i64, found: usize, expected: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] spotvol_core::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Column mapping for a delimited export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub timestamp: String,
    pub zone: String,
    pub price: String,
    /// `None` picks `;` or `,` from the header line.
    pub delimiter: Option<char>,
    /// Time zone for timestamps without an offset.
    pub naive_timezone: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            zone: "zone".into(),
            price: "price".into(),
            delimiter: None,
            naive_timezone: "UTC".into(),
        }
    }
}

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>().map_err(|_| IngestError::UnknownTimezone(name.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub instant: DateTime<Utc>,
    pub zone: String,
    pub price: f64,
    /// 1-based line in the source.
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateRecord {
    pub zone: String,
    pub instant: DateTime<Utc>,
    pub dropped: f64,
    pub kept: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedPrices {
    /// Sorted by instant, then zone; one record per (zone, instant).
    pub records: Vec<RawRecord>,
    pub duplicates: Vec<DuplicateRecord>,
}

impl ParsedPrices {
    pub fn has_duplicates(&self) -> bool {
        !self.duplicates.is_empty()
    }

    pub fn zones(&self) -> Vec<String> {
        let mut z: Vec<String> = self.records.iter().map(|r| r.zone.clone()).collect();
        z.sort();
        z.dedup();
        z
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.matches(';').count() > header.matches(',').count() {
        b';'
    } else {
        b','
    }
}

fn parse_instant(raw: &str, naive_tz: &Tz) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let naive = ["%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())?;
    match naive_tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => Some(t.with_timezone(&Utc)),
        LocalResult::Ambiguous(early, _) => Some(early.with_timezone(&Utc)),
        LocalResult::None => None,
    }
}

pub fn parse_price_csv<R: Read>(mut source: R, schema: &CsvSchema) -> Result<ParsedPrices> {
    let naive_tz = parse_timezone(&schema.naive_timezone)?;
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| IngestError::Malformed { line: 0, msg: e.to_string() })?;
    if text.trim().is_empty() {
        return Ok(ParsedPrices::default());
    }
    let delim = schema.delimiter.map(|c| c as u8).unwrap_or_else(|| detect_delimiter(&text));
    let mut rdr = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let (ti, zi, pi) = (col(&schema.timestamp)?, col(&schema.zone)?, col(&schema.price)?);

    let mut latest: BTreeMap<(String, DateTime<Utc>), RawRecord> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).ok_or_else(|| IngestError::Malformed { line, msg: format!("missing field {}", i + 1) });
        let ts = field(ti)?;
        let instant = parse_instant(ts, &naive_tz).ok_or_else(|| IngestError::Malformed { line, msg: format!("bad timestamp `{ts}`") })?;
        let raw_price = field(pi)?;
        let normalized = if delim == b';' { raw_price.replace(',', ".") } else { raw_price.to_string() };
        let price: f64 = normalized
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite())
            .ok_or_else(|| IngestError::Malformed { line, msg: format!("bad price `{raw_price}`") })?;
        let zone = field(zi)?.to_string();
        let rec = RawRecord { instant, zone: zone.clone(), price, line };
        if let Some(prev) = latest.insert((zone.clone(), instant), rec) {
            duplicates.push(DuplicateRecord { zone, instant, dropped: prev.price, kept: price });
        }
    }
    let mut records: Vec<RawRecord> = latest.into_values().collect();
    records.sort_by(|a, b| a.instant.cmp(&b.instant).then_with(|| a.zone.cmp(&b.zone)));
    Ok(ParsedPrices { records, duplicates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DstPolicy {
    /// Impute short days from neighbouring periods and average overlapping ones.
    #[default]
    Repair,
    /// Treat any incomplete or overfull day as an error.
    Reject,
}

/// Length of a local calendar day in hours (23, 24 or 25 around transitions).
pub fn local_day_hours(tz: &Tz, date: NaiveDate) -> i64 {
    let midnight = |d: NaiveDate| {
        let t = d.and_hms_opt(0, 0, 0).expect("midnight");
        // A zone that skips midnight starts the day at the first valid instant.
        (0..=120)
            .find_map(|m| tz.from_local_datetime(&(t + Duration::minutes(m))).earliest())
            .map(|x| x.with_timezone(&Utc))
    };
    match (midnight(date), date.succ_opt().and_then(midnight)) {
        (Some(a), Some(b)) => (b - a).num_minutes().div_euclid(60),
        _ => 24,
    }
}

fn repair_day(
    date: NaiveDate,
    hours: i64,
    cells: &[Vec<f64>],
    widths: &[f64],
    policy: DstPolicy,
    log: &mut Vec<AuditRecord>,
) -> Result<Vec<f64>> {
    let d = cells.len();
    let found: usize = cells.iter().map(Vec::len).sum();
    let wrong = || IngestError::DayLength { date, hours, found, expected: d };
    if cells.iter().all(|c| c.len() == 1) {
        return Ok(cells.iter().map(|c| c[0]).collect());
    }
    if policy == DstPolicy::Reject || hours == 24 {
        return Err(wrong());
    }
    let hour = std::f64::consts::TAU / 24.0;
    let width_of = |pred: &dyn Fn(usize) -> bool| (0..d).filter(|&i| pred(i)).map(|i| widths[i]).sum::<f64>();
    if hours < 24 {
        if cells.iter().any(|c| c.len() > 1) || (width_of(&|i| cells[i].is_empty()) - hour).abs() > 1e-9 {
            return Err(wrong());
        }
        let mut row: Vec<Option<f64>> = cells.iter().map(|c| c.first().copied()).collect();
        let known: Vec<Option<f64>> = row.clone();
        for i in 0..d {
            if row[i].is_some() {
                continue;
            }
            let left = (0..i).rev().find_map(|j| known[j]);
            let right = (i + 1..d).find_map(|j| known[j]);
            let value = match (left, right) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => return Err(wrong()),
            };
            row[i] = Some(value);
            log.push(AuditRecord { date, action: AuditAction::Imputed { bin: i, value } });
        }
        Ok(row.into_iter().map(|v| v.expect("filled")).collect())
    } else {
        if cells.iter().any(|c| c.is_empty() || c.len() > 2) || (width_of(&|i| cells[i].len() == 2) - hour).abs() > 1e-9 {
            return Err(wrong());
        }
        Ok(cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.len() == 2 {
                    log.push(AuditRecord { date, action: AuditAction::Merged { bin: i, first: c[0], second: c[1] } });
                    0.5 * (c[0] + c[1])
                } else {
                    c[0]
                }
            })
            .collect())
    }
}

/// Assemble one zone's records into a gap-free daily panel in local civil time.
pub fn build_panel(parsed: &ParsedPrices, zone: &str, tz: &Tz, partition: &DeliveryPartition, policy: DstPolicy) -> Result<PricePanel> {
    let d = partition.bins();
    let mut days: BTreeMap<NaiveDate, Vec<Vec<f64>>> = BTreeMap::new();
    for r in parsed.records.iter().filter(|r| r.zone == zone) {
        let local = r.instant.with_timezone(tz);
        let bin = partition.bin_of(time_to_angle(local.hour(), local.minute()));
        days.entry(local.date_naive()).or_insert_with(|| vec![Vec::new(); d])[bin].push(r.price);
    }
    let (first, last) = match (days.keys().next(), days.keys().next_back()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(IngestError::EmptyZone(zone.to_string())),
    };
    let mut log = Vec::new();
    for dup in parsed.duplicates.iter().filter(|x| x.zone == zone) {
        let local = dup.instant.with_timezone(tz);
        log.push(AuditRecord {
            date: local.date_naive(),
            action: AuditAction::Duplicate { timestamp: dup.instant.naive_utc(), dropped: dup.dropped, kept: dup.kept },
        });
    }
    let widths = partition.widths();
    let n = (last - first).num_days() as usize + 1;
    let mut values = Mat::zeros(n, d);
    let mut dates = Vec::with_capacity(n);
    for (row, date) in first.iter_days().take(n).enumerate() {
        let cells = days.get(&date).ok_or(IngestError::MissingDay { date })?;
        let repaired = repair_day(date, local_day_hours(tz, date), cells, &widths, policy, &mut log)?;
        for (j, v) in repaired.into_iter().enumerate() {
            values[(row, j)] = v;
        }
        dates.push(date);
    }
    log.sort_by_key(|r| r.date);
    Ok(PricePanel::new(dates, values, partition.clone(), zone, log)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::default()
    }

    #[test]
    fn three_rows_sorted() {
        let text = "timestamp,zone,price\n2021-01-01T02:00:00Z,DE,3\n2021-01-01T00:00:00Z,DE,1\n2021-01-01T01:00:00Z,DE,2\n";
        let p = parse_price_csv(text.as_bytes(), &schema()).unwrap();
        let prices: Vec<f64> = p.records.iter().map(|r| r.price).collect();
        assert_eq!(prices, vec![1.0, 2.0, 3.0]);
        assert!(!p.has_duplicates());
    }

    #[test]
    fn duplicate_keeps_last() {
        let text = "timestamp,zone,price\n2021-01-01 00:00,DE,1\n2021-01-01 00:00,DE,5\n";
        let p = parse_price_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].price, 5.0);
        assert_eq!(p.duplicates[0].dropped, 1.0);
    }

    #[test]
    fn empty_input() {
        assert!(parse_price_csv("".as_bytes(), &schema()).unwrap().records.is_empty());
    }

    #[test]
    fn semicolon_and_decimal_comma() {
        let text = "timestamp;zone;price\n2021-01-01 00:00;NO1;-1,5\n";
        let p = parse_price_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(p.records[0].price, -1.5);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "timestamp,zone,price\n2021-01-01 00:00,DE,1\n2021-01-01 01:00,DE,abc\n";
        match parse_price_csv(text.as_bytes(), &schema()) {
            Err(IngestError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_timezone() {
        let s = CsvSchema { naive_timezone: "Mars/Olympus".into(), ..schema() };
        assert!(matches!(parse_price_csv("a".as_bytes(), &s), Err(IngestError::UnknownTimezone(_))));
    }

    #[test]
    fn day_lengths_in_berlin() {
        let tz: Tz = "Europe/Berlin".parse().unwrap();
        assert_eq!(local_day_hours(&tz, NaiveDate::from_ymd_opt(2021, 3, 28).unwrap()), 23);
        assert_eq!(local_day_hours(&tz, NaiveDate::from_ymd_opt(2021, 10, 31).unwrap()), 25);
        assert_eq!(local_day_hours(&tz, NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()), 24);
    }

    #[test]
    fn short_day_imputes_neighbour_mean() {
        let mut cells = vec![vec![1.0]; 24];
        cells[1] = vec![10.0];
        cells[2] = vec![];
        cells[3] = vec![14.0];
        let mut log = Vec::new();
        let date = NaiveDate::from_ymd_opt(2021, 3, 28).unwrap();
        let row = repair_day(date, 23, &cells, &[std::f64::consts::TAU / 24.0; 24], DstPolicy::Repair, &mut log).unwrap();
        assert_eq!(row[2], 12.0);
        assert_eq!(log.len(), 1);
        assert!(repair_day(date, 23, &cells, &[std::f64::consts::TAU / 24.0; 24], DstPolicy::Reject, &mut log).is_err());
    }

    #[test]
    fn long_day_merges_overlap() {
        let mut cells = vec![vec![1.0]; 24];
        cells[2] = vec![8.0, 12.0];
        let mut log = Vec::new();
        let date = NaiveDate::from_ymd_opt(2021, 10, 31).unwrap();
        let row = repair_day(date, 25, &cells, &[std::f64::consts::TAU / 24.0; 24], DstPolicy::Repair, &mut log).unwrap();
        assert_eq!(row[2], 10.0);
        assert!(matches!(log[0].action, AuditAction::Merged { bin: 2, .. }));
    }

    #[test]
    fn incomplete_regular_day_is_an_error() {
        let mut cells = vec![vec![1.0]; 24];
        cells[5] = vec![];
        let date = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap();
        assert!(matches!(
            repair_day(date, 24, &cells, &[std::f64::consts::TAU / 24.0; 24], DstPolicy::Repair, &mut Vec::new()),
            Err(IngestError::DayLength { found: 23, .. })
        ));
    }
}
