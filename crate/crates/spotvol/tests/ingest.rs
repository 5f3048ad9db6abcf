use std::fmt::Write as _;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use spotvol::config::PipelineConfig;
use spotvol::formats::read_dated_matrix;
use spotvol::ingest::{build_panel, parse_price_csv, parse_timezone, CsvSchema, DstPolicy};
use spotvol::pipeline::{files, run_stage, zone_dir, Stage};
use spotvol_core::panel::AuditAction;
use spotvol_core::DeliveryPartition;

/// Hourly prices for one local year of 2021 with UTC stamps; the value is the hour index.
/// `offset` is the zone's UTC offset on New Year's Day.
fn year_csv(zone: &str, offset: i64) -> String {
    let start = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap() - Duration::hours(offset);
    let mut s = String::from("timestamp,zone,price\n");
    for h in 0..365 * 24 {
        let t = start + Duration::hours(h);
        writeln!(s, "{},{zone},{}", t.format("%Y-%m-%dT%H:%M:%SZ"), h).unwrap();
    }
    s
}

fn berlin_2021() -> spotvol_core::PricePanel {
    let parsed = parse_price_csv(year_csv("DE", 1).as_bytes(), &CsvSchema::default()).unwrap();
    let tz = parse_timezone("Europe/Berlin").unwrap();
    build_panel(&parsed, "DE", &tz, &DeliveryPartition::uniform(24).unwrap(), DstPolicy::Repair).unwrap()
}

#[test]
fn berlin_year_has_one_row_per_local_day() {
    let p = berlin_2021();
    assert_eq!(p.len(), 365);
    assert_eq!(p.bins(), 24);
    assert_eq!(p.dates()[0], NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
    assert_eq!(p.dates()[364], NaiveDate::from_ymd_opt(2021, 12, 31).unwrap());
}

#[test]
fn berlin_transitions_are_repaired_and_logged() {
    let p = berlin_2021();
    let spring = NaiveDate::from_ymd_opt(2021, 3, 28).unwrap();
    let autumn = NaiveDate::from_ymd_opt(2021, 10, 31).unwrap();
    let log = p.dst_log();
    assert_eq!(log.len(), 2);
    assert!(matches!(log[0].action, AuditAction::Imputed { bin: 2, .. }) && log[0].date == spring);
    assert!(matches!(log[1].action, AuditAction::Merged { bin: 2, .. }) && log[1].date == autumn);

    // Prices are UTC hour counters, so the repaired values are exact.
    let row = |d: NaiveDate| p.dates().iter().position(|x| *x == d).unwrap();
    let v = p.values();
    let s = row(spring);
    assert_eq!(v[(s, 2)], 0.5 * (v[(s, 1)] + v[(s, 3)]));
    assert_eq!(v[(s, 3)] - v[(s, 1)], 1.0);
    let a = row(autumn);
    assert_eq!(v[(a, 2)], v[(a, 1)] + 1.5);
    assert_eq!(v[(a, 3)], v[(a, 2)] + 1.5);
}

#[test]
fn reject_policy_refuses_transition_days() {
    let parsed = parse_price_csv(year_csv("DE", 1).as_bytes(), &CsvSchema::default()).unwrap();
    let tz = parse_timezone("Europe/Berlin").unwrap();
    let err = build_panel(&parsed, "DE", &tz, &DeliveryPartition::uniform(24).unwrap(), DstPolicy::Reject).unwrap_err();
    assert!(err.to_string().contains("hour day"), "{err}");
}

#[test]
fn gap_in_records_is_a_missing_day() {
    let text: String = year_csv("FR", 0).lines().filter(|l| !l.starts_with("2021-06-15")).map(|l| format!("{l}\n")).collect();
    let parsed = parse_price_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
    let tz = parse_timezone("UTC").unwrap();
    let err = build_panel(&parsed, "FR", &tz, &DeliveryPartition::uniform(24).unwrap(), DstPolicy::Repair).unwrap_err();
    assert!(err.to_string().contains("2021-06-15"), "{err}");
}

#[test]
fn ingest_stage_reads_config_relative_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("raw")).unwrap();
    std::fs::write(dir.path().join("raw/de.csv"), year_csv("DE", 1)).unwrap();
    let out = dir.path().join("out");
    let toml = format!(
        "out_dir = {:?}\n[[zones]]\nname = \"DE\"\ninput = \"raw/de.csv\"\ntimezone = \"Europe/Berlin\"\n",
        out.display().to_string()
    );
    let cfg_path = dir.path().join("pipeline.toml");
    std::fs::write(&cfg_path, toml).unwrap();

    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.zones[0].input, dir.path().join("raw/de.csv"));
    run_stage(&cfg, Stage::Ingest, "DE").unwrap();
    let (names, dates, m) = read_dated_matrix(&zone_dir(&cfg, "DE").join(files::PANEL_CSV)).unwrap();
    assert_eq!(names.len(), 24);
    assert_eq!(dates.len(), 365);
    assert_eq!(m.nrows(), dates.len());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = PipelineConfig::from_toml("seed = 1\nwindow = 7\n[simulation]\n").unwrap_err();
    assert!(format!("{err:#}").contains("window"), "{err:#}");
}
