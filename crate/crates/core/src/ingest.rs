//! Transaction log parsing and fixed-duration windowing.
//!
//! Input is a stream of per-request log lines (CSV or NDJSON). Lines that
//! fail to parse are collected in a rejects report rather than silently
//! dropped; structural problems (bad header, mixed timestamp styles) abort
//! the whole parse.

use std::io::BufRead;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Expected CSV header, in order.
pub const CSV_HEADER: &str = "timestamp,transaction_type,response_ms";

/// One serviced request as observed at the front of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    /// Absolute arrival time, epoch milliseconds.
    pub timestamp_ms: i64,
    /// Transaction type label, non-empty.
    pub tx_type: String,
    /// End-to-end response time in milliseconds, nonnegative.
    pub response_ms: f64,
}

/// All records falling in one `[window_start, window_start + window_length)`
/// interval, plus the fittable flag derived from the sample-size floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    /// Window start, epoch milliseconds.
    pub window_start: i64,
    /// Window length in milliseconds.
    pub window_length: i64,
    /// Records whose timestamp falls inside the half-open interval.
    pub records: Vec<TransactionRecord>,
    /// False when the window holds fewer than `min_samples` records.
    /// Unfittable windows are kept for GoS reporting but excluded from
    /// signature fitting and change sequences.
    pub fittable: bool,
}

impl SampleWindow {
    /// Number of arrivals in the window.
    pub fn arrival_count(&self) -> usize {
        self.records.len()
    }
}

/// Input container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Ndjson,
}

/// A line that failed per-line validation; reported, not dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line_no: u64,
    pub reason: String,
}

/// Parse output: accepted records in source order plus the rejects report.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<TransactionRecord>,
    pub rejects: Vec<RejectedLine>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad CSV header: expected `{CSV_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error(
        "mixed timestamp styles: line {line_no} switches between epoch-milliseconds and RFC 3339"
    )]
    MixedTimestampStyles { line_no: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimestampStyle {
    EpochMillis,
    Rfc3339,
}

/// Accepts integer epoch-milliseconds or an RFC 3339 string.
fn parse_timestamp(raw: &str) -> Option<(i64, TimestampStyle)> {
    let looks_numeric = {
        let digits = raw.strip_prefix('-').unwrap_or(raw);
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if looks_numeric {
        return raw
            .parse::<i64>()
            .ok()
            .map(|ms| (ms, TimestampStyle::EpochMillis));
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|dt| (dt.timestamp_millis(), TimestampStyle::Rfc3339))
}

struct LineContext {
    style: Option<TimestampStyle>,
}

impl LineContext {
    /// Enforces one timestamp style per file.
    fn check_style(&mut self, style: TimestampStyle, line_no: u64) -> Result<(), IngestError> {
        match self.style {
            None => {
                self.style = Some(style);
                Ok(())
            }
            Some(existing) if existing == style => Ok(()),
            Some(_) => Err(IngestError::MixedTimestampStyles { line_no }),
        }
    }
}

/// Parse a transaction log stream into records, in source order.
///
/// Malformed lines are counted in the rejects report and parsing continues;
/// header mismatch or mixed timestamp styles abort with an error.
pub fn parse_records<R: BufRead>(source: R, format: InputFormat) -> Result<ParsedLog, IngestError> {
    match format {
        InputFormat::Csv => parse_csv(source),
        InputFormat::Ndjson => parse_ndjson(source),
    }
}

fn validate_fields(
    ts: Option<(i64, TimestampStyle)>,
    tx_type: &str,
    response: Option<f64>,
    ctx: &mut LineContext,
    line_no: u64,
    out: &mut ParsedLog,
) -> Result<(), IngestError> {
    let (timestamp_ms, style) = match ts {
        Some(v) => v,
        None => {
            out.rejects.push(RejectedLine {
                line_no,
                reason: "timestamp is neither epoch-milliseconds nor RFC 3339".into(),
            });
            return Ok(());
        }
    };
    ctx.check_style(style, line_no)?;
    if tx_type.is_empty() {
        out.rejects.push(RejectedLine {
            line_no,
            reason: "transaction_type is empty".into(),
        });
        return Ok(());
    }
    let response_ms = match response {
        Some(v) if v.is_finite() && v >= 0.0 => v,
        Some(_) => {
            out.rejects.push(RejectedLine {
                line_no,
                reason: "response_ms must be a finite nonnegative number".into(),
            });
            return Ok(());
        }
        None => {
            out.rejects.push(RejectedLine {
                line_no,
                reason: "response_ms is not a number".into(),
            });
            return Ok(());
        }
    };
    out.records.push(TransactionRecord {
        timestamp_ms,
        tx_type: tx_type.to_string(),
        response_ms,
    });
    Ok(())
}

fn parse_csv<R: BufRead>(source: R) -> Result<ParsedLog, IngestError> {
    let mut out = ParsedLog::default();
    let mut ctx = LineContext { style: None };
    let mut lines = source.lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(IngestError::BadHeader {
                found: String::new(),
            })
        }
    };
    if header.trim() != CSV_HEADER {
        return Err(IngestError::BadHeader {
            found: header.trim().to_string(),
        });
    }

    let mut line_no = 1u64;
    for line in lines {
        let line = line?;
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        // Commas are field separators only; quoting is not supported, so a
        // tx_type containing a comma shows up as a field-count mismatch.
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            out.rejects.push(RejectedLine {
                line_no,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
            continue;
        }
        let ts = parse_timestamp(fields[0].trim());
        let response = fields[2].trim().parse::<f64>().ok();
        validate_fields(ts, fields[1].trim(), response, &mut ctx, line_no, &mut out)?;
    }
    Ok(out)
}

fn parse_ndjson<R: BufRead>(source: R) -> Result<ParsedLog, IngestError> {
    let mut out = ParsedLog::default();
    let mut ctx = LineContext { style: None };
    let mut line_no = 0u64;

    for line in source.lines() {
        let line = line?;
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(trimmed) {
            Ok(v) => v,
            Err(e) => {
                out.rejects.push(RejectedLine {
                    line_no,
                    reason: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let obj = match value.as_object() {
            Some(o) => o,
            None => {
                out.rejects.push(RejectedLine {
                    line_no,
                    reason: "line is not a JSON object".into(),
                });
                continue;
            }
        };
        let ts = match obj.get("timestamp") {
            Some(serde_json::Value::String(s)) => parse_timestamp(s),
            Some(serde_json::Value::Number(n)) => {
                n.as_i64().map(|ms| (ms, TimestampStyle::EpochMillis))
            }
            _ => None,
        };
        let tx_type = obj
            .get("transaction_type")
            .and_then(|v| v.as_str())
            .unwrap_or("");
        let response = obj.get("response_ms").and_then(|v| v.as_f64());
        validate_fields(ts, tx_type, response, &mut ctx, line_no, &mut out)?;
    }
    Ok(out)
}

/// Partition records into contiguous fixed-length windows aligned to the
/// first record's timestamp truncated to the window length.
///
/// Input is sorted by timestamp if it is not already. Windows with fewer
/// than `min_samples` records (including empty gap windows) are emitted
/// with `fittable = false`. Empty input yields no windows.
pub fn window_records(
    mut records: Vec<TransactionRecord>,
    window_length_ms: i64,
    min_samples: usize,
) -> Vec<SampleWindow> {
    assert!(window_length_ms > 0, "window length must be positive");
    if records.is_empty() {
        return Vec::new();
    }
    if !records
        .windows(2)
        .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms)
    {
        records.sort_by_key(|r| r.timestamp_ms);
    }

    let aligned_start = records[0].timestamp_ms.div_euclid(window_length_ms) * window_length_ms;
    let last_ts = records.last().expect("non-empty").timestamp_ms;
    let n_windows = ((last_ts - aligned_start).div_euclid(window_length_ms) + 1) as usize;

    let mut windows: Vec<SampleWindow> = (0..n_windows)
        .map(|i| SampleWindow {
            window_start: aligned_start + (i as i64) * window_length_ms,
            window_length: window_length_ms,
            records: Vec::new(),
            fittable: false,
        })
        .collect();

    for record in records {
        let idx = (record.timestamp_ms - aligned_start).div_euclid(window_length_ms) as usize;
        windows[idx].records.push(record);
    }
    for window in &mut windows {
        // empty gap windows are never fittable, whatever the floor
        window.fittable = !window.records.is_empty() && window.records.len() >= min_samples;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn record(ts: i64, tx: &str, resp: f64) -> TransactionRecord {
        TransactionRecord {
            timestamp_ms: ts,
            tx_type: tx.into(),
            response_ms: resp,
        }
    }

    #[test]
    fn csv_line_maps_fields() {
        let input = format!("{CSV_HEADER}\n2013-02-04T08:00:01.250Z,login,142.0\n");
        let parsed = parse_records(Cursor::new(input), InputFormat::Csv).unwrap();
        assert_eq!(parsed.rejects.len(), 0);
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.tx_type, "login");
        assert_eq!(r.response_ms, 142.0);
        let expected = DateTime::parse_from_rfc3339("2013-02-04T08:00:01.250Z")
            .unwrap()
            .timestamp_millis();
        assert_eq!(r.timestamp_ms, expected);
    }

    #[test]
    fn csv_negative_response_rejected() {
        let input = format!("{CSV_HEADER}\n1000,login,-5\n");
        let parsed = parse_records(Cursor::new(input), InputFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 0);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].line_no, 2);
    }

    #[test]
    fn csv_empty_file_with_header_ok() {
        let input = format!("{CSV_HEADER}\n");
        let parsed = parse_records(Cursor::new(input), InputFormat::Csv).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.rejects.is_empty());
    }

    #[test]
    fn csv_header_mismatch_is_schema_error() {
        let input = "time,type,ms\n1000,login,5\n";
        let err = parse_records(Cursor::new(input), InputFormat::Csv).unwrap_err();
        assert!(matches!(err, IngestError::BadHeader { .. }));
    }

    #[test]
    fn csv_extra_fields_rejected_per_line() {
        let input = format!("{CSV_HEADER}\n1000,\"a,b\",5\n2000,ok,6\n");
        let parsed = parse_records(Cursor::new(input), InputFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].line_no, 2);
    }

    #[test]
    fn mixed_timestamp_styles_rejected() {
        let input = format!("{CSV_HEADER}\n1000,login,5\n2013-02-04T08:00:01Z,login,6\n");
        let err = parse_records(Cursor::new(input), InputFormat::Csv).unwrap_err();
        assert!(matches!(
            err,
            IngestError::MixedTimestampStyles { line_no: 3 }
        ));
    }

    #[test]
    fn ndjson_accepts_epoch_and_rejects_bad_lines() {
        let input = concat!(
            r#"{"timestamp": 1000, "transaction_type": "login", "response_ms": 5.5}"#,
            "\n",
            "not json\n",
            r#"{"timestamp": 2000, "transaction_type": "", "response_ms": 1}"#,
            "\n",
        );
        let parsed = parse_records(Cursor::new(input), InputFormat::Ndjson).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].timestamp_ms, 1000);
        assert_eq!(parsed.rejects.len(), 2);
        assert_eq!(parsed.rejects[0].line_no, 2);
        assert_eq!(parsed.rejects[1].line_no, 3);
    }

    #[test]
    fn twelve_minutes_make_three_windows() {
        let records: Vec<_> = (0..100)
            .map(|i| record(1_000_000_000 + i * 7_200, "t", 10.0))
            .collect();
        // spans 99 * 7200 ms = 712.8 s, just under 12 minutes
        let windows = window_records(records, 300_000, 30);
        assert_eq!(windows.len(), 3);
    }

    #[test]
    fn thin_window_flagged_unfittable() {
        let records: Vec<_> = (0..10).map(|i| record(i * 10, "t", 1.0)).collect();
        let windows = window_records(records, 300_000, 30);
        assert_eq!(windows.len(), 1);
        assert!(!windows[0].fittable);
        assert_eq!(windows[0].arrival_count(), 10);
    }

    #[test]
    fn boundary_record_belongs_to_later_window() {
        let records = vec![record(0, "t", 1.0), record(300_000, "t", 1.0)];
        let windows = window_records(records, 300_000, 1);
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].arrival_count(), 1);
        assert_eq!(windows[1].window_start, 300_000);
        assert_eq!(windows[1].arrival_count(), 1);
    }

    #[test]
    fn empty_input_makes_no_windows() {
        assert!(window_records(Vec::new(), 300_000, 30).is_empty());
    }

    #[test]
    fn gap_windows_are_emitted_empty() {
        let records = vec![record(0, "t", 1.0), record(700_000, "t", 1.0)];
        let windows = window_records(records, 300_000, 1);
        assert_eq!(windows.len(), 3);
        assert_eq!(windows[1].arrival_count(), 0);
        assert!(!windows[1].fittable);
    }

    #[test]
    fn empty_windows_stay_unfittable_at_zero_floor() {
        let records = vec![record(0, "t", 1.0), record(700_000, "t", 1.0)];
        let windows = window_records(records, 300_000, 0);
        assert!(windows[0].fittable);
        assert!(!windows[1].fittable);
    }

    proptest! {
        #[test]
        fn windowing_conserves_records(
            timestamps in proptest::collection::vec(0i64..10_000_000, 1..200),
            window_length in 1_000i64..1_000_000,
        ) {
            let records: Vec<_> = timestamps
                .iter()
                .map(|&ts| record(ts, "t", 1.0))
                .collect();
            let windows = window_records(records.clone(), window_length, 5);

            let total: usize = windows.iter().map(|w| w.arrival_count()).sum();
            prop_assert_eq!(total, records.len());

            let mut sorted = records;
            sorted.sort_by_key(|r| r.timestamp_ms);
            let rejoined: Vec<_> = windows.iter().flat_map(|w| w.records.clone()).collect();
            prop_assert_eq!(rejoined, sorted);

            for w in &windows {
                for r in &w.records {
                    prop_assert!(r.timestamp_ms >= w.window_start);
                    prop_assert!(r.timestamp_ms < w.window_start + w.window_length);
                }
            }
        }

        #[test]
        fn windowing_is_deterministic(
            timestamps in proptest::collection::vec(0i64..1_000_000, 1..100),
        ) {
            let records: Vec<_> = timestamps
                .iter()
                .map(|&ts| record(ts, "t", 1.0))
                .collect();
            let a = window_records(records.clone(), 60_000, 10);
            let b = window_records(records, 60_000, 10);
            prop_assert_eq!(a, b);
        }
    }
}
