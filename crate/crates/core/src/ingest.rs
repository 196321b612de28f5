//! Tick ingestion: raw transaction files into per-day sessions, log
//! returns and session statistics.
//!
//! Input rows are `date,time,price,volume` (column order and delimiter are
//! configurable). Times are clock times of day; a tick's session time is
//! `clock - open_time` and must fall in `[0, T]`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("invalid format descriptor: {0}")]
    InvalidFormat(String),
    #[error("invalid calendar line {line}: {message}")]
    InvalidCalendar { line: usize, message: String },
    #[error("no data: no day has at least two ticks")]
    NoData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trading session: clock time of the open and session length `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    /// Seconds after midnight.
    pub open_time: f64,
    /// Session length in seconds.
    pub length: f64,
}

impl SessionSpec {
    pub fn new(open_time: f64, length: f64) -> Result<Self, IngestError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(IngestError::InvalidSession(format!("length must be > 0, got {length}")));
        }
        if !(open_time >= 0.0 && open_time.is_finite()) {
            return Err(IngestError::InvalidSession(format!("bad open time {open_time}")));
        }
        Ok(Self { open_time, length })
    }
}

impl Default for SessionSpec {
    /// 09:00 open, 7-hour session.
    fn default() -> Self {
        Self { open_time: 9.0 * 3600.0, length: 25200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    /// Seconds since the session open.
    pub t: f64,
    pub price: f64,
    /// Parsed for format fidelity; not used by any analysis.
    pub volume: u64,
}

/// All in-session ticks of one trading day, sorted by `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Day {
    pub date: NaiveDate,
    pub ticks: Vec<Tick>,
}

/// A log return, stamped with the time of the later transaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnPoint {
    pub day: NaiveDate,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub n_transactions: u64,
    /// Pooled mean inter-trade interval `<t>` in seconds.
    pub mean_dt: f64,
    pub n_days: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Date,
    Time,
    Price,
    Volume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatSpec {
    pub delimiter: char,
    /// Position of each column in a row.
    pub columns: Vec<Column>,
    /// Skip the first non-comment line.
    pub has_header: bool,
    /// Abort on the first malformed row instead of recording a diagnostic.
    pub fail_fast: bool,
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self {
            delimiter: ',',
            columns: vec![Column::Date, Column::Time, Column::Price, Column::Volume],
            has_header: false,
            fail_fast: false,
        }
    }
}

impl FormatSpec {
    /// Reads a `key = value` descriptor. Recognized keys: `delimiter`
    /// (a single character, or `tab`/`space`), `columns` (comma-separated
    /// permutation of date,time,price,volume), `header` and `fail_fast`
    /// (true/false). Lines starting with `#` are comments.
    pub fn from_descriptor(text: &str) -> Result<Self, IngestError> {
        let mut spec = Self::default();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| IngestError::InvalidFormat(format!("expected key = value: {line}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "delimiter" => {
                    spec.delimiter = match value {
                        "tab" | "\\t" => '\t',
                        "space" => ' ',
                        v if v.chars().count() == 1 => v.chars().next().unwrap(),
                        v => return Err(IngestError::InvalidFormat(format!("bad delimiter {v:?}"))),
                    }
                }
                "columns" => {
                    let cols = value
                        .split(',')
                        .map(|c| match c.trim() {
                            "date" => Ok(Column::Date),
                            "time" => Ok(Column::Time),
                            "price" => Ok(Column::Price),
                            "volume" => Ok(Column::Volume),
                            other => Err(IngestError::InvalidFormat(format!("unknown column {other:?}"))),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    for c in [Column::Date, Column::Time, Column::Price, Column::Volume] {
                        if cols.iter().filter(|&&x| x == c).count() != 1 {
                            return Err(IngestError::InvalidFormat(format!(
                                "column {c:?} must appear exactly once"
                            )));
                        }
                    }
                    spec.columns = cols;
                }
                "header" => spec.has_header = parse_bool(value)?,
                "fail_fast" => spec.fail_fast = parse_bool(value)?,
                other => return Err(IngestError::InvalidFormat(format!("unknown key {other:?}"))),
            }
        }
        Ok(spec)
    }

    fn index_of(&self, c: Column) -> usize {
        self.columns.iter().position(|&x| x == c).expect("validated column set")
    }
}

fn parse_bool(v: &str) -> Result<bool, IngestError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(IngestError::InvalidFormat(format!("expected boolean, got {v:?}"))),
    }
}

/// Per-date session overrides. A date whose session length differs from
/// the working session length (half-days, auction-only days) is excluded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Calendar {
    entries: HashMap<NaiveDate, SessionSpec>,
}

impl Calendar {
    /// Parses lines `yyyymmdd,hh:mm:ss,length_seconds`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| IngestError::InvalidCalendar { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            }
            let date = parse_date(fields[0]).map_err(bad)?;
            let open = parse_clock(fields[1]).map_err(bad)?;
            let length: f64 = fields[2].parse().map_err(|_| bad(format!("bad length {:?}", fields[2])))?;
            let spec = SessionSpec::new(open, length).map_err(|e| bad(e.to_string()))?;
            entries.insert(date, spec);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, date: NaiveDate, spec: SessionSpec) {
        self.entries.insert(date, spec);
    }

    /// Session for `date`, or `None` when the day is excluded.
    pub fn session_for(&self, date: NaiveDate, default: &SessionSpec) -> Option<SessionSpec> {
        match self.entries.get(&date) {
            None => Some(*default),
            Some(s) if s.length == default.length => Some(*s),
            Some(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Malformed,
    Reordered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based input line; 0 for day-level notices.
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub rows_read: usize,
    pub out_of_session: usize,
    pub excluded_days: Vec<NaiveDate>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTicks {
    /// Chronological.
    pub days: Vec<Day>,
    pub report: ParseReport,
}

impl ParsedTicks {
    pub fn n_ticks(&self) -> usize {
        self.days.iter().map(|d| d.ticks.len()).sum()
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y%m%d").map_err(|_| format!("bad date {s:?}"))
}

/// `hh:mm:ss` or `hh:mm:ss.fff` to seconds after midnight.
pub fn parse_clock(s: &str) -> Result<f64, String> {
    let bad = || format!("bad time {s:?}");
    let mut parts = s.split(':');
    let (h, m, sec) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(h), Some(m), Some(sec), None) => (h, m, sec),
        _ => return Err(bad()),
    };
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    let sec: f64 = sec.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 || !(0.0..60.0).contains(&sec) {
        return Err(bad());
    }
    Ok((h * 3600 + m * 60) as f64 + sec)
}

/// Inverse of [`parse_clock`]; exact for any value produced by it.
pub fn format_clock(seconds: f64) -> String {
    let whole = (seconds / 60.0).floor() as u64 * 60;
    let (h, m) = (whole / 3600, (whole / 60) % 60);
    // exact: whole >= seconds / 2 for seconds >= 120
    let mut sec = seconds - whole as f64;
    if sec >= 60.0 {
        sec = 59.999_999_999;
    }
    if sec.fract() == 0.0 {
        format!("{h:02}:{m:02}:{:02}", sec as u32)
    } else if sec < 10.0 {
        format!("{h:02}:{m:02}:0{sec}")
    } else {
        format!("{h:02}:{m:02}:{sec}")
    }
}

fn parse_row(
    line: &str,
    format: &FormatSpec,
) -> Result<(NaiveDate, f64, f64, u64), String> {
    let fields: Vec<&str> = line.split(format.delimiter).map(str::trim).collect();
    if fields.len() != format.columns.len() {
        return Err(format!("expected {} fields, got {}", format.columns.len(), fields.len()));
    }
    let date = parse_date(fields[format.index_of(Column::Date)])?;
    let clock = parse_clock(fields[format.index_of(Column::Time)])?;
    let price_s = fields[format.index_of(Column::Price)];
    let price: f64 = price_s.parse().map_err(|_| format!("bad price {price_s:?}"))?;
    if !(price > 0.0 && price.is_finite()) {
        return Err(format!("price must be positive, got {price_s}"));
    }
    let vol_s = fields[format.index_of(Column::Volume)];
    let volume: u64 = vol_s.parse().map_err(|_| format!("bad volume {vol_s:?}"))?;
    Ok((date, clock, price, volume))
}

/// Parses delimiter-separated transaction rows into chronological days.
///
/// Rows outside the session window are dropped and counted. Malformed rows
/// become diagnostics (or an error with `fail_fast`). Days whose ticks are
/// not in time order are stable-sorted and noted.
pub fn parse_ticks<R: BufRead>(
    input: R,
    spec: &SessionSpec,
    format: &FormatSpec,
    calendar: Option<&Calendar>,
) -> Result<ParsedTicks, IngestError> {
    let mut report = ParseReport::default();
    let mut by_day: BTreeMap<NaiveDate, Vec<Tick>> = BTreeMap::new();
    let mut excluded: BTreeMap<NaiveDate, ()> = BTreeMap::new();
    let mut header_pending = format.has_header;

    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        report.rows_read += 1;
        let (date, clock, price, volume) = match parse_row(trimmed, format) {
            Ok(row) => row,
            Err(message) => {
                if format.fail_fast {
                    return Err(IngestError::Malformed { line: lineno, message });
                }
                report.diagnostics.push(Diagnostic {
                    line: lineno,
                    kind: DiagnosticKind::Malformed,
                    message,
                });
                continue;
            }
        };
        let session = match calendar {
            Some(cal) => match cal.session_for(date, spec) {
                Some(s) => s,
                None => {
                    excluded.insert(date, ());
                    continue;
                }
            },
            None => *spec,
        };
        let t = clock - session.open_time;
        if !(0.0..=session.length).contains(&t) {
            report.out_of_session += 1;
            continue;
        }
        by_day.entry(date).or_default().push(Tick { t, price, volume });
    }

    let mut days = Vec::with_capacity(by_day.len());
    for (date, mut ticks) in by_day {
        if ticks.windows(2).any(|w| w[1].t < w[0].t) {
            ticks.sort_by(|a, b| a.t.total_cmp(&b.t));
            log::warn!("{date}: timestamps out of order, reordered");
            report.diagnostics.push(Diagnostic {
                line: 0,
                kind: DiagnosticKind::Reordered,
                message: format!("{}: timestamps out of order, stable-sorted", date.format("%Y%m%d")),
            });
        }
        days.push(Day { date, ticks });
    }
    report.excluded_days = excluded.into_keys().collect();
    Ok(ParsedTicks { days, report })
}

/// Writes days in the canonical `date,time,price,volume` form. Re-parsing
/// the output with the same session reproduces the input exactly.
pub fn write_ticks<W: Write>(mut w: W, days: &[Day], spec: &SessionSpec) -> std::io::Result<()> {
    writeln!(w, "# date,time,price,volume")?;
    for day in days {
        let date = day.date.format("%Y%m%d");
        for tick in &day.ticks {
            writeln!(
                w,
                "{date},{},{},{}",
                format_clock(spec.open_time + tick.t),
                tick.price,
                tick.volume
            )?;
        }
    }
    Ok(())
}

/// Log returns per day; returns never span two days.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnSeries {
    pub points: Vec<ReturnPoint>,
    /// Days with fewer than two ticks.
    pub skipped_days: Vec<NaiveDate>,
}

pub fn compute_returns(days: &[Day]) -> ReturnSeries {
    let mut out = ReturnSeries::default();
    for day in days {
        if day.ticks.len() < 2 {
            log::warn!("{}: fewer than two ticks, no returns", day.date);
            out.skipped_days.push(day.date);
            continue;
        }
        out.points.extend(day.ticks.windows(2).map(|w| ReturnPoint {
            day: day.date,
            t: w[1].t,
            value: w[1].price.ln() - w[0].price.ln(),
        }));
    }
    out
}

/// Returns divided by the preceding inter-trade interval (return per
/// second). Pairs with a zero interval have no defined velocity and are
/// skipped.
pub fn compute_velocities(days: &[Day]) -> ReturnSeries {
    let mut out = ReturnSeries::default();
    for day in days {
        if day.ticks.len() < 2 {
            out.skipped_days.push(day.date);
            continue;
        }
        out.points.extend(day.ticks.windows(2).filter(|w| w[1].t > w[0].t).map(|w| ReturnPoint {
            day: day.date,
            t: w[1].t,
            value: (w[1].price.ln() - w[0].price.ln()) / (w[1].t - w[0].t),
        }));
    }
    out
}

pub fn session_stats(days: &[Day]) -> Result<SessionStats, IngestError> {
    let mut total_span = 0.0;
    let mut intervals = 0u64;
    let mut n_days = 0u64;
    let mut n_transactions = 0u64;
    for day in days.iter().filter(|d| d.ticks.len() >= 2) {
        total_span += day.ticks.windows(2).map(|w| w[1].t - w[0].t).sum::<f64>();
        intervals += day.ticks.len() as u64 - 1;
        n_transactions += day.ticks.len() as u64;
        n_days += 1;
    }
    if intervals == 0 || total_span <= 0.0 {
        return Err(IngestError::NoData);
    }
    Ok(SessionStats { n_transactions, mean_dt: total_span / intervals as f64, n_days })
}
