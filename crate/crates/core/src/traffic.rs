//! Detector data processing: raw per-vehicle events to minute intervals,
//! breakdown observations and the free-flow intensity histogram.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::{DateTime, Duration, DurationRound, NaiveDateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::capacity::{build_histogram, IntensityHistogram};
use crate::error::{Error, Result};

pub const EVENTS_HEADER: [&str; 4] = ["timestamp", "speed_kmh", "length_m", "valid"];
pub const MINUTES_HEADER: [&str; 5] = [
    "minute_start",
    "intensity_pce",
    "harmonic_speed_kmh",
    "vehicle_count",
    "empty_flag",
];

const MAX_SPEED_KMH: f64 = 250.0;
const MAX_LENGTH_M: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleEvent {
    pub timestamp: DateTime<Utc>,
    pub speed: f64,
    pub length: f64,
    pub valid: bool,
}

/// One aggregated interval. Width is 1, 3 or 5 minutes; `start` is the
/// first minute covered.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowInterval {
    pub start: DateTime<Utc>,
    pub width: u32,
    /// PCE; vehicles longer than the PCE threshold count twice.
    pub intensity: u32,
    /// Harmonic mean speed for 1-minute intervals, arithmetic mean of the
    /// defined minute means for wider ones. `None` when no speed is defined.
    pub mean_speed: Option<f64>,
    pub vehicle_count: u32,
    /// Vehicles reported at 0 km/h; counted in intensity only.
    pub zero_speed_count: u32,
    /// Set on wider intervals when any constituent minute is empty.
    pub partial: bool,
}

impl FlowInterval {
    pub fn is_empty(&self) -> bool {
        self.vehicle_count == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownObservation {
    #[serde(rename = "minute")]
    pub breakdown_minute: DateTime<Utc>,
    /// PCE per 3 minutes.
    #[serde(rename = "flow_pce_3min")]
    pub breakdown_flow: u32,
    pub shifted_back: bool,
}

/// Thresholds of the breakdown detection state machine (km/h, minutes, m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub breakdown_speed: f64,
    pub discard_speed: f64,
    pub recovery_speed: f64,
    pub breakdown_window: usize,
    pub recovery_window: usize,
    pub pce_length_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            breakdown_speed: 40.0,
            discard_speed: 50.0,
            recovery_speed: 70.0,
            breakdown_window: 3,
            recovery_window: 5,
            pce_length_threshold: 9.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discard_speed >= self.breakdown_speed) {
            return Err(Error::InvalidParameter {
                name: "discard_speed",
                value: self.discard_speed,
                reason: "must be at least the breakdown speed",
            });
        }
        if !(self.recovery_speed > self.discard_speed) {
            return Err(Error::InvalidParameter {
                name: "recovery_speed",
                value: self.recovery_speed,
                reason: "must exceed the discard speed",
            });
        }
        if self.breakdown_window == 0 || self.recovery_window == 0 {
            return Err(Error::InvalidParameter {
                name: "window",
                value: 0.0,
                reason: "windows must span at least one minute",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

/// Events that survived filtering, plus what was dropped and why.
#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<VehicleEvent>,
    pub dropped_invalid: usize,
    pub dropped_duplicate: usize,
    pub dropped_out_of_bounds: usize,
    pub diagnostics: Vec<RowDiagnostic>,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let ts = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.with_timezone(&Utc)
    } else {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
            .ok()?
            .and_utc()
    };
    ts.duration_trunc(Duration::milliseconds(1)).ok()
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<VehicleEvent, String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let timestamp =
        parse_timestamp(&record[0]).ok_or_else(|| format!("bad timestamp `{}`", &record[0]))?;
    let speed: f64 = record[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad speed `{}`", &record[1]))?;
    let length: f64 = record[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad length `{}`", &record[2]))?;
    let valid = parse_flag(&record[3]).ok_or_else(|| format!("bad valid flag `{}`", &record[3]))?;
    if !(speed >= 0.0) || !speed.is_finite() {
        return Err(format!("speed {speed} is negative or not finite"));
    }
    if !(length >= 0.0) || !length.is_finite() {
        return Err(format!("length {length} is negative or not finite"));
    }
    Ok(VehicleEvent {
        timestamp,
        speed,
        length,
        valid,
    })
}

/// Reads the event CSV, dropping invalid, duplicate and implausible rows.
/// Malformed rows produce a diagnostic and are skipped; a bad header is fatal.
pub fn parse_events(raw: impl Read) -> Result<ParsedEvents> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let header = reader.headers()?.clone();
    if header.iter().ne(EVENTS_HEADER.iter().copied()) {
        return Err(Error::BadHeader {
            expected: EVENTS_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = ParsedEvents::default();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let event = match parse_row(&record) {
            Ok(ev) => ev,
            Err(message) => {
                out.diagnostics.push(RowDiagnostic { line, message });
                continue;
            }
        };
        if !event.valid {
            out.dropped_invalid += 1;
            continue;
        }
        if event.speed > MAX_SPEED_KMH || event.length > MAX_LENGTH_M {
            out.dropped_out_of_bounds += 1;
            continue;
        }
        let key = (
            event.timestamp.timestamp_millis(),
            event.speed.to_bits(),
            event.length.to_bits(),
        );
        if !seen.insert(key) {
            out.dropped_duplicate += 1;
            continue;
        }
        out.events.push(event);
    }
    out.events.sort_by_key(|e| e.timestamp);
    for d in &out.diagnostics {
        warn!("line {}: {}", d.line, d.message);
    }
    Ok(out)
}

fn minute_floor(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.duration_trunc(Duration::minutes(1)).expect("minute truncation")
}

/// One interval per calendar minute between the first and last event.
pub fn aggregate_minutes(events: &[VehicleEvent], config: &DetectionConfig) -> Vec<FlowInterval> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Vec::new();
    };
    let origin = minute_floor(first.timestamp);
    let span = (minute_floor(last.timestamp) - origin).num_minutes() as usize + 1;

    struct Acc {
        intensity: u32,
        count: u32,
        zero: u32,
        inv_speed_sum: f64,
    }
    let mut accs: Vec<Acc> = (0..span)
        .map(|_| Acc {
            intensity: 0,
            count: 0,
            zero: 0,
            inv_speed_sum: 0.0,
        })
        .collect();
    for ev in events {
        let idx = (minute_floor(ev.timestamp) - origin).num_minutes();
        let Some(acc) = usize::try_from(idx).ok().and_then(|i| accs.get_mut(i)) else {
            continue;
        };
        acc.count += 1;
        acc.intensity += if ev.length > config.pce_length_threshold { 2 } else { 1 };
        if ev.speed > 0.0 {
            acc.inv_speed_sum += 1.0 / ev.speed;
        } else {
            acc.zero += 1;
        }
    }
    accs.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let moving = a.count - a.zero;
            FlowInterval {
                start: origin + Duration::minutes(i as i64),
                width: 1,
                intensity: a.intensity,
                mean_speed: (moving > 0).then(|| moving as f64 / a.inv_speed_sum),
                vehicle_count: a.count,
                zero_speed_count: a.zero,
                partial: false,
            }
        })
        .collect()
}

/// Overlapping width-`k` intervals, stride one minute.
pub fn rolling_aggregate(minutes: &[FlowInterval], k: usize) -> Vec<FlowInterval> {
    if k == 0 || minutes.len() < k {
        return Vec::new();
    }
    minutes
        .windows(k)
        .map(|w| {
            let speeds: Vec<f64> = w.iter().filter_map(|m| m.mean_speed).collect();
            FlowInterval {
                start: w[0].start,
                width: k as u32,
                intensity: w.iter().map(|m| m.intensity).sum(),
                mean_speed: (!speeds.is_empty())
                    .then(|| speeds.iter().sum::<f64>() / speeds.len() as f64),
                vehicle_count: w.iter().map(|m| m.vehicle_count).sum(),
                zero_speed_count: w.iter().map(|m| m.zero_speed_count).sum(),
                partial: w.iter().any(FlowInterval::is_empty),
            }
        })
        .collect()
}

/// What happened to the trailing 3-minute record of each minute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinuteLabel {
    /// No full trailing window (the first minutes of a dataset).
    Ineligible,
    Censored,
    Breakdown,
    Discarded,
    Congested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub breakdowns: Vec<BreakdownObservation>,
    pub histogram: IntensityHistogram,
    pub discarded_minutes: usize,
    pub congested_minutes: usize,
    /// Breakdowns seen but lacking a usable preceding free-flow window.
    pub skipped_breakdowns: usize,
    /// Trailing windows rejected because they contain an empty minute.
    pub gap_windows: usize,
    pub ended_congested: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<MinuteLabel>,
}

impl Detection {
    pub fn eligible_minutes(&self) -> usize {
        self.histogram.total() as usize
            + self.breakdowns.len()
            + self.discarded_minutes
            + self.congested_minutes
    }

    pub fn breakdown_flows(&self) -> Vec<u32> {
        self.breakdowns.iter().map(|b| b.breakdown_flow).collect()
    }
}

fn check_contiguous(minutes: &[FlowInterval]) -> Result<()> {
    for (i, pair) in minutes.windows(2).enumerate() {
        if pair[1].start - pair[0].start != Duration::minutes(1) || pair[1].width != 1 {
            return Err(Error::NonContiguous { index: i + 1 });
        }
    }
    Ok(())
}

enum State {
    Free { since: usize },
    Congested { since: usize },
}

/// Runs the free-flow / congested state machine over a contiguous minute
/// sequence.
///
/// In free flow every minute contributes the intensity of its trailing
/// 3-minute window as a censored record, unless the window contains an empty
/// minute, reaches back into the previous congestion, or the minute's own
/// speed is below `discard_speed`. A breakdown fires when the trailing
/// 3-minute mean speed drops below `breakdown_speed`. Its flow is the 3-minute
/// window ending just before the first slow minute, shifted one minute back
/// when the minute before that is already below `discard_speed`. Congestion
/// ends once the 5-minute mean speed exceeds `recovery_speed`.
pub fn detect_breakdowns(minutes: &[FlowInterval], config: &DetectionConfig) -> Result<Detection> {
    config.validate()?;
    check_contiguous(minutes)?;
    let n = minutes.len();
    let bw = config.breakdown_window;
    let rw = config.recovery_window;
    let speeds: Vec<Option<f64>> = minutes.iter().map(|m| m.mean_speed).collect();

    let window_speed = |end: usize, k: usize| -> Option<f64> {
        let s: Vec<f64> = speeds[end + 1 - k..=end].iter().flatten().copied().collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    };
    let window_gap = |end: usize| minutes[end + 1 - bw..=end].iter().any(FlowInterval::is_empty);
    let window_intensity = |end: usize| -> u32 { minutes[end + 1 - bw..=end].iter().map(|m| m.intensity).sum() };
    let below = |m: usize, limit: f64| speeds[m].is_some_and(|s| s < limit);

    let first_eligible = bw - 1;
    let mut labels = vec![MinuteLabel::Ineligible; n];
    let mut breakdowns = Vec::new();
    let mut skipped = 0;
    let mut state = State::Free { since: 0 };

    for i in 0..n {
        match state {
            State::Free { since } => {
                if i >= first_eligible && window_speed(i, bw).is_some_and(|s| s < config.breakdown_speed) {
                    let start = i + 1 - bw;
                    let b = (start..=i)
                        .find(|&m| below(m, config.breakdown_speed))
                        .expect("a window mean below the limit has a minute below it");
                    let shifted = b >= 1 && below(b - 1, config.discard_speed);
                    let back = if shifted { 2 } else { 1 };
                    let flow_end = b.checked_sub(back);
                    let congested_from = flow_end.map_or(0, |e| e + 1).max(since).max(first_eligible);
                    for label in &mut labels[congested_from..=i] {
                        *label = MinuteLabel::Congested;
                    }
                    let usable = flow_end.filter(|&e| {
                        e >= first_eligible && e + 1 - bw >= since && !window_gap(e) && window_intensity(e) > 0
                    });
                    match usable {
                        Some(e) => {
                            labels[e] = MinuteLabel::Breakdown;
                            breakdowns.push(BreakdownObservation {
                                breakdown_minute: minutes[b].start,
                                breakdown_flow: window_intensity(e),
                                shifted_back: shifted,
                            });
                        }
                        None => {
                            skipped += 1;
                            warn!(
                                "breakdown at {} skipped: no full preceding free-flow window",
                                minutes[b].start
                            );
                        }
                    }
                    state = State::Congested { since: b };
                    continue;
                }
                if i < first_eligible {
                    continue;
                }
                labels[i] = if i + 1 - bw < since
                    || window_gap(i)
                    || speeds[i].is_none_or(|s| s < config.discard_speed)
                {
                    MinuteLabel::Discarded
                } else {
                    MinuteLabel::Censored
                };
            }
            State::Congested { since } => {
                if i >= first_eligible {
                    labels[i] = MinuteLabel::Congested;
                }
                if i + 1 >= since + rw && window_speed(i, rw).is_some_and(|s| s > config.recovery_speed) {
                    state = State::Free { since: i + 1 };
                }
            }
        }
    }
    let ended_congested = matches!(state, State::Congested { .. });
    if ended_congested {
        warn!("dataset ends during congestion; congested tail discarded");
    }

    let mut censored = Vec::new();
    let mut gap_windows = 0;
    let (mut discarded, mut congested) = (0, 0);
    for (i, label) in labels.iter().enumerate() {
        match label {
            MinuteLabel::Censored => censored.push(window_intensity(i)),
            MinuteLabel::Discarded => {
                discarded += 1;
                if window_gap(i) {
                    gap_windows += 1;
                }
            }
            MinuteLabel::Congested => congested += 1,
            MinuteLabel::Breakdown | MinuteLabel::Ineligible => {}
        }
    }
    if gap_windows > 0 {
        warn!("{gap_windows} free-flow windows contained empty minutes and were excluded");
    }

    Ok(Detection {
        breakdowns,
        histogram: build_histogram(&censored),
        discarded_minutes: discarded,
        congested_minutes: congested,
        skipped_breakdowns: skipped,
        gap_windows,
        ended_congested,
        labels,
    })
}

pub fn write_minutes_csv(minutes: &[FlowInterval], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MINUTES_HEADER)?;
    for m in minutes {
        w.write_record([
            m.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            m.intensity.to_string(),
            m.mean_speed.map(|s| s.to_string()).unwrap_or_default(),
            m.vehicle_count.to_string(),
            u8::from(m.is_empty()).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<minutes csv>", e))?;
    Ok(())
}

pub fn read_minutes_csv(raw: impl Read) -> Result<Vec<FlowInterval>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw);
    let header = reader.headers()?.clone();
    if header.iter().ne(MINUTES_HEADER.iter().copied()) {
        return Err(Error::BadHeader {
            expected: MINUTES_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let r = row?;
        let line = r.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::BadHeader {
            expected: format!("valid {what} on line {line}"),
            found: r.iter().collect::<Vec<_>>().join(","),
        };
        let start = parse_timestamp(&r[0]).ok_or_else(|| bad("minute_start"))?;
        let intensity = r[1].parse().map_err(|_| bad("intensity_pce"))?;
        let mean_speed = if r[2].is_empty() {
            None
        } else {
            Some(r[2].parse().map_err(|_| bad("harmonic_speed_kmh"))?)
        };
        let vehicle_count = r[3].parse().map_err(|_| bad("vehicle_count"))?;
        out.push(FlowInterval {
            start,
            width: 1,
            intensity,
            mean_speed,
            vehicle_count,
            zero_speed_count: 0,
            partial: false,
        });
    }
    Ok(out)
}
