//! Event tables: parsing, validation, rescaling to the unit square and
//! discretisation of time into equidistant steps.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::f17;

/// One observed event. `component` is zero-based; `t_idx` runs over `1..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t_idx: u32,
    pub component: usize,
    pub mark: Option<f64>,
}

/// Rectangular observation window, constant over time, in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub t_steps: u32,
    /// Human-readable origin of the first time bin, if times were binned.
    pub bin_origin: Option<String>,
    /// Human-readable bin width, if times were binned.
    pub bin_width: Option<String>,
}

impl Window {
    pub fn unit(t_steps: u32) -> Self {
        Window {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            t_steps,
            bin_origin: None,
            bin_width: None,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::DegenerateWindow(format!(
                "window [{}, {}] x [{}, {}] has zero or negative extent",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.t_steps == 0 {
            return Err(Error::DegenerateWindow("T must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSystem {
    Original,
    UnitSquare,
}

/// A d-variate spatio-temporal point pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPattern {
    events: Vec<Event>,
    labels: Vec<String>,
    window: Window,
    coords: CoordSystem,
}

impl MultiPattern {
    /// Validated constructor. Every component in `0..labels.len()` must occur.
    pub fn new(events: Vec<Event>, labels: Vec<String>, window: Window, coords: CoordSystem) -> Result<Self> {
        let p = MultiPattern {
            events,
            labels,
            window,
            coords,
        };
        p.validate(true)?;
        Ok(p)
    }

    /// Like [`MultiPattern::new`] but tolerates components with no events,
    /// as happens for time slices of sparse types.
    pub fn new_allow_empty(
        events: Vec<Event>,
        labels: Vec<String>,
        window: Window,
        coords: CoordSystem,
    ) -> Result<Self> {
        let p = MultiPattern {
            events,
            labels,
            window,
            coords,
        };
        p.validate(false)?;
        Ok(p)
    }

    fn validate(&self, require_all_present: bool) -> Result<()> {
        self.window.validate()?;
        let d = self.labels.len();
        if d < 2 {
            return Err(Error::Contract(format!("a multitype pattern needs at least 2 types, got {d}")));
        }
        let unique: HashSet<&String> = self.labels.iter().collect();
        if unique.len() != d {
            return Err(Error::Contract("type labels must be distinct".into()));
        }
        let (x0, x1, y0, y1) = match self.coords {
            CoordSystem::UnitSquare => (0.0, 1.0, 0.0, 1.0),
            CoordSystem::Original => (self.window.x_min, self.window.x_max, self.window.y_min, self.window.y_max),
        };
        let marked = self.events.first().map(|e| e.mark.is_some()).unwrap_or(false);
        let mut seen = vec![false; d];
        for (k, e) in self.events.iter().enumerate() {
            if e.component >= d {
                return Err(Error::OutOfRange(format!("event {k}: type index {} >= d = {d}", e.component)));
            }
            if !(e.x >= x0 && e.x <= x1 && e.y >= y0 && e.y <= y1) {
                return Err(Error::OutOfRange(format!(
                    "event {k}: ({}, {}) outside [{x0}, {x1}] x [{y0}, {y1}]",
                    e.x, e.y
                )));
            }
            if e.t_idx < 1 || e.t_idx > self.window.t_steps {
                return Err(Error::OutOfRange(format!(
                    "event {k}: time index {} outside 1..={}",
                    e.t_idx, self.window.t_steps
                )));
            }
            if e.mark.is_some() != marked {
                return Err(Error::Contract("either every event carries a mark or none does".into()));
            }
            if let Some(m) = e.mark {
                if !m.is_finite() {
                    return Err(Error::OutOfRange(format!("event {k}: non-finite mark")));
                }
            }
            seen[e.component] = true;
        }
        if require_all_present {
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::Contract(format!("type `{}` has no events", self.labels[i])));
            }
        }
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn coords(&self) -> CoordSystem {
        self.coords
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn n(&self) -> usize {
        self.events.len()
    }

    pub fn t_steps(&self) -> u32 {
        self.window.t_steps
    }

    pub fn is_marked(&self) -> bool {
        self.events.first().is_some_and(|e| e.mark.is_some())
    }

    /// Number of events per component.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.d()];
        for e in &self.events {
            c[e.component] += 1;
        }
        c
    }

    /// `counts[i][t-1]`: events of component i in time step t.
    pub fn counts_per_step(&self) -> Vec<Vec<usize>> {
        let mut c = vec![vec![0; self.t_steps() as usize]; self.d()];
        for e in &self.events {
            c[e.component][e.t_idx as usize - 1] += 1;
        }
        c
    }

    /// Spatial extent in the pattern's own coordinate system.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self.coords {
            CoordSystem::UnitSquare => (0.0, 1.0, 0.0, 1.0),
            CoordSystem::Original => (self.window.x_min, self.window.x_max, self.window.y_min, self.window.y_max),
        }
    }

    pub fn component_events(&self, i: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.component == i)
    }

    /// Events of time step `t` as a purely spatial pattern (T = 1).
    pub fn time_slice(&self, t: u32) -> Result<MultiPattern> {
        if t < 1 || t > self.t_steps() {
            return Err(Error::OutOfRange(format!("time step {t} outside 1..={}", self.t_steps())));
        }
        let events = self
            .events
            .iter()
            .filter(|e| e.t_idx == t)
            .map(|e| Event { t_idx: 1, ..e.clone() })
            .collect();
        let window = Window {
            t_steps: 1,
            ..self.window.clone()
        };
        MultiPattern::new_allow_empty(events, self.labels.clone(), window, self.coords)
    }

    /// Same pattern with every event's mark replaced by `f(mark)`.
    pub fn map_marks(&self, f: impl Fn(Option<f64>) -> Option<f64>) -> Result<MultiPattern> {
        let events = self
            .events
            .iter()
            .map(|e| Event {
                mark: f(e.mark),
                ..e.clone()
            })
            .collect();
        MultiPattern::new_allow_empty(events, self.labels.clone(), self.window.clone(), self.coords)
    }
}

/// Maps the logical column roles onto header names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub x: String,
    pub y: String,
    pub time: String,
    pub type_: String,
    /// `None` means "use a column named `mark` if present".
    pub mark: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            x: "x".into(),
            y: "y".into(),
            time: "time".into(),
            type_: "type".into(),
            mark: None,
        }
    }
}

impl ColumnMap {
    /// Applies `role=name` overrides, e.g. `x=lon,y=lat`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self> {
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (role, name) = part
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("column mapping `{part}` is not role=name")))?;
            let name = name.trim().to_string();
            match role.trim() {
                "x" => self.x = name,
                "y" => self.y = name,
                "time" => self.time = name,
                "type" => self.type_ = name,
                "mark" => self.mark = Some(name),
                other => return Err(Error::Parameter(format!("unknown column role `{other}`"))),
            }
        }
        Ok(self)
    }
}

/// Width of a time bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinWidth {
    Seconds(i64),
    /// Calendar months; the origin is truncated to the first of its month.
    Months(u32),
}

impl BinWidth {
    /// Parses `3600s`, `30m` (minutes), `12h`, `7d`, `1w`, `1month`/`1mo`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let k: i64 = if num.is_empty() {
            1
        } else {
            num.parse()
                .map_err(|_| Error::Parameter(format!("bad bin width `{s}`")))?
        };
        if k <= 0 {
            return Err(Error::Parameter("bin width must be positive".into()));
        }
        let w = match unit.trim() {
            "s" | "sec" | "second" | "seconds" => BinWidth::Seconds(k),
            "m" | "min" | "minute" | "minutes" => BinWidth::Seconds(60 * k),
            "h" | "hour" | "hours" => BinWidth::Seconds(3600 * k),
            "d" | "day" | "days" => BinWidth::Seconds(86_400 * k),
            "w" | "week" | "weeks" => BinWidth::Seconds(7 * 86_400 * k),
            "mo" | "month" | "months" => BinWidth::Months(k as u32),
            other => return Err(Error::Parameter(format!("unknown bin width unit `{other}`"))),
        };
        Ok(w)
    }

    fn describe(&self) -> String {
        match self {
            BinWidth::Seconds(s) => format!("{s}s"),
            BinWidth::Months(m) => format!("{m}month"),
        }
    }
}

/// How the time column is interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Integers `1..=T`, already binned.
    Index,
    /// ISO-8601 timestamps binned from `origin` (default: earliest timestamp).
    Timestamp {
        origin: Option<String>,
        width: BinWidth,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub columns: ColumnMap,
    pub time: TimeMode,
    /// Explicit spatial window `(x_min, x_max, y_min, y_max)`; defaults to the
    /// bounding box of the data.
    pub window: Option<(f64, f64, f64, f64)>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            columns: ColumnMap::default(),
            time: TimeMode::Index,
            window: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub pattern: MultiPattern,
    pub rows_read: usize,
    pub duplicates_removed: usize,
}

impl Loaded {
    pub fn report(&self) -> String {
        format!(
            "{} rows read, {} duplicate{} removed, {} events in {} types over {} time steps",
            self.rows_read,
            self.duplicates_removed,
            if self.duplicates_removed == 1 { "" } else { "s" },
            self.pattern.n(),
            self.pattern.d(),
            self.pattern.t_steps()
        )
    }
}

/// Parses an ISO-8601 timestamp; date-only and `YYYY-MM` forms are accepted.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for f in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Assigns `t_idx = 1 + floor((ts - origin) / width)`; returns the indices and
/// `T`, the largest index assigned.
pub fn bin_times(timestamps: &[NaiveDateTime], origin: NaiveDateTime, width: BinWidth) -> Result<(Vec<u32>, u32)> {
    let mut out = Vec::with_capacity(timestamps.len());
    for ts in timestamps {
        if *ts < origin {
            return Err(Error::OutOfRange(format!("timestamp {ts} precedes bin origin {origin}")));
        }
        let k = match width {
            BinWidth::Seconds(w) => {
                if w <= 0 {
                    return Err(Error::Parameter("bin width must be positive".into()));
                }
                (*ts - origin).num_seconds().div_euclid(w)
            }
            BinWidth::Months(m) => {
                if m == 0 {
                    return Err(Error::Parameter("bin width must be positive".into()));
                }
                let months =
                    (ts.year() - origin.year()) as i64 * 12 + ts.month() as i64 - origin.month() as i64;
                months.div_euclid(m as i64)
            }
        };
        let idx = u32::try_from(k + 1).map_err(|_| Error::OutOfRange(format!("timestamp {ts} too far from origin")))?;
        out.push(idx);
    }
    let t = out.iter().copied().max().unwrap_or(0);
    Ok((out, t))
}

fn month_start(dt: NaiveDateTime) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(dt.year(), dt.month(), 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("first of month is a valid date")
}

/// Reads a `# window x_min x_max y_min y_max T` comment from the leading
/// comment block.
fn read_window_comment(path: &Path) -> Result<Option<Window>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rest = None;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(comment) = line.trim().strip_prefix('#') else {
            break;
        };
        if let Some(r) = comment.trim_start().strip_prefix("window") {
            rest = Some(r.to_string());
            break;
        }
    }
    let Some(rest) = rest else {
        return Ok(None);
    };
    let v: Vec<f64> = rest.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    if v.len() != 5 {
        return Ok(None);
    }
    Ok(Some(Window {
        x_min: v[0],
        x_max: v[1],
        y_min: v[2],
        y_max: v[3],
        t_steps: v[4] as u32,
        bin_origin: None,
        bin_width: None,
    }))
}

enum RawTime {
    Index(u32),
    Stamp(NaiveDateTime),
}

struct RawRow {
    x: f64,
    y: f64,
    time: RawTime,
    label: String,
    mark: Option<f64>,
}

/// Loads an event table. Type labels are numbered in order of first
/// appearance and exact duplicate rows (same x, y, time and type) are dropped.
pub fn load_events(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Loaded> {
    let path = path.as_ref();
    let header_window = read_window_comment(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cx = col(&opts.columns.x)?;
    let cy = col(&opts.columns.y)?;
    let ct = col(&opts.columns.time)?;
    let cty = col(&opts.columns.type_)?;
    let cm = match &opts.columns.mark {
        Some(name) => Some((col(name)?, name.clone())),
        None => headers.iter().position(|h| h == "mark").map(|i| (i, "mark".to_string())),
    };

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    column: name.to_string(),
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        let x = num(cx, &opts.columns.x)?;
        let y = num(cy, &opts.columns.y)?;
        let traw = rec.get(ct).unwrap_or("");
        let time = match opts.time {
            TimeMode::Index => RawTime::Index(traw.parse::<u32>().ok().filter(|&t| t >= 1).ok_or_else(|| {
                Error::Parse {
                    line,
                    column: opts.columns.time.clone(),
                    message: format!("`{traw}` is not a time index >= 1"),
                }
            })?),
            TimeMode::Timestamp { .. } => RawTime::Stamp(parse_timestamp(traw).ok_or_else(|| Error::Parse {
                line,
                column: opts.columns.time.clone(),
                message: format!("`{traw}` is not an ISO-8601 timestamp"),
            })?),
        };
        let label = rec.get(cty).unwrap_or("").to_string();
        if label.is_empty() {
            return Err(Error::Parse {
                line,
                column: opts.columns.type_.clone(),
                message: "empty type label".into(),
            });
        }
        let mark = match &cm {
            Some((idx, name)) => Some(num(*idx, name)?),
            None => None,
        };
        rows.push(RawRow {
            x,
            y,
            time,
            label,
            mark,
        });
    }
    let rows_read = rows.len();
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let mut seen = HashSet::new();
    rows.retain(|r| {
        let tkey = match r.time {
            RawTime::Index(t) => t as i64,
            RawTime::Stamp(ts) => ts.and_utc().timestamp_nanos_opt().unwrap_or(i64::MIN),
        };
        seen.insert((r.x.to_bits(), r.y.to_bits(), tkey, r.label.clone()))
    });
    let duplicates_removed = rows_read - rows.len();

    let (t_idx, t_steps, bin_origin, bin_width) = match &opts.time {
        TimeMode::Index => {
            let idx: Vec<u32> = rows
                .iter()
                .map(|r| match r.time {
                    RawTime::Index(t) => t,
                    RawTime::Stamp(_) => unreachable!(),
                })
                .collect();
            let t = idx.iter().copied().max().unwrap_or(1);
            (idx, t, None, None)
        }
        TimeMode::Timestamp { origin, width } => {
            let stamps: Vec<NaiveDateTime> = rows
                .iter()
                .map(|r| match r.time {
                    RawTime::Stamp(ts) => ts,
                    RawTime::Index(_) => unreachable!(),
                })
                .collect();
            let mut origin = match origin {
                Some(s) => parse_timestamp(s).ok_or_else(|| Error::Parameter(format!("bad bin origin `{s}`")))?,
                None => *stamps.iter().min().expect("non-empty"),
            };
            if let BinWidth::Months(_) = width {
                origin = month_start(origin);
            }
            let (idx, t) = bin_times(&stamps, origin, *width)?;
            (idx, t, Some(origin.to_string()), Some(width.describe()))
        }
    };

    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut events = Vec::with_capacity(rows.len());
    for (r, t) in rows.iter().zip(&t_idx) {
        let id = *label_ids.entry(r.label.clone()).or_insert_with(|| {
            labels.push(r.label.clone());
            labels.len() - 1
        });
        events.push(Event {
            x: r.x,
            y: r.y,
            t_idx: *t,
            component: id,
            mark: r.mark,
        });
    }

    let mut window = match (opts.window, header_window) {
        (Some((x0, x1, y0, y1)), _) => Window {
            x_min: x0,
            x_max: x1,
            y_min: y0,
            y_max: y1,
            t_steps,
            bin_origin: None,
            bin_width: None,
        },
        (None, Some(w)) => w,
        (None, None) => {
            let fold = |f: fn(&Event) -> f64| {
                events
                    .iter()
                    .map(f)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            };
            let (x0, x1) = fold(|e| e.x);
            let (y0, y1) = fold(|e| e.y);
            Window {
                x_min: x0,
                x_max: x1,
                y_min: y0,
                y_max: y1,
                t_steps,
                bin_origin: None,
                bin_width: None,
            }
        }
    };
    window.t_steps = window.t_steps.max(t_steps);
    window.bin_origin = bin_origin;
    window.bin_width = bin_width;

    let pattern = MultiPattern::new(events, labels, window, CoordSystem::Original)?;
    Ok(Loaded {
        pattern,
        rows_read,
        duplicates_removed,
    })
}

/// Maps coordinates affinely onto `[0, 1]²`; the window is retained so the
/// map can be undone. Already-rescaled patterns are returned unchanged.
pub fn rescale_to_unit_square(pattern: &MultiPattern) -> Result<MultiPattern> {
    if pattern.coords == CoordSystem::UnitSquare {
        return Ok(pattern.clone());
    }
    let w = &pattern.window;
    let sx = w.x_max - w.x_min;
    let sy = w.y_max - w.y_min;
    if !(sx > 0.0) || !(sy > 0.0) {
        return Err(Error::DegenerateWindow("zero-extent axis".into()));
    }
    let events = pattern
        .events
        .iter()
        .map(|e| Event {
            x: ((e.x - w.x_min) / sx).clamp(0.0, 1.0),
            y: ((e.y - w.y_min) / sy).clamp(0.0, 1.0),
            ..e.clone()
        })
        .collect();
    MultiPattern::new_allow_empty(events, pattern.labels.clone(), w.clone(), CoordSystem::UnitSquare)
}

/// Writes the pattern in the ingest schema with pre-binned times, preceded by
/// a `# window` comment so a reload restores the same window.
pub fn export_events<W: Write + ?Sized>(pattern: &MultiPattern, out: &mut W) -> std::io::Result<()> {
    let w = &pattern.window;
    let (x0, x1, y0, y1) = match pattern.coords {
        CoordSystem::Original => (w.x_min, w.x_max, w.y_min, w.y_max),
        CoordSystem::UnitSquare => (0.0, 1.0, 0.0, 1.0),
    };
    writeln!(out, "# window {} {} {} {} {}", f17(x0), f17(x1), f17(y0), f17(y1), w.t_steps)?;
    let marked = pattern.is_marked();
    writeln!(out, "x,y,time,type{}", if marked { ",mark" } else { "" })?;
    for e in &pattern.events {
        write!(
            out,
            "{},{},{},{}",
            f17(e.x),
            f17(e.y),
            e.t_idx,
            csv_field(&pattern.labels[e.component])
        )?;
        if let Some(m) = e.mark {
            write!(out, ",{}", f17(m))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per type and time step: count and average intensity in both unit-square and
/// original units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntensitySummary {
    pub label: String,
    pub t_idx: u32,
    pub count: usize,
    pub intensity_unit_square: f64,
    pub intensity_original: f64,
}

pub fn intensity_summary(pattern: &MultiPattern) -> Vec<IntensitySummary> {
    let area = pattern.window.area();
    let counts = pattern.counts_per_step();
    let mut out = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            out.push(IntensitySummary {
                label: pattern.labels[i].clone(),
                t_idx: t as u32 + 1,
                count: c,
                intensity_unit_square: c as f64,
                intensity_original: c as f64 / area,
            });
        }
    }
    out
}
