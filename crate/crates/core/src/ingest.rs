//! Readers and writers for the on-disk log families.
//!
//! Every family is UTF-8 comma-separated text with `.` decimals and
//! timestamps in seconds. A file may open with a `#format=orcl-<family>/<version>`
//! directive; pose, gaze and annotation files then carry a header row.
//! Watch exports are headerless, one tagged record per line:
//!
//! ```text
//! HR,<t>,<bpm>
//! ACC,<t>,<x>,<y>,<z>      m/s²
//! GYR,<t>,<x>,<y>,<z>      rad/s
//! AUD,<t>,<amplitude>
//! ```
//!
//! Bad rows never abort a parse: they are collected as [`RowError`]s with
//! their 1-based line number, and the rest of the file is kept.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::{
    is_unit, Annotation, AnnotationCategory, AnnotationEvent, EyeSample, GazeSample, HrSample,
    Mode, MotionSample, PoseSample, Sample, SampleStream, SessionRecording, StreamKind, Streams,
    VehicleObservation, VehicleSample,
};

pub const FORMAT_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFamily {
    Pose,
    Gaze,
    Watch,
    Annotations,
}

impl LogFamily {
    pub const ALL: [LogFamily; 4] = [Self::Pose, Self::Gaze, Self::Watch, Self::Annotations];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Pose => "pose",
            Self::Gaze => "gaze",
            Self::Watch => "watch",
            Self::Annotations => "annotations",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub unit: &'static str,
    pub required: bool,
}

const fn col(name: &'static str, unit: &'static str) -> ColumnSpec {
    ColumnSpec {
        name,
        unit,
        required: true,
    }
}

const fn opt(name: &'static str, unit: &'static str) -> ColumnSpec {
    ColumnSpec {
        name,
        unit,
        required: false,
    }
}

const POSE_COLUMNS: &[ColumnSpec] = &[
    col("t", "s"),
    col("x", "m"),
    col("y", "m"),
    col("z", "m"),
    col("fx", "unit"),
    col("fy", "unit"),
    col("fz", "unit"),
    col("trigger", "0..1"),
    col("speed", "m/s"),
    opt("object", "id; empty or 'ego' for the participant"),
    opt("model", "vehicle model index"),
];

const GAZE_COLUMNS: &[ColumnSpec] = &[
    col("t", "s"),
    col("ox", "m"),
    col("oy", "m"),
    col("oz", "m"),
    col("l_dx", "unit"),
    col("l_dy", "unit"),
    col("l_dz", "unit"),
    col("l_pupil", "mm"),
    col("r_dx", "unit"),
    col("r_dy", "unit"),
    col("r_dz", "unit"),
    col("r_pupil", "mm"),
];

const WATCH_COLUMNS: &[ColumnSpec] = &[
    col("record", "HR|ACC|GYR|AUD"),
    col("t", "s"),
    col("values", "bpm | m/s² xyz | rad/s xyz | amplitude"),
];

const ANNOTATION_COLUMNS: &[ColumnSpec] = &[
    col("t", "s"),
    col("category", "vehicle_interaction|intersection_approach|crossing_start|crossing_in_lane|other"),
    col("label", "text"),
];

/// Versioned column layout of every log family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogSchema {
    pub format_version: String,
    pub families: BTreeMap<LogFamily, Vec<ColumnSpec>>,
}

impl LogSchema {
    pub fn current() -> Self {
        let families = LogFamily::ALL
            .into_iter()
            .map(|f| (f, Self::columns(f).to_vec()))
            .collect();
        Self {
            format_version: FORMAT_VERSION.to_string(),
            families,
        }
    }

    pub fn columns(family: LogFamily) -> &'static [ColumnSpec] {
        match family {
            LogFamily::Pose => POSE_COLUMNS,
            LogFamily::Gaze => GAZE_COLUMNS,
            LogFamily::Watch => WATCH_COLUMNS,
            LogFamily::Annotations => ANNOTATION_COLUMNS,
        }
    }

    pub fn recognizes(version: &str) -> bool {
        version == FORMAT_VERSION
    }

    pub fn directive(family: LogFamily) -> String {
        format!("#format=orcl-{}/{}", family.tag(), FORMAT_VERSION)
    }

    /// Human-readable listing for documentation and the CLI.
    pub fn describe(&self) -> String {
        let mut out = format!("log schema version {}\n", self.format_version);
        for (family, cols) in &self.families {
            let _ = writeln!(out, "\n[{}]", family.tag());
            for c in cols {
                let flag = if c.required { "" } else { " (optional)" };
                let _ = writeln!(out, "  {:<10} {}{}", c.name, c.unit, flag);
            }
        }
        out
    }
}

/// Renames foreign header names onto schema names (`foreign = schema`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnMap {
    renames: BTreeMap<String, String>,
}

impl ColumnMap {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let renames = kv
            .keys()
            .map(|k| (k.to_string(), kv.get(k).unwrap_or_default().to_string()))
            .collect();
        Ok(Self { renames })
    }

    pub fn insert(&mut self, foreign: impl Into<String>, schema: impl Into<String>) {
        self.renames.insert(foreign.into(), schema.into());
    }

    pub fn apply<'a>(&'a self, name: &'a str) -> &'a str {
        self.renames.get(name).map(String::as_str).unwrap_or(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parse result plus the rows that were rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub errors: Vec<RowError>,
    /// Data rows seen (header, directive, comment and blank lines excluded).
    pub total_rows: usize,
}

impl<T> Parsed<T> {
    pub fn accepted(&self) -> usize {
        self.total_rows - self.errors.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseLog {
    pub pose: SampleStream<PoseSample>,
    pub vehicle: SampleStream<VehicleSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WatchLog {
    pub heart_rate: SampleStream<HrSample>,
    pub motion: SampleStream<MotionSample>,
}

struct Line<'a> {
    number: usize,
    fields: Vec<&'a str>,
}

/// Splits text into data lines, consuming an optional format directive.
fn data_lines(text: &str, family: LogFamily) -> Result<Vec<Line<'_>>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix("#format=") {
            check_directive(directive, family, number)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        out.push(Line {
            number,
            fields: split_fields(line),
        });
    }
    Ok(out)
}

fn check_directive(directive: &str, family: LogFamily, line: usize) -> Result<()> {
    let (name, version) = directive
        .trim()
        .split_once('/')
        .ok_or_else(|| Error::format(line, format!("malformed format directive {directive:?}")))?;
    let expected = format!("orcl-{}", family.tag());
    if name != expected {
        return Err(Error::format(
            line,
            format!("expected a {expected} file, found {name}"),
        ));
    }
    if !LogSchema::recognizes(version) {
        return Err(Error::format(
            line,
            format!("unsupported {name} format version {version}"),
        ));
    }
    Ok(())
}

/// Comma split honoring double-quoted fields.
fn split_fields(line: &str) -> Vec<&str> {
    let mut fields = Vec::new();
    let mut start = 0;
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => {
                fields.push(line[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    fields.push(line[start..].trim());
    fields
}

fn unquote(field: &str) -> String {
    match field.strip_prefix('"').and_then(|f| f.strip_suffix('"')) {
        Some(inner) => inner.replace("\"\"", "\""),
        None => field.to_string(),
    }
}

fn quote_if_needed(field: &str) -> String {
    if field.contains([',', '"']) || field != field.trim() {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn number(field: &str, column: &str) -> std::result::Result<f64, String> {
    let cleaned = field.trim().replace('\u{2212}', "-");
    cleaned
        .parse::<f64>()
        .map_err(|_| format!("non-numeric {column} field {field:?}"))
}

fn finite(field: &str, column: &str) -> std::result::Result<f64, String> {
    let v = number(field, column)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {column} field {field:?}"))
    }
}

/// Positions of schema columns in a header row, after renaming.
struct Header {
    index: BTreeMap<&'static str, usize>,
}

impl Header {
    fn resolve(
        line: &Line<'_>,
        family: LogFamily,
        map: Option<&ColumnMap>,
    ) -> Result<Self> {
        let names: Vec<String> = line
            .fields
            .iter()
            .map(|f| {
                let f = unquote(f);
                map.map(|m| m.apply(&f).to_string()).unwrap_or(f)
            })
            .collect();
        let mut index = BTreeMap::new();
        for spec in LogSchema::columns(family) {
            match names.iter().position(|n| n == spec.name) {
                Some(i) => {
                    index.insert(spec.name, i);
                }
                None if spec.required => {
                    return Err(Error::format(
                        line.number,
                        format!(
                            "{} header is missing column '{}' (found: {})",
                            family.tag(),
                            spec.name,
                            names.join(",")
                        ),
                    ))
                }
                None => {}
            }
        }
        Ok(Self { index })
    }

    fn get<'a>(&self, line: &Line<'a>, name: &str) -> std::result::Result<&'a str, String> {
        let i = self.index[name];
        line.fields
            .get(i)
            .copied()
            .ok_or_else(|| format!("row has {} fields, missing '{name}'", line.fields.len()))
    }

    fn optional<'a>(&self, line: &Line<'a>, name: &str) -> Option<&'a str> {
        self.index.get(name).and_then(|&i| line.fields.get(i).copied())
    }

    fn num(&self, line: &Line<'_>, name: &str) -> std::result::Result<f64, String> {
        number(self.get(line, name)?, name)
    }

    fn finite(&self, line: &Line<'_>, name: &str) -> std::result::Result<f64, String> {
        finite(self.get(line, name)?, name)
    }

    fn vec3(&self, line: &Line<'_>, names: [&str; 3]) -> std::result::Result<[f64; 3], String> {
        Ok([
            self.num(line, names[0])?,
            self.num(line, names[1])?,
            self.num(line, names[2])?,
        ])
    }
}

/// Nominal rate from sample count over time span; `fallback` when fewer
/// than two distinct timestamps.
pub fn infer_rate(times: impl Iterator<Item = f64>, fallback: f64) -> f64 {
    let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for t in times {
        lo = lo.min(t);
        hi = hi.max(t);
        n += 1;
    }
    if n >= 2 && hi > lo {
        (n - 1) as f64 / (hi - lo)
    } else {
        fallback
    }
}

fn stream<P: Clone>(kind: StreamKind, samples: Vec<Sample<P>>) -> Result<SampleStream<P>> {
    let rate = infer_rate(samples.iter().map(|s| s.t.0), kind.default_rate());
    SampleStream::new(kind, rate, samples)
}

fn split_header<'a>(
    lines: &'a [Line<'a>],
    family: LogFamily,
    map: Option<&ColumnMap>,
) -> Result<(Header, &'a [Line<'a>])> {
    let (first, rest) = lines
        .split_first()
        .ok_or_else(|| Error::format(1, format!("{} log has no header row", family.tag())))?;
    Ok((Header::resolve(first, family, map)?, rest))
}

fn is_ego(object: Option<&str>) -> bool {
    match object {
        None => true,
        Some(o) => {
            let o = o.trim();
            o.is_empty() || o.eq_ignore_ascii_case("ego")
        }
    }
}

pub fn parse_pose_log(text: &str, map: Option<&ColumnMap>) -> Result<Parsed<PoseLog>> {
    let lines = data_lines(text, LogFamily::Pose)?;
    let (header, rows) = split_header(&lines, LogFamily::Pose, map)?;
    let mut pose = Vec::new();
    let mut vehicle: Vec<Sample<VehicleSample>> = Vec::new();
    // timestamp bits → index into `vehicle`, so one frame holds every object
    let mut frame_at: BTreeMap<u64, usize> = BTreeMap::new();
    let mut errors = Vec::new();
    for line in rows {
        let row = (|| -> std::result::Result<(), String> {
            let t = header.finite(line, "t")?;
            let position = header.vec3(line, ["x", "y", "z"])?;
            let forward = header.vec3(line, ["fx", "fy", "fz"])?;
            let trigger = header.num(line, "trigger")?;
            let speed = header.num(line, "speed")?;
            if position.iter().chain(&forward).any(|v| !v.is_finite()) || !speed.is_finite() {
                return Err("non-finite position, direction or speed".into());
            }
            let object = header.optional(line, "object");
            if is_ego(object) {
                let sample = PoseSample {
                    head_position: position,
                    head_forward: forward,
                    controller_trigger: trigger,
                    speed,
                };
                sample.validate()?;
                pose.push(Sample::new(t, sample));
            } else {
                if !is_unit(forward) {
                    return Err("non-unit direction".into());
                }
                let model = match header.optional(line, "model").map(str::trim) {
                    None | Some("") => 0,
                    Some(m) => m.parse().map_err(|_| format!("invalid vehicle model {m:?}"))?,
                };
                let idx = *frame_at.entry(t.to_bits()).or_insert_with(|| {
                    vehicle.push(Sample::new(t, VehicleSample::default()));
                    vehicle.len() - 1
                });
                vehicle[idx].payload.observations.push(VehicleObservation {
                    object: unquote(object.unwrap_or_default()),
                    model,
                    position,
                    forward,
                    speed,
                });
            }
            Ok(())
        })();
        if let Err(message) = row {
            errors.push(RowError {
                line: line.number,
                message,
            });
        }
    }
    Ok(Parsed {
        value: PoseLog {
            pose: stream(StreamKind::Pose, pose)?,
            vehicle: stream(StreamKind::Vehicle, vehicle)?,
        },
        errors,
        total_rows: rows.len(),
    })
}

fn eye(header: &Header, line: &Line<'_>, prefix: &str) -> std::result::Result<EyeSample, String> {
    let names = [
        format!("{prefix}_dx"),
        format!("{prefix}_dy"),
        format!("{prefix}_dz"),
    ];
    let direction = header.vec3(line, [&names[0], &names[1], &names[2]])?;
    let pupil = header.num(line, &format!("{prefix}_pupil"))?;
    if direction.iter().any(|v| v.is_nan()) {
        return Ok(EyeSample::invalid());
    }
    if !is_unit(direction) {
        return Err("non-unit direction".into());
    }
    if !(pupil.is_finite() && pupil > 0.0) {
        return Err(format!("{prefix} pupil diameter must be positive for a valid eye"));
    }
    Ok(EyeSample {
        direction,
        pupil_diameter: pupil,
        valid: true,
    })
}

pub fn parse_gaze_log(text: &str, map: Option<&ColumnMap>) -> Result<Parsed<SampleStream<GazeSample>>> {
    let lines = data_lines(text, LogFamily::Gaze)?;
    let (header, rows) = split_header(&lines, LogFamily::Gaze, map)?;
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for line in rows {
        let row = (|| -> std::result::Result<Sample<GazeSample>, String> {
            let t = header.finite(line, "t")?;
            let origin = header.vec3(line, ["ox", "oy", "oz"])?;
            if origin.iter().any(|v| !v.is_finite()) {
                return Err("non-finite gaze origin".into());
            }
            Ok(Sample::new(
                t,
                GazeSample {
                    origin,
                    left: eye(&header, line, "l")?,
                    right: eye(&header, line, "r")?,
                },
            ))
        })();
        match row {
            Ok(s) => samples.push(s),
            Err(message) => errors.push(RowError {
                line: line.number,
                message,
            }),
        }
    }
    Ok(Parsed {
        value: stream(StreamKind::Gaze, samples)?,
        errors,
        total_rows: rows.len(),
    })
}

enum WatchRecord {
    Hr(f64),
    Accel([f64; 3]),
    Gyro([f64; 3]),
    Audio(f64),
}

fn watch_record(fields: &[&str]) -> std::result::Result<(f64, WatchRecord), String> {
    let tag = fields[0].trim();
    let expect = |n: usize| {
        if fields.len() == n {
            Ok(())
        } else {
            Err(format!("{tag} record needs {} fields, got {}", n, fields.len()))
        }
    };
    let vec3 = || -> std::result::Result<[f64; 3], String> {
        Ok([
            finite(fields[2], "x")?,
            finite(fields[3], "y")?,
            finite(fields[4], "z")?,
        ])
    };
    let record = match tag {
        "HR" => {
            expect(3)?;
            WatchRecord::Hr(finite(fields[2], "bpm")?)
        }
        "ACC" => {
            expect(5)?;
            WatchRecord::Accel(vec3()?)
        }
        "GYR" => {
            expect(5)?;
            WatchRecord::Gyro(vec3()?)
        }
        "AUD" => {
            expect(3)?;
            WatchRecord::Audio(finite(fields[2], "amplitude")?)
        }
        other => return Err(format!("unknown record type {other:?}")),
    };
    Ok((finite(fields[1], "t")?, record))
}

pub fn parse_watch_log(text: &str) -> Result<Parsed<WatchLog>> {
    let lines = data_lines(text, LogFamily::Watch)?;
    let mut hr = Vec::new();
    let mut motion: Vec<Sample<MotionSample>> = Vec::new();
    // timestamp bits → index into `motion`, so same-instant channels merge
    let mut motion_at: BTreeMap<u64, usize> = BTreeMap::new();
    let mut errors = Vec::new();
    for line in &lines {
        match watch_record(&line.fields) {
            Ok((t, WatchRecord::Hr(bpm))) => hr.push(Sample::new(t, HrSample::new(bpm))),
            Ok((t, record)) => {
                let idx = *motion_at.entry(t.to_bits()).or_insert_with(|| {
                    motion.push(Sample::new(t, MotionSample::default()));
                    motion.len() - 1
                });
                let m = &mut motion[idx].payload;
                match record {
                    WatchRecord::Accel(v) => m.accel = Some(v),
                    WatchRecord::Gyro(v) => m.gyro = Some(v),
                    WatchRecord::Audio(a) => m.audio_amplitude = Some(a),
                    WatchRecord::Hr(_) => unreachable!(),
                }
            }
            Err(message) => errors.push(RowError {
                line: line.number,
                message,
            }),
        }
    }
    Ok(Parsed {
        value: WatchLog {
            heart_rate: SampleStream::new(StreamKind::HeartRate, StreamKind::HeartRate.default_rate(), hr)?,
            motion: SampleStream::new(StreamKind::Motion, StreamKind::Motion.default_rate(), motion)?,
        },
        errors,
        total_rows: lines.len(),
    })
}

/// Events sorted by time (stable for equal times). A leading
/// `t,category,label` header is optional.
pub fn parse_annotations(text: &str) -> Result<Parsed<Vec<AnnotationEvent>>> {
    let lines = data_lines(text, LogFamily::Annotations)?;
    let rows = match lines.first() {
        Some(first) if first.fields.first().map(|f| f.trim()) == Some("t") => &lines[1..],
        _ => &lines[..],
    };
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for line in rows {
        let row = (|| -> std::result::Result<AnnotationEvent, String> {
            if line.fields.len() < 3 {
                return Err(format!("expected t,category,label, got {} fields", line.fields.len()));
            }
            let t = finite(line.fields[0], "t")?;
            let category = AnnotationCategory::from_token(&unquote(line.fields[1]));
            let label = line.fields[2..].iter().map(|f| unquote(f)).collect::<Vec<_>>().join(",");
            if label.trim().is_empty() {
                return Err("empty label".into());
            }
            Ok(Sample::new(t, Annotation { category, label }))
        })();
        match row {
            Ok(e) => events.push(e),
            Err(message) => errors.push(RowError {
                line: line.number,
                message,
            }),
        }
    }
    events.sort_by(|a, b| a.t.0.total_cmp(&b.t.0));
    Ok(Parsed {
        value: events,
        errors,
        total_rows: rows.len(),
    })
}

fn push_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Pose rows first, then vehicle rows; the object/model columns are only
/// written when there are vehicles.
pub fn write_pose_log(log: &PoseLog) -> String {
    let with_objects = !log.vehicle.is_empty();
    let mut out = LogSchema::directive(LogFamily::Pose) + "\n";
    let mut header: Vec<String> = POSE_COLUMNS[..9].iter().map(|c| c.name.to_string()).collect();
    if with_objects {
        header.extend(["object".to_string(), "model".to_string()]);
    }
    push_row(&mut out, &header);
    for s in &log.pose.samples {
        let p = &s.payload;
        let mut row = vec![f(s.t.0)];
        row.extend(p.head_position.iter().chain(&p.head_forward).map(|&v| f(v)));
        row.extend([f(p.controller_trigger), f(p.speed)]);
        if with_objects {
            row.extend(["ego".to_string(), String::new()]);
        }
        push_row(&mut out, &row);
    }
    for s in &log.vehicle.samples {
        for v in &s.payload.observations {
            let mut row = vec![f(s.t.0)];
            row.extend(v.position.iter().chain(&v.forward).map(|&x| f(x)));
            row.extend([f(0.0), f(v.speed), quote_if_needed(&v.object), v.model.to_string()]);
            push_row(&mut out, &row);
        }
    }
    out
}

pub fn write_gaze_log(gaze: &SampleStream<GazeSample>) -> String {
    let mut out = LogSchema::directive(LogFamily::Gaze) + "\n";
    push_row(
        &mut out,
        &GAZE_COLUMNS.iter().map(|c| c.name.to_string()).collect::<Vec<_>>(),
    );
    for s in &gaze.samples {
        let g = &s.payload;
        let mut row = vec![f(s.t.0)];
        row.extend(g.origin.iter().map(|&v| f(v)));
        for e in [&g.left, &g.right] {
            if e.valid {
                row.extend(e.direction.iter().map(|&v| f(v)));
                row.push(f(e.pupil_diameter));
            } else {
                row.extend(std::iter::repeat_n("NaN".to_string(), 4));
            }
        }
        push_row(&mut out, &row);
    }
    out
}

/// Records ordered by time; HR before motion channels at equal times.
pub fn write_watch_log(log: &WatchLog) -> String {
    let mut records: Vec<(f64, u8, String)> = Vec::new();
    for s in &log.heart_rate.samples {
        records.push((s.t.0, 0, format!("HR,{},{}", f(s.t.0), f(s.payload.bpm))));
    }
    for s in &log.motion.samples {
        let m = &s.payload;
        let t = f(s.t.0);
        if let Some([x, y, z]) = m.accel {
            records.push((s.t.0, 1, format!("ACC,{t},{},{},{}", f(x), f(y), f(z))));
        }
        if let Some([x, y, z]) = m.gyro {
            records.push((s.t.0, 2, format!("GYR,{t},{},{},{}", f(x), f(y), f(z))));
        }
        if let Some(a) = m.audio_amplitude {
            records.push((s.t.0, 3, format!("AUD,{t},{}", f(a))));
        }
    }
    records.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = LogSchema::directive(LogFamily::Watch) + "\n";
    for (_, _, r) in records {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn write_annotations(events: &[AnnotationEvent]) -> String {
    let mut out = LogSchema::directive(LogFamily::Annotations) + "\nt,category,label\n";
    for e in events {
        push_row(
            &mut out,
            &[
                f(e.t.0),
                e.payload.category.token().to_string(),
                quote_if_needed(&e.payload.label),
            ],
        );
    }
    out
}

/// Session descriptor (`session.txt`, key-value): identifiers, mode, log
/// file names relative to the descriptor, optional column map, and
/// per-stream clock offsets as `offset.<stream> = seconds`.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionManifest {
    pub session_id: String,
    pub participant_id: String,
    pub mode: Mode,
    pub road_network: PathBuf,
    pub pose: Option<PathBuf>,
    pub gaze: Option<PathBuf>,
    pub watch: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub column_map: Option<PathBuf>,
    pub offsets: BTreeMap<String, f64>,
}

impl SessionManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let required = |key: &str| {
            kv.get(key)
                .map(str::to_string)
                .ok_or_else(|| Error::config(format!("session descriptor is missing '{key}'")))
        };
        let path = |key: &str| kv.get(key).filter(|v| !v.is_empty()).map(|v| base.join(v));
        let mode_name = required("mode")?;
        let mode = Mode::from_name(&mode_name)
            .ok_or_else(|| Error::config(format!("unknown mode '{mode_name}'")))?;
        let mut offsets = BTreeMap::new();
        for (stream, value) in kv.with_prefix("offset.") {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::config(format!("invalid offset for {stream}: {value:?}")))?;
            offsets.insert(stream.to_string(), v);
        }
        Ok(Self {
            session_id: required("session_id")?,
            participant_id: required("participant_id")?,
            mode,
            road_network: base.join(required("road_network")?),
            pose: path("pose"),
            gaze: path("gaze"),
            watch: path("watch"),
            annotations: path("annotations"),
            column_map: path("column_map"),
            offsets,
        })
    }

    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let mut kv = KeyValues::default();
        kv.insert("session_id", &self.session_id);
        kv.insert("participant_id", &self.participant_id);
        kv.insert("mode", self.mode.name());
        kv.insert("road_network", rel(&self.road_network));
        for (key, p) in [
            ("pose", &self.pose),
            ("gaze", &self.gaze),
            ("watch", &self.watch),
            ("annotations", &self.annotations),
            ("column_map", &self.column_map),
        ] {
            if let Some(p) = p {
                kv.insert(key, rel(p));
            }
        }
        for (stream, v) in &self.offsets {
            kv.insert(format!("offset.{stream}"), format!("{v}"));
        }
        kv.to_text()
    }
}

/// Row errors of one file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileReport {
    pub file: String,
    pub total_rows: usize,
    pub errors: Vec<RowError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSession {
    /// Synchronized recording.
    pub recording: SessionRecording,
    pub manifest: SessionManifest,
    pub files: Vec<FileReport>,
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn report<T>(path: &Path, parsed: &Parsed<T>) -> FileReport {
    FileReport {
        file: path.display().to_string(),
        total_rows: parsed.total_rows,
        errors: parsed.errors.clone(),
    }
}

/// Reads a session descriptor and every log it names, then synchronizes.
pub fn load_session(descriptor: &Path) -> Result<LoadedSession> {
    let base = descriptor.parent().unwrap_or_else(|| Path::new("."));
    let manifest = read(descriptor)
        .and_then(|t| SessionManifest::parse(&t, base))
        .map_err(|e| e.in_file(descriptor))?;
    load_manifest(manifest)
}

/// Parses and synchronizes the files a manifest names.
pub fn load_manifest(manifest: SessionManifest) -> Result<LoadedSession> {
    let map = manifest
        .column_map
        .as_deref()
        .map(|p| read(p).and_then(|t| ColumnMap::parse(&t)).map_err(|e| e.in_file(p)))
        .transpose()?;

    let (pose, (gaze, (watch, annotations))) = rayon::join(
        || {
            manifest
                .pose
                .as_deref()
                .map(|p| read(p).and_then(|t| parse_pose_log(&t, map.as_ref())).map(|r| (p, r)).map_err(|e| e.in_file(p)))
                .transpose()
        },
        || {
            rayon::join(
                || {
                    manifest
                        .gaze
                        .as_deref()
                        .map(|p| read(p).and_then(|t| parse_gaze_log(&t, map.as_ref())).map(|r| (p, r)).map_err(|e| e.in_file(p)))
                        .transpose()
                },
                || {
                    rayon::join(
                        || {
                            manifest
                                .watch
                                .as_deref()
                                .map(|p| read(p).and_then(|t| parse_watch_log(&t)).map(|r| (p, r)).map_err(|e| e.in_file(p)))
                                .transpose()
                        },
                        || {
                            manifest
                                .annotations
                                .as_deref()
                                .map(|p| read(p).and_then(|t| parse_annotations(&t)).map(|r| (p, r)).map_err(|e| e.in_file(p)))
                                .transpose()
                        },
                    )
                },
            )
        },
    );

    let mut files = Vec::new();
    let mut streams = Streams::default();
    if let Some((p, parsed)) = pose? {
        files.push(report(p, &parsed));
        streams.pose = Some(parsed.value.pose);
        if !parsed.value.vehicle.is_empty() {
            streams.vehicle = Some(parsed.value.vehicle);
        }
    }
    if let Some((p, parsed)) = gaze? {
        files.push(report(p, &parsed));
        streams.gaze = Some(parsed.value);
    }
    if let Some((p, parsed)) = watch? {
        files.push(report(p, &parsed));
        streams.heart_rate = Some(parsed.value.heart_rate);
        streams.motion = Some(parsed.value.motion);
    }
    if let Some((p, parsed)) = annotations? {
        files.push(report(p, &parsed));
        let samples = parsed.value;
        streams.annotation = Some(SampleStream::new(
            StreamKind::Annotation,
            StreamKind::Annotation.default_rate(),
            samples,
        )?);
    }

    let raw = SessionRecording {
        session_id: manifest.session_id.clone(),
        participant_id: manifest.participant_id.clone(),
        mode: manifest.mode,
        streams,
        road_network_ref: manifest.road_network.display().to_string(),
    };
    let recording = crate::model::synchronize(&raw, &manifest.offsets)?;
    Ok(LoadedSession {
        recording,
        manifest,
        files,
    })
}
