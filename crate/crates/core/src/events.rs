//! Change-point events: timing, placement on the corridor, cross-source
//! correlation, per-intersection summaries and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bcp::{extract_change_events, BcpResult};
use crate::error::{Error, Result};
use crate::model::{AnnotationCategory, AnnotationEvent, PoseSample, SampleStream, Timestamp, Vec3};
use crate::spatial::{locate, RoadNetwork, SegmentLocation};

pub const BETWEEN_INTERSECTIONS: &str = "between-intersections";
pub const DEFAULT_TOLERANCE: f64 = 5.0;
pub const DEFAULT_RADIUS: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Hr,
    Sge,
    Gte,
}

impl EventSource {
    pub const ALL: [EventSource; 3] = [Self::Hr, Self::Sge, Self::Gte];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hr => "hr",
            Self::Sge => "sge",
            Self::Gte => "gte",
        }
    }
}

/// A detected change point on one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub source: EventSource,
    /// Position in the analyzed series; the new level starts at `index + 1`.
    pub index: usize,
    pub timestamp: Timestamp,
    pub probability: f64,
}

/// Change points of `result` at `threshold`, stamped halfway between the
/// times of the last old-level and first new-level samples.
pub fn change_events(
    source: EventSource,
    result: &BcpResult,
    times: &[Timestamp],
    threshold: f64,
    min_separation: usize,
) -> Result<Vec<ChangeEvent>> {
    if times.len() != result.probabilities.len() {
        return Err(Error::argument(format!(
            "{} series has {} times for {} probabilities",
            source.name(),
            times.len(),
            result.probabilities.len()
        )));
    }
    Ok(extract_change_events(result, threshold, min_separation)
        .into_iter()
        .map(|i| ChangeEvent {
            source,
            index: i,
            timestamp: Timestamp(0.5 * (times[i].0 + times[i + 1].0)),
            probability: result.probabilities[i],
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterpartMatch {
    pub source: EventSource,
    pub timestamp: Timestamp,
    /// Counterpart time minus this event's time.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedEvent {
    pub timestamp: Timestamp,
    pub source: EventSource,
    pub index: usize,
    pub probability: f64,
    pub position: Option<SegmentLocation>,
    pub nearest_intersection: Option<String>,
    /// Signed arclength to `nearest_intersection`.
    pub distance_to_nearest_intersection: Option<f64>,
    pub matched_annotation: Option<AnnotationEvent>,
    pub matched_counterpart_events: Vec<CounterpartMatch>,
}

/// Greedy one-to-one pairing of two time lists: candidate pairs within
/// `tolerance` are taken in order of |gap|, then earlier pair start, then
/// earlier pair end. The key is symmetric, so swapping the lists yields the
/// same pairs.
pub fn greedy_pairs(a: &[f64], b: &[f64], tolerance: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        for (j, &tb) in b.iter().enumerate() {
            let gap = (tb - ta).abs();
            if gap <= tolerance {
                candidates.push((gap, ta.min(tb), ta.max(tb), i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.total_cmp(&y.1))
            .then(x.2.total_cmp(&y.2))
    });
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, _, _, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Pairs each source's events with each other source and with the
/// annotations. Output is ordered by time, then source.
pub fn correlate(
    hr: &[ChangeEvent],
    sge: &[ChangeEvent],
    gte: &[ChangeEvent],
    annotations: &[AnnotationEvent],
    tolerance: f64,
) -> Result<Vec<CorrelatedEvent>> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::argument(format!("correlation tolerance must be positive, got {tolerance}")));
    }
    let lists = [hr, sge, gte];
    let times: Vec<Vec<f64>> = lists.iter().map(|l| l.iter().map(|e| e.timestamp.0).collect()).collect();
    let annotation_times: Vec<f64> = annotations.iter().map(|a| a.t.0).collect();

    let mut out: Vec<Vec<CorrelatedEvent>> = lists
        .iter()
        .map(|l| {
            l.iter()
                .map(|e| CorrelatedEvent {
                    timestamp: e.timestamp,
                    source: e.source,
                    index: e.index,
                    probability: e.probability,
                    position: None,
                    nearest_intersection: None,
                    distance_to_nearest_intersection: None,
                    matched_annotation: None,
                    matched_counterpart_events: Vec::new(),
                })
                .collect()
        })
        .collect();

    for x in 0..3 {
        for y in (x + 1)..3 {
            for (i, j) in greedy_pairs(&times[x], &times[y], tolerance) {
                let (tx, ty) = (times[x][i], times[y][j]);
                out[x][i].matched_counterpart_events.push(CounterpartMatch {
                    source: EventSource::ALL[y],
                    timestamp: Timestamp(ty),
                    gap: ty - tx,
                });
                out[y][j].matched_counterpart_events.push(CounterpartMatch {
                    source: EventSource::ALL[x],
                    timestamp: Timestamp(tx),
                    gap: tx - ty,
                });
            }
        }
        for (i, j) in greedy_pairs(&times[x], &annotation_times, tolerance) {
            out[x][i].matched_annotation = Some(annotations[j].clone());
        }
    }
    for list in &mut out {
        for e in list.iter_mut() {
            e.matched_counterpart_events.sort_by_key(|m| m.source);
        }
    }
    let mut all: Vec<CorrelatedEvent> = out.into_iter().flatten().collect();
    all.sort_by(|a, b| a.timestamp.0.total_cmp(&b.timestamp.0).then(a.source.cmp(&b.source)));
    Ok(all)
}

/// Head position at `t`, linearly interpolated between pose samples and
/// held at the ends. `None` for an empty stream.
pub fn position_at(pose: &SampleStream<PoseSample>, t: f64) -> Option<Vec3> {
    let samples = &pose.samples;
    let first = samples.first()?;
    let k = pose.lower_bound(t);
    if k == 0 {
        return Some(first.payload.head_position);
    }
    if k >= samples.len() {
        return Some(samples[samples.len() - 1].payload.head_position);
    }
    let (a, b) = (&samples[k - 1], &samples[k]);
    let u = (t - a.t.0) / (b.t.0 - a.t.0);
    let (pa, pb) = (a.payload.head_position, b.payload.head_position);
    Some([
        pa[0] + u * (pb[0] - pa[0]),
        pa[1] + u * (pb[1] - pa[1]),
        pa[2] + u * (pb[2] - pa[2]),
    ])
}

/// Fills position and nearest-intersection fields from the pose stream.
pub fn locate_events(
    events: &mut [CorrelatedEvent],
    pose: &SampleStream<PoseSample>,
    network: &RoadNetwork,
) -> Result<()> {
    for e in events {
        let Some(p) = position_at(pose, e.timestamp.0) else {
            continue;
        };
        let loc = locate(p, network)?;
        if let Some(i) = network.nearest_intersection(loc.arclength) {
            e.nearest_intersection = Some(i.name.clone());
            e.distance_to_nearest_intersection = Some(loc.arclength - i.arclength);
        }
        e.position = Some(loc);
    }
    Ok(())
}

/// Events of one participant's session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvents {
    pub participant: String,
    pub session_id: String,
    pub events: Vec<CorrelatedEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub participant: String,
    pub intersection: String,
    pub source: EventSource,
    pub timestamp: Timestamp,
    /// Signed arclength to the nearest intersection.
    pub signed_distance: f64,
}

/// One row per located event. Rows sort by participant, then intersection
/// in corridor order (the between-intersections bucket last), then time.
pub fn summarize_by_intersection(
    sessions: &[SessionEvents],
    network: &RoadNetwork,
    radius: f64,
) -> Result<Vec<SummaryRow>> {
    if !(radius > 0.0) {
        return Err(Error::argument(format!("attribution radius must be positive, got {radius}")));
    }
    let order: BTreeMap<&str, usize> = network
        .intersections()
        .iter()
        .enumerate()
        .map(|(k, i)| (i.name.as_str(), k))
        .collect();
    let mut rows = Vec::new();
    for s in sessions {
        for e in &s.events {
            let Some(loc) = &e.position else { continue };
            let Some(nearest) = network.nearest_intersection(loc.arclength) else {
                continue;
            };
            let d = loc.arclength - nearest.arclength;
            let intersection = if d.abs() <= radius {
                nearest.name.clone()
            } else {
                BETWEEN_INTERSECTIONS.to_string()
            };
            rows.push(SummaryRow {
                participant: s.participant.clone(),
                intersection,
                source: e.source,
                timestamp: e.timestamp,
                signed_distance: d,
            });
        }
    }
    let rank = |name: &str| order.get(name).copied().unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        a.participant
            .cmp(&b.participant)
            .then(rank(&a.intersection).cmp(&rank(&b.intersection)))
            .then(a.timestamp.0.total_cmp(&b.timestamp.0))
            .then(a.source.cmp(&b.source))
    });
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedestrianCategory {
    NoticedApproachingVehicle,
    StartCrossingAfterVehicle,
    CrossingInApproachLane,
    Other,
}

impl PedestrianCategory {
    pub const ALL: [PedestrianCategory; 4] = [
        Self::NoticedApproachingVehicle,
        Self::StartCrossingAfterVehicle,
        Self::CrossingInApproachLane,
        Self::Other,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Self::NoticedApproachingVehicle => "noticed first approaching vehicle",
            Self::StartCrossingAfterVehicle => "start crossing after first vehicle",
            Self::CrossingInApproachLane => "crossing in approaching lane",
            Self::Other => "other",
        }
    }

    pub fn from_annotation(category: Option<AnnotationCategory>) -> Self {
        match category {
            Some(AnnotationCategory::VehicleInteraction) => Self::NoticedApproachingVehicle,
            Some(AnnotationCategory::CrossingStart) => Self::StartCrossingAfterVehicle,
            Some(AnnotationCategory::CrossingInLane) => Self::CrossingInApproachLane,
            _ => Self::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: PedestrianCategory,
    pub description: String,
    pub count: usize,
    /// Distinct participants, sorted.
    pub participants: Vec<String>,
}

/// Counts HR change points by the category of their matched annotation.
/// Categories without events are omitted.
pub fn categorize_pedestrian_events(sessions: &[SessionEvents]) -> Vec<CategoryRow> {
    let mut rows: BTreeMap<PedestrianCategory, (usize, Vec<String>)> = BTreeMap::new();
    for s in sessions {
        for e in s.events.iter().filter(|e| e.source == EventSource::Hr) {
            let cat = PedestrianCategory::from_annotation(e.matched_annotation.as_ref().map(|a| a.payload.category));
            let entry = rows.entry(cat).or_default();
            entry.0 += 1;
            if !entry.1.contains(&s.participant) {
                entry.1.push(s.participant.clone());
            }
        }
    }
    rows.into_iter()
        .map(|(category, (count, mut participants))| {
            participants.sort();
            CategoryRow {
                category,
                description: category.description().to_string(),
                count,
                participants,
            }
        })
        .collect()
}

/// Session description, configuration echo and tool versions for the
/// machine-readable report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub session: serde_json::Value,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    session: &'a serde_json::Value,
    config: &'a serde_json::Value,
    events: Vec<EventRecord<'a>>,
    summaries: &'a [SummaryRow],
    versions: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    participant: &'a str,
    session_id: &'a str,
    #[serde(flatten)]
    event: &'a CorrelatedEvent,
}

#[derive(Deserialize)]
struct StoredReport {
    session: serde_json::Value,
    config: serde_json::Value,
    events: Vec<StoredEvent>,
    summaries: Vec<SummaryRow>,
    versions: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct StoredEvent {
    participant: String,
    session_id: String,
    #[serde(flatten)]
    event: CorrelatedEvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub events_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub report_json: PathBuf,
    pub scatter_svg: PathBuf,
}

pub const EVENTS_HEADER: &str = "participant,session,timestamp,source,index,probability,segment,arclength,\
lateral_offset,out_of_corridor,nearest_intersection,signed_distance,annotation_time,annotation_category,\
annotation_label,counterparts";

pub const SUMMARY_HEADER: &str = "participant,intersection,source,timestamp,signed_distance";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn events_table(sessions: &[SessionEvents]) -> String {
    let mut out = format!("{EVENTS_HEADER}\n");
    for s in sessions {
        for e in &s.events {
            let loc = e.position.as_ref();
            let ann = e.matched_annotation.as_ref();
            let counterparts = e
                .matched_counterpart_events
                .iter()
                .map(|m| format!("{}@{}", m.source.name(), m.timestamp.0))
                .collect::<Vec<_>>()
                .join(";");
            let fields = [
                csv_field(&s.participant),
                csv_field(&s.session_id),
                e.timestamp.0.to_string(),
                e.source.name().to_string(),
                e.index.to_string(),
                e.probability.to_string(),
                csv_field(&opt(loc.map(|l| l.segment_name.as_str()))),
                opt(loc.map(|l| l.arclength)),
                opt(loc.map(|l| l.lateral_offset)),
                opt(loc.map(|l| l.out_of_corridor)),
                csv_field(&opt(e.nearest_intersection.as_deref())),
                opt(e.distance_to_nearest_intersection),
                opt(ann.map(|a| a.t.0)),
                opt(ann.map(|a| a.payload.category.token())),
                csv_field(&opt(ann.map(|a| a.payload.label.as_str()))),
                counterparts,
            ];
            out += &fields.join(",");
            out.push('\n');
        }
    }
    out
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.participant),
            csv_field(&r.intersection),
            r.source.name(),
            r.timestamp.0,
            r.signed_distance
        );
    }
    out
}

fn source_color(source: EventSource) -> &'static str {
    match source {
        EventSource::Hr => "#1f77b4",
        EventSource::Sge => "#17becf",
        EventSource::Gte => "#bcbd22",
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Signed distance per participant and source; one mark per events-table
/// row. Events without a corridor position sit on a separate baseline
/// below the axis, drawn hollow.
pub fn scatter_svg(sessions: &[SessionEvents]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const TOP: f64 = 30.0;
    const PLOT_H: f64 = 300.0;
    let mut participants: Vec<&str> = sessions.iter().map(|s| s.participant.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();
    let distances: Vec<f64> = sessions
        .iter()
        .flat_map(|s| s.events.iter().filter_map(|e| e.distance_to_nearest_intersection))
        .collect();
    let extent = distances.iter().fold(20.0f64, |m, d| m.max(d.abs())).ceil();
    let lane = (W - LEFT - 20.0) / participants.len().max(1) as f64;
    let y_of = |d: f64| TOP + PLOT_H / 2.0 - d / extent * (PLOT_H / 2.0);
    let unlocated_y = TOP + PLOT_H + 30.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"##
    );
    let _ = writeln!(out, r##"<rect width="{W}" height="{H}" fill="white"/>"##);
    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="4 3"/>"##,
        y_of(0.0),
        W - 20.0,
        y_of(0.0)
    );
    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"##,
        TOP + PLOT_H
    );
    for (label, d) in [(format!("+{extent}"), extent), ("0".to_string(), 0.0), (format!("-{extent}"), -extent)] {
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-size="11" text-anchor="end">{label} m</text>"##,
            LEFT - 6.0,
            y_of(d) + 4.0
        );
    }
    for (k, p) in participants.iter().enumerate() {
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"##,
            LEFT + (k as f64 + 0.5) * lane,
            H - 10.0,
            escape_xml(p)
        );
    }
    for (k, src) in EventSource::ALL.iter().enumerate() {
        let _ = writeln!(
            out,
            r##"<text x="{}" y="18" font-size="12" fill="{}">{}</text>"##,
            LEFT + 60.0 * k as f64,
            source_color(*src),
            src.name()
        );
    }
    for s in sessions {
        let k = participants.binary_search(&s.participant.as_str()).unwrap_or(0);
        for e in &s.events {
            let offset = (e.source as usize as f64 - 1.0) * 12.0;
            let cx = LEFT + (k as f64 + 0.5) * lane + offset;
            let color = source_color(e.source);
            let (cy, fill) = match e.distance_to_nearest_intersection {
                Some(d) => (y_of(d), color),
                None => (unlocated_y, "none"),
            };
            let _ = writeln!(
                out,
                r##"<circle class="mark {}" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{fill}" stroke="{color}"><title>{} t={} d={}</title></circle>"##,
                e.source.name(),
                e.source.name(),
                e.timestamp.0,
                opt(e.distance_to_nearest_intersection)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `events.csv`, `summary.csv`, `report.json` and `scatter.svg`.
pub fn emit_report(
    sessions: &[SessionEvents],
    summaries: &[SummaryRow],
    metadata: &ReportMetadata,
    output_dir: &Path,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(output_dir)?;
    let files = ReportFiles {
        events_csv: output_dir.join("events.csv"),
        summary_csv: output_dir.join("summary.csv"),
        report_json: output_dir.join("report.json"),
        scatter_svg: output_dir.join("scatter.svg"),
    };
    let doc = ReportDocument {
        session: &metadata.session,
        config: &metadata.config,
        events: sessions
            .iter()
            .flat_map(|s| {
                s.events.iter().map(move |e| EventRecord {
                    participant: &s.participant,
                    session_id: &s.session_id,
                    event: e,
                })
            })
            .collect(),
        summaries,
        versions: &metadata.versions,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::argument(e.to_string()))? + "\n";
    std::fs::write(&files.events_csv, events_table(sessions))?;
    std::fs::write(&files.summary_csv, summary_table(summaries))?;
    std::fs::write(&files.report_json, json)?;
    std::fs::write(&files.scatter_svg, scatter_svg(sessions))?;
    Ok(files)
}

/// Reads a `report.json` back into the inputs of [`emit_report`].
/// Sessions without events do not survive the round trip.
pub fn read_report(path: &Path) -> Result<(Vec<SessionEvents>, Vec<SummaryRow>, ReportMetadata)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let stored: StoredReport = serde_json::from_str(&text).map_err(|e| {
        Error::Format {
            line: e.line(),
            message: e.to_string(),
        }
        .in_file(path)
    })?;
    let mut sessions: Vec<SessionEvents> = Vec::new();
    for e in stored.events {
        match sessions.last_mut() {
            Some(s) if s.participant == e.participant && s.session_id == e.session_id => s.events.push(e.event),
            _ => sessions.push(SessionEvents {
                participant: e.participant,
                session_id: e.session_id,
                events: vec![e.event],
            }),
        }
    }
    let metadata = ReportMetadata {
        session: stored.session,
        config: stored.config,
        versions: stored.versions,
    };
    Ok((sessions, stored.summaries, metadata))
}
