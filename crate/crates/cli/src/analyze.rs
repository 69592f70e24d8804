//! The analysis pipeline behind `orclsim analyze`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::json;
use tracing::{debug, info, warn};

use orclsim_core::bcp::bcp_detect;
use orclsim_core::events::{
    categorize_pedestrian_events, change_events, correlate, emit_report, locate_events, summarize_by_intersection,
    ChangeEvent, EventSource, ReportFiles, ReportMetadata, SessionEvents,
};
use orclsim_core::gaze::{rolling_entropy, EntropySeries};
use orclsim_core::ingest::{load_manifest, LoadedSession, FORMAT_VERSION};
use orclsim_core::model::{Mode, Timestamp};
use orclsim_core::spatial::RoadNetwork;

use crate::config::RunConfig;
use crate::CliError;

pub const ENTROPY_HEADER: &str = "timestamp,samples,sge,gte,sge_probability,gte_probability";
pub const CATEGORY_HEADER: &str = "category,description,count,participants";

#[derive(Clone, Debug)]
pub struct AnalysisOutput {
    pub report: ReportFiles,
    pub categories_csv: PathBuf,
    pub entropy_csvs: Vec<PathBuf>,
    pub sessions: Vec<SessionEvents>,
}

struct SessionAnalysis {
    events: SessionEvents,
    entropy: Option<EntropySeries>,
    hr_used: usize,
    hr_excluded: usize,
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisOutput, CliError> {
    if cfg.sessions.is_empty() {
        return Err(CliError::Input("no sessions configured".into()));
    }
    cfg.validate()?;

    let loaded: Vec<LoadedSession> = cfg
        .sessions
        .par_iter()
        .map(|m| load_manifest(m.clone()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(e.to_string()))?;
    check_quality(&loaded, cfg.max_parse_error_fraction)?;

    let network_path = &loaded[0].manifest.road_network;
    let network = RoadNetwork::load(network_path).map_err(|e| CliError::Input(e.to_string()))?;
    for s in &loaded[1..] {
        if s.manifest.road_network != *network_path {
            let other = RoadNetwork::load(&s.manifest.road_network).map_err(|e| CliError::Input(e.to_string()))?;
            if other != network {
                return Err(CliError::Input(format!(
                    "{}: session {} uses a different road network than {}",
                    s.manifest.road_network.display(),
                    s.manifest.session_id,
                    network_path.display()
                )));
            }
        }
    }

    let analyses: Vec<SessionAnalysis> = loaded
        .par_iter()
        .map(|s| analyze_session(s, &network, cfg))
        .collect::<Result<_, _>>()?;

    let sessions: Vec<SessionEvents> = analyses.iter().map(|a| a.events.clone()).collect();
    let summaries =
        summarize_by_intersection(&sessions, &network, cfg.radius).map_err(|e| CliError::Internal(e.to_string()))?;

    let session_meta: Vec<serde_json::Value> = loaded
        .iter()
        .zip(&analyses)
        .map(|(s, a)| session_metadata(s, a))
        .collect();
    let metadata = ReportMetadata {
        session: json!(session_meta),
        config: json!(cfg
            .echo
            .keys()
            .map(|k| (k.to_string(), cfg.echo.get(k).unwrap_or_default().to_string()))
            .collect::<BTreeMap<_, _>>()),
        versions: [
            ("orclsim".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("log_format".to_string(), FORMAT_VERSION.to_string()),
        ]
        .into(),
    };

    // file output stays on this thread
    let report = emit_report(&sessions, &summaries, &metadata, &cfg.out).map_err(|e| CliError::Internal(e.to_string()))?;
    let pedestrian: Vec<SessionEvents> = loaded
        .iter()
        .zip(&sessions)
        .filter(|(l, _)| l.recording.mode == Mode::Pedestrian)
        .map(|(_, s)| s.clone())
        .collect();
    let categories_csv = cfg.out.join("categories.csv");
    write(&categories_csv, &category_table(&pedestrian))?;
    let mut entropy_csvs = Vec::new();
    for a in &analyses {
        if let Some(series) = &a.entropy {
            let path = cfg.out.join(format!("entropy-{}.csv", file_stem(&a.events.session_id)));
            write(&path, &entropy_table(series))?;
            entropy_csvs.push(path);
        }
    }
    info!(
        events = sessions.iter().map(|s| s.events.len()).sum::<usize>(),
        summaries = summaries.len(),
        out = %cfg.out.display(),
        "report written"
    );
    Ok(AnalysisOutput {
        report,
        categories_csv,
        entropy_csvs,
        sessions,
    })
}

fn check_quality(loaded: &[LoadedSession], limit: f64) -> Result<(), CliError> {
    for s in loaded {
        for f in &s.files {
            if f.errors.is_empty() {
                continue;
            }
            let fraction = f.errors.len() as f64 / f.total_rows.max(1) as f64;
            let first = &f.errors[0];
            warn!(
                file = %f.file,
                rejected = f.errors.len(),
                total = f.total_rows,
                "rows rejected"
            );
            for e in &f.errors {
                debug!(file = %f.file, line = e.line, "{}", e.message);
            }
            if fraction > limit {
                return Err(CliError::DataQuality(format!(
                    "{}: {} of {} rows rejected (limit {:.1}%); first at line {}: {}",
                    f.file,
                    f.errors.len(),
                    f.total_rows,
                    limit * 100.0,
                    first.line,
                    first.message
                )));
            }
        }
    }
    Ok(())
}

fn analyze_session(s: &LoadedSession, network: &RoadNetwork, cfg: &RunConfig) -> Result<SessionAnalysis, CliError> {
    let internal = |e: orclsim_core::Error| CliError::Internal(format!("session {}: {e}", s.manifest.session_id));
    let streams = &s.recording.streams;

    let mut hr_used = 0;
    let mut hr_excluded = 0;
    let mut hr_events: Vec<ChangeEvent> = Vec::new();
    if let Some(hr) = &streams.heart_rate {
        let (valid, invalid): (Vec<_>, Vec<_>) = hr.samples.iter().partition(|x| x.payload.plausible);
        hr_used = valid.len();
        hr_excluded = invalid.len();
        if valid.len() >= 2 {
            let series: Vec<f64> = valid.iter().map(|x| x.payload.bpm).collect();
            let times: Vec<Timestamp> = valid.iter().map(|x| x.t).collect();
            let result = bcp_detect(&series, &cfg.bcp.with_seed(cfg.seed)).map_err(internal)?;
            hr_events = change_events(EventSource::Hr, &result, &times, cfg.threshold, cfg.min_separation)
                .map_err(internal)?;
        }
    }

    let entropy = match &streams.gaze {
        Some(g) if !g.is_empty() => Some(
            rolling_entropy(g, &cfg.camera, &cfg.entropy, &cfg.bcp.with_seed(cfg.seed.wrapping_add(1)))
                .map_err(internal)?,
        ),
        _ => None,
    };
    let mut sge_events = Vec::new();
    let mut gte_events = Vec::new();
    if let Some(series) = &entropy {
        let times: Vec<Timestamp> = series.bcp_windows.iter().map(|&k| series.timestamps[k]).collect();
        if let Some(r) = &series.sge_bcp {
            sge_events = change_events(EventSource::Sge, r, &times, cfg.threshold, cfg.min_separation).map_err(internal)?;
        }
        if let Some(r) = &series.gte_bcp {
            gte_events = change_events(EventSource::Gte, r, &times, cfg.threshold, cfg.min_separation).map_err(internal)?;
        }
    }

    let annotations = streams.annotation.as_ref().map(|a| a.samples.as_slice()).unwrap_or(&[]);
    let mut events = correlate(&hr_events, &sge_events, &gte_events, annotations, cfg.tolerance).map_err(internal)?;
    if let Some(pose) = &streams.pose {
        locate_events(&mut events, pose, network).map_err(internal)?;
    }
    Ok(SessionAnalysis {
        events: SessionEvents {
            participant: s.recording.participant_id.clone(),
            session_id: s.recording.session_id.clone(),
            events,
        },
        entropy,
        hr_used,
        hr_excluded,
    })
}

fn session_metadata(s: &LoadedSession, a: &SessionAnalysis) -> serde_json::Value {
    let st = &s.recording.streams;
    let count = |n: Option<usize>| n.map_or(serde_json::Value::Null, |n| json!(n));
    json!({
        "session_id": s.recording.session_id,
        "participant_id": s.recording.participant_id,
        "mode": s.recording.mode.name(),
        "road_network": s.manifest.road_network.display().to_string(),
        "streams": {
            "pose": count(st.pose.as_ref().map(|x| x.len())),
            "gaze": count(st.gaze.as_ref().map(|x| x.len())),
            "heart_rate": count(st.heart_rate.as_ref().map(|x| x.len())),
            "motion": count(st.motion.as_ref().map(|x| x.len())),
            "vehicle": count(st.vehicle.as_ref().map(|x| x.len())),
            "annotation": count(st.annotation.as_ref().map(|x| x.len())),
        },
        "heart_rate": {
            "analyzed": a.hr_used,
            "excluded_implausible": a.hr_excluded,
        },
        "entropy": match &a.entropy {
            Some(e) => json!({
                "status": "present",
                "windows": e.timestamps.len(),
                "gap_windows": e.sge.iter().filter(|x| x.is_none()).count(),
            }),
            None => json!({ "status": "absent" }),
        },
        "files": s.files.iter().map(|f| json!({
            "file": f.file,
            "total_rows": f.total_rows,
            "rejected_rows": f.errors.len(),
        })).collect::<Vec<_>>(),
    })
}

fn entropy_table(series: &EntropySeries) -> String {
    let prob = |r: &Option<orclsim_core::bcp::BcpResult>| {
        let mut out = vec![None; series.timestamps.len()];
        if let Some(r) = r {
            for (j, &k) in series.bcp_windows.iter().enumerate() {
                out[k] = Some(r.probabilities[j]);
            }
        }
        out
    };
    let (ps, pg) = (prob(&series.sge_bcp), prob(&series.gte_bcp));
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = format!("{ENTROPY_HEADER}\n");
    for k in 0..series.timestamps.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            series.timestamps[k].0,
            series.sample_counts[k],
            opt(series.sge[k]),
            opt(series.gte[k]),
            opt(ps[k]),
            opt(pg[k])
        );
    }
    out
}

fn category_table(sessions: &[SessionEvents]) -> String {
    let mut out = format!("{CATEGORY_HEADER}\n");
    for row in categorize_pedestrian_events(sessions) {
        let _ = writeln!(
            out,
            "{:?},\"{}\",{},{}",
            row.category,
            row.description,
            row.count,
            row.participants.join(";")
        );
    }
    out
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}
