//! Domain types shared by every stage of the pipeline: a common session clock,
//! independently-clocked sample streams, and the session bundle that carries them.
//!
//! All streams are plain data. The operations here (`synchronize`,
//! `resample_hold`, `window_slice`) are pure and return new values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Tolerance on the norm of direction vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Inclusive physiological range for heart-rate readings, in bpm.
pub const HR_PLAUSIBLE_RANGE: (f64, f64) = (20.0, 250.0);

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn is_unit(v: Vec3) -> bool {
    (norm(v) - 1.0).abs() <= UNIT_NORM_TOLERANCE
}

pub fn normalize(v: Vec3) -> Option<Vec3> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Some([v[0] / n, v[1] / n, v[2] / n])
    } else {
        None
    }
}

/// Seconds since the session epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn shifted(self, by: f64) -> Self {
        Self(self.0 + by)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Pose,
    Gaze,
    HeartRate,
    Motion,
    Vehicle,
    Annotation,
}

impl StreamKind {
    pub const ALL: [StreamKind; 6] = [
        StreamKind::Pose,
        StreamKind::Gaze,
        StreamKind::HeartRate,
        StreamKind::Motion,
        StreamKind::Vehicle,
        StreamKind::Annotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Pose => "pose",
            StreamKind::Gaze => "gaze",
            StreamKind::HeartRate => "heart_rate",
            StreamKind::Motion => "motion",
            StreamKind::Vehicle => "vehicle",
            StreamKind::Annotation => "annotation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Rate the recording hardware nominally delivers, in Hz.
    pub fn default_rate(self) -> f64 {
        match self {
            StreamKind::Pose | StreamKind::Vehicle => 30.0,
            StreamKind::Gaze => 120.0,
            StreamKind::HeartRate => 1.0,
            StreamKind::Motion => 10.0,
            StreamKind::Annotation => 1.0,
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample<P> {
    pub t: Timestamp,
    pub payload: P,
}

impl<P> Sample<P> {
    pub fn new(t: f64, payload: P) -> Self {
        Self {
            t: Timestamp(t),
            payload,
        }
    }
}

/// One sensor stream on its own clock.
///
/// Streams produced by the parsers keep file order; `normalized` (and
/// therefore `synchronize`) establishes the sorted, duplicate-free form.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream<P> {
    pub kind: StreamKind,
    pub nominal_rate: f64,
    pub samples: Vec<Sample<P>>,
    /// Accumulated clock correction already applied to `samples`.
    pub clock_offset: f64,
}

impl<P: Clone> SampleStream<P> {
    pub fn new(kind: StreamKind, nominal_rate: f64, samples: Vec<Sample<P>>) -> Result<Self> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(Error::argument(format!(
                "{kind} stream: nominal rate must be positive, got {nominal_rate}"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !s.t.0.is_finite()) {
            return Err(Error::argument(format!(
                "{kind} stream: non-finite timestamp {}",
                bad.t.0
            )));
        }
        Ok(Self {
            kind,
            nominal_rate,
            samples,
            clock_offset: 0.0,
        })
    }

    pub fn empty(kind: StreamKind) -> Self {
        Self {
            kind,
            nominal_rate: kind.default_rate(),
            samples: Vec::new(),
            clock_offset: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> Vec<Timestamp> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].t.0 < w[1].t.0)
    }

    /// Stable sort by time, then collapse equal timestamps keeping the
    /// sample that came last in the original order.
    pub fn normalized(mut self) -> Self {
        self.samples.sort_by(|a, b| a.t.0.total_cmp(&b.t.0));
        let mut out: Vec<Sample<P>> = Vec::with_capacity(self.samples.len());
        for s in self.samples {
            match out.last_mut() {
                Some(last) if last.t.0 == s.t.0 => *last = s,
                _ => out.push(s),
            }
        }
        self.samples = out;
        self
    }

    pub fn shifted(mut self, offset: f64) -> Self {
        for s in &mut self.samples {
            s.t = s.t.shifted(offset);
        }
        self.clock_offset += offset;
        self
    }

    pub fn map<Q: Clone>(&self, f: impl Fn(&P) -> Q) -> SampleStream<Q> {
        SampleStream {
            kind: self.kind,
            nominal_rate: self.nominal_rate,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    t: s.t,
                    payload: f(&s.payload),
                })
                .collect(),
            clock_offset: self.clock_offset,
        }
    }

    /// Index of the first sample with `t >= at` (stream must be sorted).
    pub fn lower_bound(&self, at: f64) -> usize {
        self.samples.partition_point(|s| s.t.0 < at)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub head_position: Vec3,
    pub head_forward: Vec3,
    pub controller_trigger: f64,
    pub speed: f64,
}

impl PoseSample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !is_unit(self.head_forward) {
            return Err("non-unit direction".into());
        }
        if !(0.0..=1.0).contains(&self.controller_trigger) {
            return Err(format!(
                "controller trigger {} outside [0,1]",
                self.controller_trigger
            ));
        }
        Ok(())
    }
}

/// One non-ego object (vehicle) reported by the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleObservation {
    pub object: String,
    pub model: u8,
    pub position: Vec3,
    pub forward: Vec3,
    pub speed: f64,
}

/// All vehicles logged at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleSample {
    pub observations: Vec<VehicleObservation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeSample {
    pub direction: Vec3,
    pub pupil_diameter: f64,
    pub valid: bool,
}

impl EyeSample {
    pub fn invalid() -> Self {
        Self {
            direction: [f64::NAN; 3],
            pupil_diameter: f64::NAN,
            valid: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub origin: Vec3,
    pub left: EyeSample,
    pub right: EyeSample,
}

impl GazeSample {
    /// Mean of the valid eye directions, renormalized.
    pub fn cyclopean_direction(&self) -> Option<Vec3> {
        let eyes: Vec<&EyeSample> = [&self.left, &self.right]
            .into_iter()
            .filter(|e| e.valid)
            .collect();
        if eyes.is_empty() {
            return None;
        }
        let mut sum = [0.0; 3];
        for e in &eyes {
            for (acc, d) in sum.iter_mut().zip(e.direction) {
                *acc += d;
            }
        }
        normalize(sum)
    }

    pub fn validity(&self) -> (bool, bool) {
        (self.left.valid, self.right.valid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrSample {
    pub bpm: f64,
    /// False when the reading falls outside [`HR_PLAUSIBLE_RANGE`].
    pub plausible: bool,
}

impl HrSample {
    pub fn new(bpm: f64) -> Self {
        let (lo, hi) = HR_PLAUSIBLE_RANGE;
        Self {
            bpm,
            plausible: bpm.is_finite() && (lo..=hi).contains(&bpm),
        }
    }
}

/// Smartwatch motion channels recorded at one instant. Records of
/// different channels sharing a timestamp merge into one sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    /// Hand acceleration, m/s².
    pub accel: Option<Vec3>,
    /// Angular rate, rad/s.
    pub gyro: Option<Vec3>,
    /// Ambient audio amplitude (noise level).
    pub audio_amplitude: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationCategory {
    VehicleInteraction,
    IntersectionApproach,
    CrossingStart,
    CrossingInLane,
    Other,
}

impl AnnotationCategory {
    pub fn token(self) -> &'static str {
        match self {
            Self::VehicleInteraction => "vehicle_interaction",
            Self::IntersectionApproach => "intersection_approach",
            Self::CrossingStart => "crossing_start",
            Self::CrossingInLane => "crossing_in_lane",
            Self::Other => "other",
        }
    }

    /// Unknown tokens fall back to `Other`.
    pub fn from_token(token: &str) -> Self {
        match token.trim() {
            "vehicle_interaction" => Self::VehicleInteraction,
            "intersection_approach" => Self::IntersectionApproach,
            "crossing_start" => Self::CrossingStart,
            "crossing_in_lane" => Self::CrossingInLane,
            _ => Self::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub category: AnnotationCategory,
    pub label: String,
}

/// A manually annotated event: timestamp plus category and free-text label.
pub type AnnotationEvent = Sample<Annotation>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bicyclist,
    Pedestrian,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Bicyclist => "bicyclist",
            Mode::Pedestrian => "pedestrian",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.trim() {
            "bicyclist" => Some(Mode::Bicyclist),
            "pedestrian" => Some(Mode::Pedestrian),
            _ => None,
        }
    }
}

/// The typed set of streams of a session; one slot per [`StreamKind`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Streams {
    pub pose: Option<SampleStream<PoseSample>>,
    pub gaze: Option<SampleStream<GazeSample>>,
    pub heart_rate: Option<SampleStream<HrSample>>,
    pub motion: Option<SampleStream<MotionSample>>,
    pub vehicle: Option<SampleStream<VehicleSample>>,
    pub annotation: Option<SampleStream<Annotation>>,
}

impl Streams {
    pub fn has(&self, kind: StreamKind) -> bool {
        match kind {
            StreamKind::Pose => self.pose.is_some(),
            StreamKind::Gaze => self.gaze.is_some(),
            StreamKind::HeartRate => self.heart_rate.is_some(),
            StreamKind::Motion => self.motion.is_some(),
            StreamKind::Vehicle => self.vehicle.is_some(),
            StreamKind::Annotation => self.annotation.is_some(),
        }
    }

    pub fn all_strictly_increasing(&self) -> bool {
        fn ok<P: Clone>(s: &Option<SampleStream<P>>) -> bool {
            s.as_ref().is_none_or(|s| s.is_strictly_increasing())
        }
        ok(&self.pose)
            && ok(&self.gaze)
            && ok(&self.heart_rate)
            && ok(&self.motion)
            && ok(&self.vehicle)
            && ok(&self.annotation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecording {
    pub session_id: String,
    pub participant_id: String,
    pub mode: Mode,
    pub streams: Streams,
    pub road_network_ref: String,
}

/// Shift each named stream by its clock offset, then sort and collapse
/// duplicate timestamps (last sample in file order wins).
///
/// Offsets are keyed by stream name (`pose`, `gaze`, `heart_rate`, ...).
/// Streams without an offset are normalized in place with a zero shift.
pub fn synchronize(
    session: &SessionRecording,
    offsets: &BTreeMap<String, f64>,
) -> Result<SessionRecording> {
    for (source, offset) in offsets {
        let kind = StreamKind::from_name(source)
            .ok_or_else(|| Error::config(format!("unknown stream source '{source}'")))?;
        if !session.streams.has(kind) {
            return Err(Error::config(format!(
                "offset given for '{source}' but the session has no such stream"
            )));
        }
        if !offset.is_finite() {
            return Err(Error::config(format!("offset for '{source}' is not finite")));
        }
    }
    let offset_of = |kind: StreamKind| offsets.get(kind.name()).copied().unwrap_or(0.0);
    fn apply<P: Clone>(s: &Option<SampleStream<P>>, offset: f64) -> Option<SampleStream<P>> {
        s.as_ref().map(|s| s.clone().shifted(offset).normalized())
    }
    let st = &session.streams;
    Ok(SessionRecording {
        streams: Streams {
            pose: apply(&st.pose, offset_of(StreamKind::Pose)),
            gaze: apply(&st.gaze, offset_of(StreamKind::Gaze)),
            heart_rate: apply(&st.heart_rate, offset_of(StreamKind::HeartRate)),
            motion: apply(&st.motion, offset_of(StreamKind::Motion)),
            vehicle: apply(&st.vehicle, offset_of(StreamKind::Vehicle)),
            annotation: apply(&st.annotation, offset_of(StreamKind::Annotation)),
        },
        ..session.clone()
    })
}

/// Zero-order-hold resampling onto `timeline`. Timeline points before the
/// first sample (or any point, for an empty stream) become `None`.
pub fn resample_hold<P: Clone>(
    stream: &SampleStream<P>,
    timeline: &[Timestamp],
) -> Result<SampleStream<Option<P>>> {
    if timeline.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(Error::argument("resample timeline must be sorted"));
    }
    let mut idx = 0usize;
    let mut samples = Vec::with_capacity(timeline.len());
    for &t in timeline {
        while idx < stream.samples.len() && stream.samples[idx].t.0 <= t.0 {
            idx += 1;
        }
        let held = idx.checked_sub(1).map(|i| stream.samples[i].payload.clone());
        samples.push(Sample { t, payload: held });
    }
    Ok(SampleStream {
        kind: stream.kind,
        nominal_rate: stream.nominal_rate,
        samples,
        clock_offset: stream.clock_offset,
    })
}

/// Samples with `t0 <= t < t1`, in order.
pub fn window_slice<P: Clone>(
    stream: &SampleStream<P>,
    t0: Timestamp,
    t1: Timestamp,
) -> Result<SampleStream<P>> {
    if !(t0.0 <= t1.0) {
        return Err(Error::argument(format!(
            "window start {} is after end {}",
            t0.0, t1.0
        )));
    }
    let lo = stream.lower_bound(t0.0);
    let hi = stream.lower_bound(t1.0).max(lo);
    Ok(SampleStream {
        kind: stream.kind,
        nominal_rate: stream.nominal_rate,
        samples: stream.samples[lo..hi].to_vec(),
        clock_offset: stream.clock_offset,
    })
}
