//! Synthetic sessions with known ground truth.
//!
//! A scenario drives one participant along the corridor at a piecewise
//! constant speed. Heart rate is a baseline plus Gaussian noise with step
//! shifts at configured corridor positions; gaze looks straight ahead with
//! small angular jitter except during scan episodes, where it hops between
//! screen bins. Vehicles enter the corridor at headways drawn from an
//! empirical CDF. Every injected event is recorded in the manifest.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{unproject, CameraModel};
use crate::ingest::{write_annotations, write_gaze_log, write_pose_log, write_watch_log, PoseLog, SessionManifest, WatchLog};
use crate::kv::KeyValues;
use crate::model::{
    normalize, Annotation, AnnotationCategory, EyeSample, GazeSample, HrSample, Mode, MotionSample, PoseSample,
    Sample, SampleStream, SessionRecording, StreamKind, Streams, VehicleObservation, VehicleSample,
};
use crate::spatial::RoadNetwork;

/// Bundled scenario: a bicyclist run with two heart-rate shifts around the
/// second intersection.
pub const DEFAULT_SCENARIO: &str = include_str!("../data/default.scenario");

/// Synthetic headway sample (seconds), standing in for field observations.
pub const DEFAULT_HEADWAYS: [f64; 30] = [
    2.1, 2.4, 2.4, 2.8, 3.0, 3.1, 3.3, 3.3, 3.6, 3.9, 4.0, 4.2, 4.5, 4.5, 4.8, 5.0, 5.4, 5.7, 6.0, 6.0, 6.5, 6.9,
    7.2, 7.8, 8.1, 8.8, 9.5, 10.4, 12.0, 14.5,
];

const HEAD_HEIGHT: f64 = 1.5;
const VEHICLE_LANE_OFFSET: f64 = -3.5;
const PUPIL_DIAMETER: f64 = 3.5;

/// Step CDF over distinct sorted support values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub support: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Smallest support value with F ≥ u.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < u);
        self.support[k.min(self.support.len() - 1)]
    }
}

pub fn fit_empirical_cdf(gaps: &[f64]) -> Result<EmpiricalCdf> {
    if gaps.is_empty() {
        return Err(Error::argument("headway sample is empty"));
    }
    if let Some(bad) = gaps.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::argument(format!("headway gaps must be positive, got {bad}")));
    }
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut support = Vec::new();
    let mut cumulative = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        if support.last() == Some(&v) {
            *cumulative.last_mut().unwrap() = (k + 1) as f64 / n;
        } else {
            support.push(v);
            cumulative.push((k + 1) as f64 / n);
        }
    }
    *cumulative.last_mut().unwrap() = 1.0;
    Ok(EmpiricalCdf { support, cumulative })
}

pub fn sample_headways(cdf: &EmpiricalCdf, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| cdf.quantile(rng.gen::<f64>())).collect()
}

/// Corridor position given as an absolute arclength or relative to a
/// named intersection (`name@offset`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Arclength(f64),
    Intersection { name: String, offset: f64 },
}

impl Location {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once('@') {
            Some((name, offset)) => Ok(Self::Intersection {
                name: name.trim().to_string(),
                offset: offset
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("invalid offset in {s:?}")))?,
            }),
            None => s
                .parse()
                .map(Self::Arclength)
                .map_err(|_| Error::config(format!("invalid location {s:?}"))),
        }
    }

    fn resolve(&self, network: &RoadNetwork) -> Result<f64> {
        match self {
            Self::Arclength(s) => Ok(*s),
            Self::Intersection { name, offset } => network
                .intersection(name)
                .map(|i| i.arclength + offset)
                .ok_or_else(|| Error::argument(format!("unknown intersection '{name}'"))),
        }
    }

    fn to_text(&self) -> String {
        match self {
            Self::Arclength(s) => format!("{s}"),
            Self::Intersection { name, offset } => format!("{name}@{offset}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub location: Location,
    /// bpm
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEpisode {
    pub start: f64,
    pub duration: f64,
    /// Half-width, in bins, of the square of bins visited around the view
    /// center.
    pub spread: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub session_id: String,
    pub participant_id: String,
    pub mode: Mode,
    /// (from arclength, speed m/s), ascending.
    pub speed_profile: Vec<(f64, f64)>,
    pub start_arclength: f64,
    /// Seconds; `None` runs to the corridor end.
    pub duration: Option<f64>,
    pub hr_baseline: f64,
    pub hr_noise: f64,
    pub hr_shifts: Vec<ShiftSpec>,
    pub scan_episodes: Vec<ScanEpisode>,
    pub scan_fixation: f64,
    /// Angular standard deviation, degrees.
    pub gaze_jitter: f64,
    pub headways: Vec<f64>,
    pub vehicles: usize,
    pub vehicle_speed: f64,
    /// Standard deviation of per-sample timestamp jitter, seconds.
    pub timestamp_jitter: f64,
    /// Added to watch timestamps on disk; undone by the session offsets.
    pub watch_epoch: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            session_id: "synth".into(),
            participant_id: "1".into(),
            mode: Mode::Bicyclist,
            speed_profile: vec![(0.0, 3.0)],
            start_arclength: 0.0,
            duration: None,
            hr_baseline: 72.0,
            hr_noise: 1.5,
            hr_shifts: Vec::new(),
            scan_episodes: Vec::new(),
            scan_fixation: 0.25,
            gaze_jitter: 0.5,
            headways: DEFAULT_HEADWAYS.to_vec(),
            vehicles: 0,
            vehicle_speed: 11.0,
            timestamp_jitter: 0.0,
            watch_epoch: 0.0,
            seed: 0,
        }
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').map(str::trim).filter(|p| !p.is_empty())
}

fn pair(s: &str, what: &str) -> Result<(String, String)> {
    s.rsplit_once(':')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| Error::config(format!("invalid {what} entry {s:?}")))
}

fn num(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid number {s:?} in {what}")))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    /// Keys: session_id, participant_id, mode, speed or speed_profile
    /// (`s:v; s:v`), start_arclength, duration, hr_baseline, hr_noise,
    /// hr_shifts (`loc:delta; ...`), scan_episodes (`start:duration:spread; ...`),
    /// scan_fixation, gaze_jitter, headways (`default` or comma list),
    /// vehicles, vehicle_speed, timestamp_jitter, watch_epoch, seed.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let mode = match kv.get("mode") {
            None => d.mode,
            Some(m) => Mode::from_name(m).ok_or_else(|| Error::config(format!("unknown mode '{m}'")))?,
        };
        let speed_profile = match (kv.get("speed_profile"), kv.parsed::<f64>("speed")?) {
            (Some(p), _) => split_list(p)
                .map(|e| {
                    let (s, v) = pair(e, "speed_profile")?;
                    Ok((num(&s, "speed_profile")?, num(&v, "speed_profile")?))
                })
                .collect::<Result<Vec<_>>>()?,
            (None, Some(v)) => vec![(0.0, v)],
            (None, None) => d.speed_profile,
        };
        let hr_shifts = kv
            .get("hr_shifts")
            .map(|v| {
                split_list(v)
                    .map(|e| {
                        let (loc, delta) = pair(e, "hr_shifts")?;
                        Ok(ShiftSpec {
                            location: Location::parse(&loc)?,
                            delta: num(&delta, "hr_shifts")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        let scan_episodes = kv
            .get("scan_episodes")
            .map(|v| {
                split_list(v)
                    .map(|e| {
                        let parts: Vec<&str> = e.split(':').collect();
                        if parts.len() != 3 {
                            return Err(Error::config(format!("invalid scan episode {e:?}")));
                        }
                        Ok(ScanEpisode {
                            start: num(parts[0], "scan_episodes")?,
                            duration: num(parts[1], "scan_episodes")?,
                            spread: parts[2]
                                .trim()
                                .parse()
                                .map_err(|_| Error::config(format!("invalid spread in {e:?}")))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        let headways = match kv.get("headways") {
            None | Some("default") => d.headways,
            Some(_) => kv.list("headways")?.unwrap_or_default(),
        };
        let scenario = Self {
            session_id: kv.get("session_id").map(str::to_string).unwrap_or(d.session_id),
            participant_id: kv.get("participant_id").map(str::to_string).unwrap_or(d.participant_id),
            mode,
            speed_profile,
            start_arclength: kv.parsed_or("start_arclength", d.start_arclength)?,
            duration: kv.parsed("duration")?,
            hr_baseline: kv.parsed_or("hr_baseline", d.hr_baseline)?,
            hr_noise: kv.parsed_or("hr_noise", d.hr_noise)?,
            hr_shifts,
            scan_episodes,
            scan_fixation: kv.parsed_or("scan_fixation", d.scan_fixation)?,
            gaze_jitter: kv.parsed_or("gaze_jitter", d.gaze_jitter)?,
            headways,
            vehicles: kv.parsed_or("vehicles", d.vehicles)?,
            vehicle_speed: kv.parsed_or("vehicle_speed", d.vehicle_speed)?,
            timestamp_jitter: kv.parsed_or("timestamp_jitter", d.timestamp_jitter)?,
            watch_epoch: kv.parsed_or("watch_epoch", d.watch_epoch)?,
            seed: kv.parsed_or("seed", d.seed)?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed_profile.is_empty() || self.speed_profile.iter().any(|&(_, v)| !(v > 0.0 && v.is_finite())) {
            return Err(Error::config("speeds must be positive"));
        }
        if self.speed_profile.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::config("speed profile arclengths must increase"));
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::config(format!("duration must be non-negative, got {d}")));
            }
        }
        for (name, v) in [
            ("hr_noise", self.hr_noise),
            ("gaze_jitter", self.gaze_jitter),
            ("timestamp_jitter", self.timestamp_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative")));
            }
        }
        if !(self.scan_fixation > 0.0) || !(self.vehicle_speed > 0.0) {
            return Err(Error::config("scan_fixation and vehicle_speed must be positive"));
        }
        if self.scan_episodes.iter().any(|e| !(e.duration >= 0.0 && e.start >= 0.0)) {
            return Err(Error::config("scan episodes need non-negative start and duration"));
        }
        if self.vehicles > 0 {
            fit_empirical_cdf(&self.headways)?;
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let list = |items: Vec<String>| items.join("; ");
        kv.insert("session_id", &self.session_id);
        kv.insert("participant_id", &self.participant_id);
        kv.insert("mode", self.mode.name());
        kv.insert(
            "speed_profile",
            list(self.speed_profile.iter().map(|(s, v)| format!("{s}:{v}")).collect()),
        );
        kv.insert("start_arclength", self.start_arclength.to_string());
        if let Some(d) = self.duration {
            kv.insert("duration", d.to_string());
        }
        kv.insert("hr_baseline", self.hr_baseline.to_string());
        kv.insert("hr_noise", self.hr_noise.to_string());
        kv.insert(
            "hr_shifts",
            list(self.hr_shifts.iter().map(|s| format!("{}:{}", s.location.to_text(), s.delta)).collect()),
        );
        kv.insert(
            "scan_episodes",
            list(
                self.scan_episodes
                    .iter()
                    .map(|e| format!("{}:{}:{}", e.start, e.duration, e.spread))
                    .collect(),
            ),
        );
        kv.insert("scan_fixation", self.scan_fixation.to_string());
        kv.insert("gaze_jitter", self.gaze_jitter.to_string());
        kv.insert(
            "headways",
            self.headways.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        kv.insert("vehicles", self.vehicles.to_string());
        kv.insert("vehicle_speed", self.vehicle_speed.to_string());
        kv.insert("timestamp_jitter", self.timestamp_jitter.to_string());
        kv.insert("watch_epoch", self.watch_epoch.to_string());
        kv.insert("seed", self.seed.to_string());
        kv
    }
}

/// Piecewise-constant-speed motion along the corridor.
#[derive(Clone, Debug)]
struct Trajectory {
    /// (arclength, time, speed) at the start of each piece.
    knots: Vec<(f64, f64, f64)>,
    end: f64,
}

impl Trajectory {
    fn new(profile: &[(f64, f64)], start: f64, end: f64) -> Self {
        let speed_at = |s: f64| {
            profile
                .iter()
                .rev()
                .find(|(from, _)| *from <= s)
                .unwrap_or(&profile[0])
                .1
        };
        let mut knots = vec![(start, 0.0, speed_at(start))];
        for &(from, v) in profile.iter().filter(|(from, _)| *from > start && *from < end) {
            let (s0, t0, v0) = *knots.last().unwrap();
            knots.push((from, t0 + (from - s0) / v0, v));
        }
        Self { knots, end }
    }

    fn time_at(&self, s: f64) -> f64 {
        let k = self.knots.partition_point(|k| k.0 <= s).max(1) - 1;
        let (s0, t0, v) = self.knots[k];
        t0 + (s - s0) / v
    }

    fn total_time(&self) -> f64 {
        self.time_at(self.end)
    }

    /// (arclength, speed); parked at the corridor end once reached.
    fn state_at(&self, t: f64) -> (f64, f64) {
        let k = self.knots.partition_point(|k| k.1 <= t).max(1) - 1;
        let (s0, t0, v) = self.knots[k];
        let s = s0 + v * (t - t0);
        if s >= self.end {
            (self.end, 0.0)
        } else {
            (s, v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedShift {
    pub arclength: f64,
    pub delta: f64,
    /// Session time at which the participant reaches `arclength`; HR
    /// samples at or after it carry the new level.
    pub timestamp: f64,
    pub intersection: Option<String>,
    pub offset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedVehicle {
    pub object: String,
    pub model: u8,
    /// Session time the vehicle enters the corridor start.
    pub arrival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub seed: u64,
    pub session_id: String,
    pub participant_id: String,
    pub mode: Mode,
    pub duration: f64,
    pub hr_shifts: Vec<InjectedShift>,
    pub scan_episodes: Vec<ScanEpisode>,
    pub headway_draws: Vec<f64>,
    pub vehicles: Vec<InjectedVehicle>,
    pub scenario: std::collections::BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSession {
    /// Streams on the session clock.
    pub recording: SessionRecording,
    pub annotations: Vec<Sample<Annotation>>,
    pub manifest: GroundTruthManifest,
    pub network: RoadNetwork,
    pub watch_epoch: f64,
}

fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample times `k / rate` below `duration`, each displaced by clipped
/// Gaussian jitter.
fn timeline(duration: f64, rate: f64, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = ((duration * rate) - 1e-9).ceil().max(0.0) as usize;
    let limit = 0.4 / rate;
    let noise = (jitter > 0.0).then(|| Normal::new(0.0, jitter).expect("valid sigma"));
    (0..n)
        .map(|k| {
            let t = k as f64 / rate;
            match &noise {
                Some(d) => t + d.sample(rng).clamp(-limit, limit),
                None => t,
            }
        })
        .collect()
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma"))
}

pub fn generate_session(scenario: &Scenario, network: &RoadNetwork, seed: u64) -> Result<SyntheticSession> {
    scenario.validate()?;
    let end = network.length();
    if !(0.0..end).contains(&scenario.start_arclength) {
        return Err(Error::argument(format!(
            "start arclength {} outside the corridor",
            scenario.start_arclength
        )));
    }
    let trajectory = Trajectory::new(&scenario.speed_profile, scenario.start_arclength, end);
    let duration = scenario.duration.unwrap_or_else(|| trajectory.total_time());

    let mut shifts = Vec::new();
    for spec in &scenario.hr_shifts {
        let s = spec.location.resolve(network)?;
        if !(scenario.start_arclength..=end).contains(&s) {
            return Err(Error::argument(format!("HR shift arclength {s} outside the corridor")));
        }
        let (intersection, offset) = match &spec.location {
            Location::Intersection { name, offset } => (Some(name.clone()), Some(*offset)),
            Location::Arclength(_) => (None, None),
        };
        shifts.push(InjectedShift {
            arclength: s,
            delta: spec.delta,
            timestamp: trajectory.time_at(s),
            intersection,
            offset,
        });
    }
    shifts.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let jitter = scenario.timestamp_jitter;

    // pose
    let mut rng = component_rng(seed, 1);
    let pose_times = timeline(duration, StreamKind::Pose.default_rate(), jitter, &mut rng);
    let pose: Vec<Sample<PoseSample>> = pose_times
        .iter()
        .map(|&t| {
            let (s, v) = trajectory.state_at(t.max(0.0));
            let mut p = network.point_at(s, 0.0);
            p[1] += HEAD_HEIGHT;
            Sample::new(
                t,
                PoseSample {
                    head_position: p,
                    head_forward: network.direction_at(s),
                    controller_trigger: 0.0,
                    speed: v,
                },
            )
        })
        .collect();

    // heart rate
    let mut rng = component_rng(seed, 2);
    let hr_times = timeline(duration, StreamKind::HeartRate.default_rate(), jitter, &mut rng);
    let hr_noise = gaussian(scenario.hr_noise);
    let hr: Vec<Sample<HrSample>> = hr_times
        .iter()
        .map(|&t| {
            let level: f64 = scenario.hr_baseline
                + shifts.iter().filter(|s| s.timestamp <= t).map(|s| s.delta).sum::<f64>();
            let noise = hr_noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            Sample::new(t, HrSample::new(level + noise))
        })
        .collect();

    // gaze
    let camera = CameraModel::default();
    let mut rng = component_rng(seed, 3);
    let gaze_times = timeline(duration, StreamKind::Gaze.default_rate(), jitter, &mut rng);
    let episode_bins: Vec<Vec<(i64, i64)>> = scenario
        .scan_episodes
        .iter()
        .map(|e| scan_bins(e, scenario.scan_fixation, &camera, &mut rng))
        .collect();
    let angle = gaussian(scenario.gaze_jitter.to_radians());
    let gaze: Vec<Sample<GazeSample>> = gaze_times
        .iter()
        .map(|&t| {
            let base = scenario
                .scan_episodes
                .iter()
                .zip(&episode_bins)
                .find(|(e, _)| t >= e.start && t < e.start + e.duration)
                .map(|(e, bins)| {
                    let f = (((t - e.start) / scenario.scan_fixation) as usize).min(bins.len() - 1);
                    let (col, row) = bins[f];
                    unproject(col as f64 * 100.0 + 50.0, row as f64 * 100.0 + 50.0, &camera)
                })
                .unwrap_or([0.0, 0.0, 1.0]);
            let direction = match &angle {
                Some(d) => {
                    let (yaw, pitch) = (d.sample(&mut rng), d.sample(&mut rng));
                    normalize([base[0] / base[2] + yaw.tan(), base[1] / base[2] + pitch.tan(), 1.0])
                        .expect("finite direction")
                }
                None => base,
            };
            let eye = EyeSample {
                direction,
                pupil_diameter: PUPIL_DIAMETER,
                valid: true,
            };
            Sample::new(
                t,
                GazeSample {
                    origin: [0.0; 3],
                    left: eye.clone(),
                    right: eye,
                },
            )
        })
        .collect();

    // motion: 10 Hz accel and gyro, audio level once a minute
    let mut rng = component_rng(seed, 4);
    let motion_times = timeline(duration, StreamKind::Motion.default_rate(), jitter, &mut rng);
    let accel_noise = Normal::new(0.0, 0.3).expect("valid sigma");
    let gyro_noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let audio_noise = Normal::new(0.0, 3.0).expect("valid sigma");
    let motion: Vec<Sample<MotionSample>> = motion_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let accel = [
                accel_noise.sample(&mut rng),
                -9.81 + accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
            ];
            let gyro = [
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
            ];
            let audio = (k % 600 == 0).then(|| 55.0 + audio_noise.sample(&mut rng));
            Sample::new(
                t,
                MotionSample {
                    accel: Some(accel),
                    gyro: Some(gyro),
                    audio_amplitude: audio,
                },
            )
        })
        .collect();

    // vehicles
    let mut rng = component_rng(seed, 5);
    let (headway_draws, vehicles) = if scenario.vehicles > 0 {
        let cdf = fit_empirical_cdf(&scenario.headways)?;
        let draws = sample_headways(&cdf, scenario.vehicles, rng.gen());
        let mut arrival = 0.0;
        let vehicles: Vec<InjectedVehicle> = draws
            .iter()
            .enumerate()
            .map(|(k, h)| {
                arrival += h;
                InjectedVehicle {
                    object: format!("car{}", k + 1),
                    model: rng.gen_range(0..4),
                    arrival,
                }
            })
            .collect();
        (draws, vehicles)
    } else {
        (Vec::new(), Vec::new())
    };
    let vehicle_frames: Vec<Sample<VehicleSample>> = pose_times
        .iter()
        .filter_map(|&t| {
            let observations: Vec<VehicleObservation> = vehicles
                .iter()
                .filter_map(|v| {
                    let s = scenario.vehicle_speed * (t - v.arrival);
                    (0.0..=end).contains(&s).then(|| {
                        let mut p = network.point_at(s, VEHICLE_LANE_OFFSET);
                        p[1] += 0.7;
                        VehicleObservation {
                            object: v.object.clone(),
                            model: v.model,
                            position: p,
                            forward: network.direction_at(s),
                            speed: scenario.vehicle_speed,
                        }
                    })
                })
                .collect();
            (!observations.is_empty()).then(|| Sample::new(t, VehicleSample { observations }))
        })
        .collect();

    let annotations = annotate(scenario, network, &trajectory, duration, &vehicles);

    let mut streams = Streams {
        pose: Some(SampleStream::new(StreamKind::Pose, StreamKind::Pose.default_rate(), pose)?),
        gaze: Some(SampleStream::new(StreamKind::Gaze, StreamKind::Gaze.default_rate(), gaze)?),
        heart_rate: Some(SampleStream::new(StreamKind::HeartRate, StreamKind::HeartRate.default_rate(), hr)?),
        motion: Some(SampleStream::new(StreamKind::Motion, StreamKind::Motion.default_rate(), motion)?),
        vehicle: None,
        annotation: Some(SampleStream::new(
            StreamKind::Annotation,
            StreamKind::Annotation.default_rate(),
            annotations.clone(),
        )?),
    };
    if !vehicle_frames.is_empty() {
        streams.vehicle = Some(SampleStream::new(
            StreamKind::Vehicle,
            StreamKind::Vehicle.default_rate(),
            vehicle_frames,
        )?);
    }
    let recording = SessionRecording {
        session_id: scenario.session_id.clone(),
        participant_id: scenario.participant_id.clone(),
        mode: scenario.mode,
        streams,
        road_network_ref: "road.txt".into(),
    };
    let echo = scenario.to_key_values();
    let manifest = GroundTruthManifest {
        seed,
        session_id: scenario.session_id.clone(),
        participant_id: scenario.participant_id.clone(),
        mode: scenario.mode,
        duration,
        hr_shifts: shifts,
        scan_episodes: scenario.scan_episodes.clone(),
        headway_draws,
        vehicles,
        scenario: echo.keys().map(|k| (k.to_string(), echo.get(k).unwrap_or_default().to_string())).collect(),
    };
    Ok(SyntheticSession {
        recording,
        annotations,
        manifest,
        network: network.clone(),
        watch_epoch: scenario.watch_epoch,
    })
}

/// One bin per fixation, never repeating the previous bin.
fn scan_bins(episode: &ScanEpisode, fixation: f64, camera: &CameraModel, rng: &mut ChaCha8Rng) -> Vec<(i64, i64)> {
    let cols = (camera.image_width as f64 / 100.0).ceil() as i64;
    let rows = (camera.image_height as f64 / 100.0).ceil() as i64;
    let (cc, cr) = (
        (camera.image_width as f64 / 200.0).floor() as i64,
        (camera.image_height as f64 / 200.0).floor() as i64,
    );
    let spread = episode.spread.max(1) as i64;
    let candidates: Vec<(i64, i64)> = ((cc - spread).max(0)..=(cc + spread).min(cols - 1))
        .flat_map(|c| ((cr - spread).max(0)..=(cr + spread).min(rows - 1)).map(move |r| (c, r)))
        .collect();
    let n = ((episode.duration / fixation).ceil() as usize).max(1);
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = loop {
            let c = candidates[rng.gen_range(0..candidates.len())];
            if out.last() != Some(&c) {
                break c;
            }
        };
        out.push(pick);
    }
    out
}

fn annotate(
    scenario: &Scenario,
    network: &RoadNetwork,
    trajectory: &Trajectory,
    duration: f64,
    vehicles: &[InjectedVehicle],
) -> Vec<Sample<Annotation>> {
    let mut out = Vec::new();
    for i in network.intersections() {
        let s = i.arclength - 20.0;
        if s >= scenario.start_arclength {
            let t = trajectory.time_at(s);
            if t < duration {
                out.push(Sample::new(
                    t,
                    Annotation {
                        category: AnnotationCategory::IntersectionApproach,
                        label: format!("approaching {}", i.name),
                    },
                ));
            }
        }
    }
    for (k, e) in scenario.scan_episodes.iter().enumerate() {
        if e.start < duration {
            out.push(Sample::new(
                e.start,
                Annotation {
                    category: AnnotationCategory::Other,
                    label: format!("scan episode {}", k + 1),
                },
            ));
        }
    }
    for v in vehicles {
        // first pose tick at which the vehicle has drawn level
        let step = 1.0 / StreamKind::Pose.default_rate();
        let mut t = v.arrival.max(0.0);
        while t < duration {
            let vs = scenario.vehicle_speed * (t - v.arrival);
            if vs > network.length() {
                break;
            }
            if vs >= trajectory.state_at(t).0 {
                out.push(Sample::new(
                    t,
                    Annotation {
                        category: AnnotationCategory::VehicleInteraction,
                        label: format!("{} passes", v.object),
                    },
                ));
                break;
            }
            t += step;
        }
    }
    out.sort_by(|a, b| a.t.0.total_cmp(&b.t.0));
    out
}

/// Writes the session as ingestible logs plus `session.txt`, `road.txt`
/// and `manifest.json`. Returns the session descriptor path.
pub fn write_session(session: &SyntheticSession, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let st = &session.recording.streams;
    let pose = PoseLog {
        pose: st.pose.clone().unwrap_or_else(|| SampleStream::empty(StreamKind::Pose)),
        vehicle: st.vehicle.clone().unwrap_or_else(|| SampleStream::empty(StreamKind::Vehicle)),
    };
    let epoch = session.watch_epoch;
    let watch = WatchLog {
        heart_rate: st
            .heart_rate
            .clone()
            .unwrap_or_else(|| SampleStream::empty(StreamKind::HeartRate))
            .shifted(epoch),
        motion: st.motion.clone().unwrap_or_else(|| SampleStream::empty(StreamKind::Motion)).shifted(epoch),
    };
    let gaze = st.gaze.clone().unwrap_or_else(|| SampleStream::empty(StreamKind::Gaze));

    let mut offsets = std::collections::BTreeMap::new();
    if epoch != 0.0 {
        offsets.insert(StreamKind::HeartRate.name().to_string(), -epoch);
        offsets.insert(StreamKind::Motion.name().to_string(), -epoch);
    }
    let manifest = SessionManifest {
        session_id: session.recording.session_id.clone(),
        participant_id: session.recording.participant_id.clone(),
        mode: session.recording.mode,
        road_network: dir.join("road.txt"),
        pose: Some(dir.join("pose.csv")),
        gaze: Some(dir.join("gaze.csv")),
        watch: Some(dir.join("watch.log")),
        annotations: Some(dir.join("annotations.csv")),
        column_map: None,
        offsets,
    };
    let descriptor = dir.join("session.txt");
    std::fs::write(dir.join("road.txt"), session.network.to_text())?;
    std::fs::write(dir.join("pose.csv"), write_pose_log(&pose))?;
    std::fs::write(dir.join("gaze.csv"), write_gaze_log(&gaze))?;
    std::fs::write(dir.join("watch.log"), write_watch_log(&watch))?;
    std::fs::write(dir.join("annotations.csv"), write_annotations(&session.annotations))?;
    std::fs::write(&descriptor, manifest.to_text(dir))?;
    let json = serde_json::to_string_pretty(&session.manifest).map_err(|e| Error::argument(e.to_string()))? + "\n";
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(descriptor)
}
