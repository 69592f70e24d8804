//! Gaze projection onto the recorded view, spatial binning, and the two
//! gaze-entropy measures computed over rolling windows.
//!
//! Stationary gaze entropy (SGE) is the Shannon entropy of bin occupancy.
//! Gaze transition entropy (GTE) is the first-order conditional entropy of
//! bin-to-bin transitions, weighting each origin row by its share of all
//! transitions. Both are in bits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcp::{bcp_detect, BcpConfig, BcpResult};
use crate::error::{Error, Result};
use crate::model::{normalize, GazeSample, SampleStream, Timestamp, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Pinhole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Horizontal field of view, degrees.
    pub horizontal_fov: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub projection: Projection,
}

impl Default for CameraModel {
    /// 110° headset field of view mapped onto the 1920×1080 screen recording.
    fn default() -> Self {
        Self {
            horizontal_fov: 110.0,
            image_width: 1920,
            image_height: 1080,
            projection: Projection::Pinhole,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < 180.0) {
            return Err(Error::argument(format!(
                "horizontal fov must be in (0,180), got {}",
                self.horizontal_fov
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::argument("image dimensions must be positive"));
        }
        Ok(())
    }

    fn tan_half_h(&self) -> f64 {
        (self.horizontal_fov.to_radians() / 2.0).tan()
    }

    /// Vertical half-angle tangent implied by the aspect ratio.
    fn tan_half_v(&self) -> f64 {
        self.tan_half_h() * self.image_height as f64 / self.image_width as f64
    }

    pub fn vertical_fov(&self) -> f64 {
        2.0 * self.tan_half_v().atan().to_degrees()
    }

    fn width(&self) -> f64 {
        self.image_width as f64
    }

    fn height(&self) -> f64 {
        self.image_height as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eye {
    Left,
    Right,
    Cyclopean,
}

/// Image-space gaze point, origin top-left, y down. Points behind the
/// camera have NaN coordinates; both those and points outside the image
/// carry `off_screen`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenGazePoint {
    pub x: f64,
    pub y: f64,
    pub eye: Eye,
    pub off_screen: bool,
}

/// Pinhole projection of a head-frame direction (x right, y up, z forward).
pub fn project_direction(direction: Vec3, camera: &CameraModel, eye: Eye) -> ScreenGazePoint {
    let [dx, dy, dz] = direction;
    if !(dz > 0.0) {
        return ScreenGazePoint {
            x: f64::NAN,
            y: f64::NAN,
            eye,
            off_screen: true,
        };
    }
    let (w, h) = (camera.width(), camera.height());
    let x = w / 2.0 * (1.0 + dx / (dz * camera.tan_half_h()));
    let y = h / 2.0 * (1.0 - dy / (dz * camera.tan_half_v()));
    let inside = (0.0..=w).contains(&x) && (0.0..=h).contains(&y);
    ScreenGazePoint {
        x,
        y,
        eye,
        off_screen: !inside,
    }
}

/// Unit direction that projects to image point `(x, y)`.
pub fn unproject(x: f64, y: f64, camera: &CameraModel) -> Vec3 {
    let dx = (2.0 * x / camera.width() - 1.0) * camera.tan_half_h();
    let dy = (1.0 - 2.0 * y / camera.height()) * camera.tan_half_v();
    normalize([dx, dy, 1.0]).expect("finite direction")
}

/// One point per valid eye.
pub fn project_gaze(sample: &GazeSample, camera: &CameraModel) -> Vec<ScreenGazePoint> {
    [(Eye::Left, &sample.left), (Eye::Right, &sample.right)]
        .into_iter()
        .filter(|(_, e)| e.valid)
        .map(|(eye, e)| project_direction(e.direction, camera, eye))
        .collect()
}

/// Projection of the renormalized mean of the valid eye directions.
pub fn project_cyclopean(sample: &GazeSample, camera: &CameraModel) -> Option<ScreenGazePoint> {
    sample
        .cyclopean_direction()
        .map(|d| project_direction(d, camera, Eye::Cyclopean))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinId {
    Cell { col: i64, row: i64 },
    OffScreen,
}

pub fn spatial_bin(point: &ScreenGazePoint, bin_size: f64) -> BinId {
    if point.off_screen || !point.x.is_finite() || !point.y.is_finite() {
        return BinId::OffScreen;
    }
    BinId::Cell {
        col: (point.x / bin_size).floor() as i64,
        row: (point.y / bin_size).floor() as i64,
    }
}

/// Occupancy and transition counts of one window's bin sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntropyWindow {
    pub bin_occupancy: BTreeMap<BinId, usize>,
    pub bin_probabilities: BTreeMap<BinId, f64>,
    pub transition_counts: BTreeMap<(BinId, BinId), usize>,
    pub window_span: f64,
    pub sample_count: usize,
}

impl EntropyWindow {
    pub fn from_sequence(bins: &[BinId], window_span: f64, exclude_self_transitions: bool) -> Self {
        let mut occupancy = BTreeMap::new();
        for &b in bins {
            *occupancy.entry(b).or_insert(0) += 1;
        }
        let mut transitions = BTreeMap::new();
        for w in bins.windows(2) {
            if exclude_self_transitions && w[0] == w[1] {
                continue;
            }
            *transitions.entry((w[0], w[1])).or_insert(0) += 1;
        }
        Self::from_counts(occupancy, transitions, window_span)
    }

    pub fn from_counts(
        bin_occupancy: BTreeMap<BinId, usize>,
        transition_counts: BTreeMap<(BinId, BinId), usize>,
        window_span: f64,
    ) -> Self {
        let sample_count: usize = bin_occupancy.values().sum();
        let bin_probabilities = bin_occupancy
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&b, &c)| (b, c as f64 / sample_count as f64))
            .collect();
        Self {
            bin_occupancy,
            bin_probabilities,
            transition_counts,
            window_span,
            sample_count,
        }
    }

    pub fn occupied_bins(&self) -> usize {
        self.bin_occupancy.values().filter(|&&c| c > 0).count()
    }

    /// Share of transitions leaving each origin bin.
    pub fn origin_marginal(&self) -> BTreeMap<BinId, f64> {
        let total: usize = self.transition_counts.values().sum();
        let mut rows: BTreeMap<BinId, usize> = BTreeMap::new();
        for (&(from, _), &c) in &self.transition_counts {
            *rows.entry(from).or_insert(0) += c;
        }
        rows.into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(b, c)| (b, c as f64 / total as f64))
            .collect()
    }

    /// Share of transitions arriving in each destination bin.
    pub fn destination_marginal(&self) -> BTreeMap<BinId, f64> {
        let total: usize = self.transition_counts.values().sum();
        let mut cols: BTreeMap<BinId, usize> = BTreeMap::new();
        for (&(_, to), &c) in &self.transition_counts {
            *cols.entry(to).or_insert(0) += c;
        }
        cols.into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(b, c)| (b, c as f64 / total as f64))
            .collect()
    }
}

pub fn entropy_of<'a>(probabilities: impl IntoIterator<Item = &'a f64>) -> f64 {
    let h: f64 = probabilities
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// SGE in bits; 0 for an empty window.
pub fn stationary_entropy(window: &EntropyWindow) -> f64 {
    if window.sample_count == 0 {
        return 0.0;
    }
    entropy_of(window.bin_probabilities.values())
}

/// GTE in bits; 0 when the window has no transitions.
pub fn transition_entropy(window: &EntropyWindow) -> f64 {
    let total: usize = window.transition_counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let mut rows: BTreeMap<BinId, Vec<usize>> = BTreeMap::new();
    for (&(from, _), &c) in &window.transition_counts {
        if c > 0 {
            rows.entry(from).or_default().push(c);
        }
    }
    let h: f64 = rows
        .values()
        .map(|row| {
            let row_total: usize = row.iter().sum();
            let weight = row_total as f64 / total as f64;
            let conditional: f64 = row
                .iter()
                .map(|&c| {
                    let p = c as f64 / row_total as f64;
                    -p * p.log2()
                })
                .sum();
            weight * conditional
        })
        .sum();
    h.max(0.0)
}

/// Dispersion-threshold (I-DT) fixation filter over image points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationFilter {
    /// Max (x range + y range) in pixels for a group to count as one fixation.
    pub max_dispersion: f64,
    pub min_duration: f64,
}

impl Default for FixationFilter {
    fn default() -> Self {
        Self {
            max_dispersion: 50.0,
            min_duration: 0.1,
        }
    }
}

impl FixationFilter {
    /// Centroids of detected fixations, stamped at their first sample.
    /// Off-screen points break fixations and are dropped.
    pub fn apply(&self, points: &[(f64, ScreenGazePoint)]) -> Vec<(f64, ScreenGazePoint)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < points.len() {
            if points[start].1.off_screen {
                start += 1;
                continue;
            }
            let mut end = start + 1;
            let (mut min_x, mut max_x) = (points[start].1.x, points[start].1.x);
            let (mut min_y, mut max_y) = (points[start].1.y, points[start].1.y);
            while end < points.len() && !points[end].1.off_screen {
                let p = points[end].1;
                let (nx0, nx1) = (min_x.min(p.x), max_x.max(p.x));
                let (ny0, ny1) = (min_y.min(p.y), max_y.max(p.y));
                if (nx1 - nx0) + (ny1 - ny0) > self.max_dispersion {
                    break;
                }
                (min_x, max_x, min_y, max_y) = (nx0, nx1, ny0, ny1);
                end += 1;
            }
            let duration = points[end - 1].0 - points[start].0;
            if duration >= self.min_duration {
                let group = &points[start..end];
                let k = group.len() as f64;
                let cx = group.iter().map(|(_, p)| p.x).sum::<f64>() / k;
                let cy = group.iter().map(|(_, p)| p.y).sum::<f64>() / k;
                out.push((
                    points[start].0,
                    ScreenGazePoint {
                        x: cx,
                        y: cy,
                        eye: Eye::Cyclopean,
                        off_screen: false,
                    },
                ));
                start = end;
            } else {
                start += 1;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    /// Window length, seconds.
    pub window: f64,
    /// Step between window starts, seconds.
    pub hop: f64,
    /// Bin edge, pixels.
    pub bin_size: f64,
    /// Windows with fewer valid samples than this share of the nominal
    /// count become gaps.
    pub min_valid_fraction: f64,
    pub exclude_self_transitions: bool,
    pub fixation_filter: Option<FixationFilter>,
}

impl Default for EntropyParams {
    fn default() -> Self {
        Self {
            window: 5.0,
            hop: 1.0,
            bin_size: 100.0,
            min_valid_fraction: 0.5,
            exclude_self_transitions: false,
            fixation_filter: None,
        }
    }
}

/// Windowed SGE/GTE plus change-point posteriors over both series.
///
/// `sge`/`gte` hold `None` for gap windows. The BCP results run over the
/// non-gap windows only; `bcp_windows[k]` is the window index of the k-th
/// BCP position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    /// Window end times.
    pub timestamps: Vec<Timestamp>,
    pub sge: Vec<Option<f64>>,
    pub gte: Vec<Option<f64>>,
    pub sample_counts: Vec<usize>,
    pub bcp_windows: Vec<usize>,
    pub sge_bcp: Option<BcpResult>,
    pub gte_bcp: Option<BcpResult>,
}

impl EntropySeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Window `[start, start + window)` boundaries covering the stream span
/// `[first sample, last sample + one period)`.
pub fn window_starts(first: f64, last: f64, rate: f64, window: f64, hop: f64) -> Vec<f64> {
    let span_end = last + 1.0 / rate;
    let mut starts = Vec::new();
    let mut m = 0u64;
    loop {
        let start = first + m as f64 * hop;
        if start + window > span_end + 1e-9 {
            break;
        }
        starts.push(start);
        m += 1;
    }
    starts
}

pub fn rolling_entropy(
    gaze: &SampleStream<GazeSample>,
    camera: &CameraModel,
    params: &EntropyParams,
    bcp_config: &BcpConfig,
) -> Result<EntropySeries> {
    camera.validate()?;
    if !(params.window > 0.0 && params.hop > 0.0) {
        return Err(Error::argument("window and hop must be positive"));
    }
    if !(params.bin_size > 0.0) {
        return Err(Error::argument("bin size must be positive"));
    }
    if gaze.is_empty() {
        return Err(Error::argument("gaze stream is empty"));
    }
    if params.window < 2.0 / gaze.nominal_rate {
        return Err(Error::argument(format!(
            "window {} s is shorter than two sample periods at {} Hz",
            params.window, gaze.nominal_rate
        )));
    }

    let points: Vec<Option<ScreenGazePoint>> = gaze
        .samples
        .par_iter()
        .map(|s| project_cyclopean(&s.payload, camera))
        .collect();
    let first = gaze.samples[0].t.0;
    let last = gaze.samples[gaze.len() - 1].t.0;
    let starts = window_starts(first, last, gaze.nominal_rate, params.window, params.hop);
    let min_valid = ((params.min_valid_fraction * params.window * gaze.nominal_rate).ceil() as usize).max(2);

    let windows: Vec<(f64, usize, Option<(f64, f64)>)> = starts
        .par_iter()
        .map(|&start| {
            let end = start + params.window;
            let lo = gaze.lower_bound(start);
            let hi = gaze.lower_bound(end);
            let valid: Vec<(f64, ScreenGazePoint)> = (lo..hi)
                .filter_map(|i| points[i].map(|p| (gaze.samples[i].t.0, p)))
                .collect();
            let count = valid.len();
            if count < min_valid {
                return (end, count, None);
            }
            let sequence: Vec<(f64, ScreenGazePoint)> = match &params.fixation_filter {
                Some(filter) => filter.apply(&valid),
                None => valid,
            };
            let bins: Vec<BinId> = sequence
                .iter()
                .map(|(_, p)| spatial_bin(p, params.bin_size))
                .collect();
            let w = EntropyWindow::from_sequence(&bins, params.window, params.exclude_self_transitions);
            (end, count, Some((stationary_entropy(&w), transition_entropy(&w))))
        })
        .collect();

    let timestamps = windows.iter().map(|w| Timestamp(w.0)).collect();
    let sample_counts = windows.iter().map(|w| w.1).collect();
    let sge: Vec<Option<f64>> = windows.iter().map(|w| w.2.map(|e| e.0)).collect();
    let gte: Vec<Option<f64>> = windows.iter().map(|w| w.2.map(|e| e.1)).collect();
    let bcp_windows: Vec<usize> = (0..windows.len()).filter(|&i| sge[i].is_some()).collect();

    let (sge_bcp, gte_bcp) = if bcp_windows.len() >= 2 {
        let s: Vec<f64> = bcp_windows.iter().map(|&i| sge[i].unwrap()).collect();
        let g: Vec<f64> = bcp_windows.iter().map(|&i| gte[i].unwrap()).collect();
        let gte_config = bcp_config.with_seed(bcp_config.seed.wrapping_add(1));
        let (a, b) = rayon::join(|| bcp_detect(&s, bcp_config), || bcp_detect(&g, &gte_config));
        (Some(a?), Some(b?))
    } else {
        (None, None)
    };

    Ok(EntropySeries {
        timestamps,
        sge,
        gte,
        sample_counts,
        bcp_windows,
        sge_bcp,
        gte_bcp,
    })
}
