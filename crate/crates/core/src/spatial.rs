//! Corridor geometry: a centerline polyline with named segments and
//! intersections at fixed arclengths.
//!
//! World frame is y-up. Arclength, projection and lateral offset are
//! measured in the ground (x–z) plane; y only carries elevation. Lateral
//! offset is positive to the right of the travel direction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vec3;

pub const ROAD_HEADER: &str = "orcl-road v1";
pub const GRADE_RANGE: (f64, f64) = (-10.0, 20.0);

const TILE_TOLERANCE: f64 = 1e-6;

/// Bundled approximate corridor: four blocks, three intersections, and a
/// −4 % block between the first two intersections.
pub const CORRIDOR_FIXTURE: &str = include_str!("../data/corridor.road");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelDirection {
    #[default]
    IncreasingArclength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub name: String,
    pub start: f64,
    pub end: f64,
    /// Percent; negative is downhill in the travel direction.
    pub grade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub name: String,
    pub arclength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLocation {
    pub segment_name: String,
    pub arclength: f64,
    pub lateral_offset: f64,
    /// Set when the nearest centerline point is a corridor end the position
    /// lies beyond.
    pub out_of_corridor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    centerline: Vec<Vec3>,
    cumulative: Vec<f64>,
    segments: Vec<RoadSegment>,
    intersections: Vec<Intersection>,
    pub travel_direction: TravelDirection,
}

fn planar_length(a: Vec3, b: Vec3) -> f64 {
    (b[0] - a[0]).hypot(b[2] - a[2])
}

impl RoadNetwork {
    pub fn new(centerline: Vec<Vec3>, segments: Vec<RoadSegment>, intersections: Vec<Intersection>) -> Result<Self> {
        if centerline.len() < 2 {
            return Err(Error::config("road network needs at least two centerline vertices"));
        }
        if centerline.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("road centerline has non-finite coordinates"));
        }
        let mut cumulative = vec![0.0];
        for w in centerline.windows(2) {
            let len = planar_length(w[0], w[1]);
            if len <= 0.0 {
                return Err(Error::config("centerline arclength must be strictly increasing"));
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        let total = *cumulative.last().unwrap();

        if segments.is_empty() {
            return Err(Error::config("road network has no segments"));
        }
        let mut expected = 0.0;
        for s in &segments {
            if (s.start - expected).abs() > TILE_TOLERANCE || s.end <= s.start {
                return Err(Error::config(format!(
                    "segment {} [{}, {}] does not continue the tiling at {expected}",
                    s.name, s.start, s.end
                )));
            }
            if !(GRADE_RANGE.0..=GRADE_RANGE.1).contains(&s.grade) {
                return Err(Error::config(format!("segment {} grade {} % out of range", s.name, s.grade)));
            }
            expected = s.end;
        }
        if (expected - total).abs() > 1e-3 {
            return Err(Error::config(format!(
                "segments end at {expected} m but the centerline is {total} m long"
            )));
        }
        for i in &intersections {
            if !(0.0..=total).contains(&i.arclength) {
                return Err(Error::config(format!("intersection {} lies off the corridor", i.name)));
            }
        }
        let mut names: Vec<&str> = intersections.iter().map(|i| i.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate intersection name"));
        }
        Ok(Self {
            centerline,
            cumulative,
            segments,
            intersections,
            travel_direction: TravelDirection::IncreasingArclength,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, ROAD_HEADER)) => {}
            Some((n, other)) => return Err(Error::format(n, format!("expected '{ROAD_HEADER}', got {other:?}"))),
            None => return Err(Error::config("road network file is empty")),
        }
        let num = |n: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(n, format!("invalid number {s:?}")))
        };
        let (mut vertices, mut segments, mut intersections) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match (f[0], f.len()) {
                ("V", 4) => vertices.push([num(n, f[1])?, num(n, f[2])?, num(n, f[3])?]),
                ("S", 5) => segments.push(RoadSegment {
                    name: f[1].to_string(),
                    start: num(n, f[2])?,
                    end: num(n, f[3])?,
                    grade: num(n, f[4])?,
                }),
                ("I", 3) => intersections.push(Intersection {
                    name: f[1].to_string(),
                    arclength: num(n, f[2])?,
                }),
                _ => return Err(Error::format(n, format!("unrecognized road line {line:?}"))),
            }
        }
        Self::new(vertices, segments, intersections)
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| Self::parse(&t))
            .map_err(|e| e.in_file(path))
    }

    pub fn corridor_fixture() -> Self {
        Self::parse(CORRIDOR_FIXTURE).expect("bundled corridor is valid")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{ROAD_HEADER}\n");
        for v in &self.centerline {
            out += &format!("V {} {} {}\n", v[0], v[1], v[2]);
        }
        for s in &self.segments {
            out += &format!("S {} {} {} {}\n", s.name, s.start, s.end, s.grade);
        }
        for i in &self.intersections {
            out += &format!("I {} {}\n", i.name, i.arclength);
        }
        out
    }

    pub fn centerline(&self) -> &[Vec3] {
        &self.centerline
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn intersection(&self, name: &str) -> Option<&Intersection> {
        self.intersections.iter().find(|i| i.name == name)
    }

    /// Segment containing `s`; the final segment includes its end.
    pub fn segment_at(&self, s: f64) -> Option<&RoadSegment> {
        let last = self.segments.len() - 1;
        self.segments
            .iter()
            .enumerate()
            .find(|(k, seg)| seg.start <= s && (s < seg.end || (*k == last && s <= seg.end + TILE_TOLERANCE)))
            .map(|(_, seg)| seg)
    }

    /// Intersection with the smallest |s − arclength| (earlier on ties).
    pub fn nearest_intersection(&self, s: f64) -> Option<&Intersection> {
        self.intersections
            .iter()
            .min_by(|a, b| (s - a.arclength).abs().total_cmp(&(s - b.arclength).abs()))
    }

    fn edge_at(&self, s: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= s);
        k.clamp(1, self.centerline.len() - 1) - 1
    }

    /// Unit travel direction and rightward normal of an edge, in (x, z).
    fn edge_frame(&self, k: usize) -> ([f64; 2], [f64; 2]) {
        let (a, b) = (self.centerline[k], self.centerline[k + 1]);
        let len = planar_length(a, b);
        let d = [(b[0] - a[0]) / len, (b[2] - a[2]) / len];
        (d, [d[1], -d[0]])
    }

    /// World point at arclength `s` (clamped to the corridor) displaced
    /// `lateral` meters to the right; elevation follows the centerline.
    pub fn point_at(&self, s: f64, lateral: f64) -> Vec3 {
        let s = s.clamp(0.0, self.length());
        let k = self.edge_at(s);
        let (a, b) = (self.centerline[k], self.centerline[k + 1]);
        let u = (s - self.cumulative[k]) / (self.cumulative[k + 1] - self.cumulative[k]);
        let (_, right) = self.edge_frame(k);
        [
            a[0] + u * (b[0] - a[0]) + lateral * right[0],
            a[1] + u * (b[1] - a[1]),
            a[2] + u * (b[2] - a[2]) + lateral * right[1],
        ]
    }

    /// Unit travel direction at arclength `s`, in the world frame.
    pub fn direction_at(&self, s: f64) -> Vec3 {
        let (d, _) = self.edge_frame(self.edge_at(s.clamp(0.0, self.length())));
        [d[0], 0.0, d[1]]
    }
}

pub fn locate(position: Vec3, network: &RoadNetwork) -> Result<SegmentLocation> {
    if network.centerline.len() < 2 || network.segments.is_empty() {
        return Err(Error::config("road network is empty"));
    }
    let (px, pz) = (position[0], position[2]);
    let edges = network.centerline.len() - 1;
    // (distance², edge, raw parameter)
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for k in 0..edges {
        let a = network.centerline[k];
        let len = network.cumulative[k + 1] - network.cumulative[k];
        let (d, _) = network.edge_frame(k);
        let raw = ((px - a[0]) * d[0] + (pz - a[2]) * d[1]) / len;
        let u = raw.clamp(0.0, 1.0);
        let fx = a[0] + u * len * d[0];
        let fz = a[2] + u * len * d[1];
        let dist2 = (px - fx).powi(2) + (pz - fz).powi(2);
        if dist2 < best.0 {
            best = (dist2, k, raw);
        }
    }
    let (_, k, raw) = best;
    let before_start = k == 0 && raw < 0.0;
    let after_end = k == edges - 1 && raw > 1.0;
    let u = raw.clamp(0.0, 1.0);
    let len = network.cumulative[k + 1] - network.cumulative[k];
    let arclength = network.cumulative[k] + u * len;
    let a = network.centerline[k];
    let (_, right) = network.edge_frame(k);
    let lateral_offset = (px - a[0]) * right[0] + (pz - a[2]) * right[1];
    let segment = network
        .segment_at(arclength)
        .or_else(|| network.segments.last())
        .expect("segments tile the corridor");
    Ok(SegmentLocation {
        segment_name: segment.name.clone(),
        arclength,
        lateral_offset,
        out_of_corridor: before_start || after_end,
    })
}

/// Arclength past the intersection: negative before it, positive after.
pub fn signed_distance_to_intersection(
    location: &SegmentLocation,
    intersection: &str,
    network: &RoadNetwork,
) -> Result<f64> {
    let i = network
        .intersection(intersection)
        .ok_or_else(|| Error::argument(format!("unknown intersection '{intersection}'")))?;
    Ok(location.arclength - i.arclength)
}

pub fn grade_at(location: &SegmentLocation, network: &RoadNetwork) -> Result<f64> {
    if location.out_of_corridor {
        return Err(Error::argument("location lies outside the corridor"));
    }
    network
        .segment_at(location.arclength)
        .map(|s| s.grade)
        .ok_or_else(|| Error::argument(format!("arclength {} outside the corridor", location.arclength)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> RoadNetwork {
        RoadNetwork::corridor_fixture()
    }

    #[test]
    fn fixture_shape() {
        let n = net();
        assert!((n.length() - 460.0).abs() < 1e-9);
        assert_eq!(n.segments().len(), 4);
        assert_eq!(n.intersections().len(), 3);
        // the elevation drop across seg1 matches its grade
        let drop = n.point_at(250.0, 0.0)[1] - n.point_at(120.0, 0.0)[1];
        assert!((drop / 130.0 * 100.0 + 4.0).abs() < 1e-9);
    }

    #[test]
    fn on_centerline_has_zero_offset() {
        let loc = locate([60.0, 10.0, 0.0], &net()).unwrap();
        assert_eq!(loc.segment_name, "seg0");
        assert!((loc.arclength - 60.0).abs() < 1e-12);
        assert_eq!(loc.lateral_offset, 0.0);
        assert!(!loc.out_of_corridor);
    }

    #[test]
    fn left_is_negative() {
        // eastbound (+x) in a y-up frame: left is +z
        let loc = locate([60.0, 10.0, 2.0], &net()).unwrap();
        assert!((loc.lateral_offset + 2.0).abs() < 1e-12);
    }

    #[test]
    fn beyond_end_is_clamped_and_flagged() {
        let n = net();
        let loc = locate([469.0, 4.8, -5.0], &n).unwrap();
        assert!(loc.out_of_corridor);
        assert!((loc.arclength - 460.0).abs() < 1e-9);
        assert!(grade_at(&loc, &n).is_err());
        let start = locate([-3.0, 10.0, 0.0], &n).unwrap();
        assert!(start.out_of_corridor && start.arclength == 0.0);
    }

    #[test]
    fn signed_distances() {
        let n = net();
        let before = locate(n.point_at(235.0, 0.0), &n).unwrap();
        let after = locate(n.point_at(255.0, 0.0), &n).unwrap();
        let at = locate(n.point_at(250.0, 0.0), &n).unwrap();
        assert!((signed_distance_to_intersection(&before, "int2", &n).unwrap() + 15.0).abs() < 1e-9);
        assert!((signed_distance_to_intersection(&after, "int2", &n).unwrap() - 5.0).abs() < 1e-9);
        assert!(signed_distance_to_intersection(&at, "int2", &n).unwrap().abs() < 1e-9);
        assert!(signed_distance_to_intersection(&at, "nope", &n).is_err());
    }

    #[test]
    fn grades() {
        let n = net();
        let downhill = locate(n.point_at(180.0, 1.0), &n).unwrap();
        assert_eq!(grade_at(&downhill, &n).unwrap(), -4.0);
        let flat = locate(n.point_at(300.0, 0.0), &n).unwrap();
        assert_eq!(grade_at(&flat, &n).unwrap(), 0.0);
    }

    #[test]
    fn parse_errors() {
        assert!(RoadNetwork::parse("").is_err());
        assert!(RoadNetwork::parse("orcl-road v2\n").is_err());
        assert!(RoadNetwork::parse("orcl-road v1\nV 0 0 0\nS a 0 1 0\n").is_err());
        let overlap = "orcl-road v1\nV 0 0 0\nV 10 0 0\nS a 0 6 0\nS b 5 10 0\n";
        assert!(RoadNetwork::parse(overlap).is_err());
        let steep = "orcl-road v1\nV 0 0 0\nV 10 0 0\nS a 0 10 25\n";
        assert!(RoadNetwork::parse(steep).is_err());
    }

    #[test]
    fn text_round_trip() {
        let n = net();
        assert_eq!(RoadNetwork::parse(&n.to_text()).unwrap(), n);
    }
}
