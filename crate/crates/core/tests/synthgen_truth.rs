//! Generated sessions against their own ground-truth manifests.

mod oracle;

use orclsim_core::bcp::{bcp_detect, extract_change_events, BcpConfig};
use orclsim_core::gaze::{rolling_entropy, CameraModel, EntropyParams};
use orclsim_core::ingest::load_session;
use orclsim_core::spatial::RoadNetwork;
use orclsim_core::synthgen::{
    fit_empirical_cdf, generate_session, sample_headways, write_session, Location, ScanEpisode, Scenario, ShiftSpec,
    DEFAULT_HEADWAYS, DEFAULT_SCENARIO,
};
use proptest::prelude::*;

fn quiet(mut s: Scenario) -> Scenario {
    s.hr_noise = 0.0;
    s.gaze_jitter = 0.0;
    s.timestamp_jitter = 0.0;
    s
}

#[test]
fn headway_draws_follow_source_cdf() {
    let cdf = fit_empirical_cdf(&DEFAULT_HEADWAYS).unwrap();
    let draws = sample_headways(&cdf, 10_000, 2024);
    let d = oracle::ks_statistic(&draws, &cdf.support, &cdf.cumulative);
    assert!(d <= 0.02, "KS {d}");
}

proptest! {
    #[test]
    fn draws_are_a_sub_multiset_of_support(
        gaps in prop::collection::vec(0.1f64..30.0, 1..20),
        n in 0usize..200,
        seed in any::<u64>(),
    ) {
        let cdf = fit_empirical_cdf(&gaps).unwrap();
        prop_assert!(cdf.cumulative.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*cdf.cumulative.last().unwrap(), 1.0);
        let draws = sample_headways(&cdf, n, seed);
        prop_assert_eq!(draws.len(), n);
        prop_assert!(draws.iter().all(|d| gaps.contains(d)));
    }
}

#[test]
fn hr_shift_changes_level_by_delta() {
    let net = RoadNetwork::corridor_fixture();
    let s = Scenario {
        hr_shifts: vec![ShiftSpec {
            location: Location::Intersection {
                name: "int2".into(),
                offset: -15.0,
            },
            delta: 25.0,
        }],
        ..Default::default()
    };
    let g = generate_session(&s, &net, 3).unwrap();
    let tau = g.manifest.hr_shifts[0].timestamp;
    assert!((g.manifest.hr_shifts[0].arclength - 235.0).abs() < 1e-9);
    let hr = &g.recording.streams.heart_rate.as_ref().unwrap().samples;
    let mean = |f: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = hr.iter().filter(|x| f(x.t.0)).map(|x| x.payload.bpm).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let jump = mean(&|t| t >= tau) - mean(&|t| t < tau);
    // σ = 1.5 with ~80 samples either side
    assert!((jump - 25.0).abs() < 1.5, "{jump}");
}

#[test]
fn injected_shifts_are_recovered() {
    let net = RoadNetwork::corridor_fixture();
    let s = quiet(Scenario::parse(DEFAULT_SCENARIO).unwrap());
    let g = generate_session(&s, &net, 11).unwrap();
    let hr = g.recording.streams.heart_rate.as_ref().unwrap();
    let series: Vec<f64> = hr.samples.iter().map(|x| x.payload.bpm).collect();
    let result = bcp_detect(&series, &BcpConfig::default()).unwrap();
    let found = extract_change_events(&result, 0.5, 3);
    for shift in &g.manifest.hr_shifts {
        // change between samples k-1 and k, k the first sample at or after the shift
        let k = hr.lower_bound(shift.timestamp) as i64;
        assert!(
            found.iter().any(|&i| (i as i64 + 1 - k).abs() <= 2),
            "shift at {} not found in {found:?}",
            shift.timestamp
        );
    }
}

#[test]
fn scan_episode_raises_sge() {
    let net = RoadNetwork::corridor_fixture();
    for seed in 0..5 {
        let s = quiet(Scenario {
            duration: Some(40.0),
            scan_episodes: vec![ScanEpisode {
                start: 20.0,
                duration: 5.0,
                spread: 3,
            }],
            ..Default::default()
        });
        let g = generate_session(&s, &net, seed).unwrap();
        let series = rolling_entropy(
            g.recording.streams.gaze.as_ref().unwrap(),
            &CameraModel::default(),
            &EntropyParams::default(),
            &BcpConfig::default().with_seed(seed),
        )
        .unwrap();
        let at = |t: f64| {
            let k = series.timestamps.iter().position(|x| (x.0 - t).abs() < 1e-6).unwrap();
            series.sge[k].unwrap()
        };
        let baseline = at(15.0);
        assert!(at(25.0) > baseline, "seed {seed}: {} vs {baseline}", at(25.0));
    }
}

#[test]
fn written_session_parses_unchanged() {
    let net = RoadNetwork::corridor_fixture();
    let s = Scenario {
        duration: Some(30.0),
        vehicles: 4,
        timestamp_jitter: 0.002,
        watch_epoch: 1_618_000_000.0,
        scan_episodes: vec![ScanEpisode {
            start: 5.0,
            duration: 3.0,
            spread: 2,
        }],
        ..Default::default()
    };
    let g = generate_session(&s, &net, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let descriptor = write_session(&g, dir.path()).unwrap();
    let loaded = load_session(&descriptor).unwrap();
    assert!(loaded.files.iter().all(|f| f.errors.is_empty()));
    let (a, b) = (&g.recording.streams, &loaded.recording.streams);
    // nominal rates are re-inferred from the jittered timestamps
    assert_eq!(a.pose.as_ref().unwrap().samples, b.pose.as_ref().unwrap().samples);
    assert_eq!(a.gaze.as_ref().unwrap().samples, b.gaze.as_ref().unwrap().samples);
    assert_eq!(a.vehicle.as_ref().unwrap().samples, b.vehicle.as_ref().unwrap().samples);
    assert_eq!(a.annotation.as_ref().unwrap().samples, b.annotation.as_ref().unwrap().samples);
    let (ha, hb) = (a.heart_rate.as_ref().unwrap(), b.heart_rate.as_ref().unwrap());
    assert_eq!(ha.len(), hb.len());
    for (x, y) in ha.samples.iter().zip(&hb.samples) {
        assert!((x.t.0 - y.t.0).abs() < 1e-6);
        assert_eq!(x.payload, y.payload);
    }
    assert_eq!(a.motion.as_ref().unwrap().len(), b.motion.as_ref().unwrap().len());
    assert_eq!(loaded.recording.participant_id, g.recording.participant_id);
}

#[test]
fn same_seed_same_files() {
    let net = RoadNetwork::corridor_fixture();
    let s = Scenario {
        duration: Some(20.0),
        vehicles: 3,
        ..Scenario::parse(DEFAULT_SCENARIO).unwrap()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_session(&generate_session(&s, &net, 9).unwrap(), d1.path()).unwrap();
    write_session(&generate_session(&s, &net, 9).unwrap(), d2.path()).unwrap();
    for f in ["pose.csv", "gaze.csv", "watch.log", "annotations.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(d1.path().join(f)).unwrap(),
            std::fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn zero_duration_writes_empty_valid_logs() {
    let net = RoadNetwork::corridor_fixture();
    let s = Scenario {
        duration: Some(0.0),
        watch_epoch: 1000.0,
        ..Default::default()
    };
    let g = generate_session(&s, &net, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_session(&write_session(&g, dir.path()).unwrap()).unwrap();
    assert!(loaded.recording.streams.heart_rate.unwrap().is_empty());
    assert!(loaded.recording.streams.gaze.unwrap().is_empty());
}
