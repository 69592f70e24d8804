use orclsim_core::ingest::{
    parse_annotations, parse_gaze_log, parse_pose_log, parse_watch_log, write_annotations,
    write_gaze_log, write_pose_log, write_watch_log,
};
use orclsim_core::model::{EyeSample, GazeSample, PoseSample, Sample, SampleStream, StreamKind};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/");
    std::fs::read_to_string(format!("{path}{name}")).unwrap()
}

/// Lines with whitespace stripped, order-insensitive.
fn canonical(text: &str) -> Vec<String> {
    let mut lines: Vec<String> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<String>())
        .filter(|l| !l.is_empty())
        .collect();
    lines.sort();
    lines
}

#[test]
fn golden_pose_round_trip() {
    let text = fixture("pose.csv");
    let parsed = parse_pose_log(&text, None).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    assert_eq!(parsed.value.pose.len(), 3);
    assert_eq!(parsed.value.vehicle.len(), 2);
    assert_eq!(canonical(&write_pose_log(&parsed.value)), canonical(&text));
}

#[test]
fn golden_gaze_round_trip() {
    let text = fixture("gaze.csv");
    let parsed = parse_gaze_log(&text, None).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    assert_eq!(parsed.value.samples[3].payload.validity(), (false, false));
    assert_eq!(canonical(&write_gaze_log(&parsed.value)), canonical(&text));
}

#[test]
fn golden_watch_round_trip() {
    let text = fixture("watch.log");
    let parsed = parse_watch_log(&text).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    assert_eq!(parsed.value.heart_rate.len(), 2);
    assert_eq!(parsed.value.motion.len(), 3);
    assert_eq!(canonical(&write_watch_log(&parsed.value)), canonical(&text));
}

#[test]
fn golden_annotations_round_trip() {
    let text = fixture("annotations.csv");
    let parsed = parse_annotations(&text).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    assert_eq!(parsed.value[2].payload.label, "waits, then starts crossing");
    assert_eq!(canonical(&write_annotations(&parsed.value)), canonical(&text));
}

fn unit() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0).prop_map(|(x, y, z)| {
        let n = (x * x + y * y + z * z).sqrt();
        [x / n, y / n, z / n]
    })
}

fn pose_sample() -> impl Strategy<Value = Sample<PoseSample>> {
    (0.0f64..1e4, prop::array::uniform3(-500.0f64..500.0), unit(), 0.0f64..=1.0, 0.0f64..20.0).prop_map(
        |(t, head_position, head_forward, controller_trigger, speed)| {
            Sample::new(
                t,
                PoseSample {
                    head_position,
                    head_forward,
                    controller_trigger,
                    speed,
                },
            )
        },
    )
}

fn eye() -> impl Strategy<Value = EyeSample> {
    prop_oneof![
        Just(EyeSample::invalid()),
        (unit(), 1.5f64..8.0).prop_map(|(direction, pupil_diameter)| EyeSample {
            direction,
            pupil_diameter,
            valid: true
        }),
    ]
}

fn gaze_sample() -> impl Strategy<Value = Sample<GazeSample>> {
    (0.0f64..1e4, prop::array::uniform3(-0.1f64..0.1), eye(), eye())
        .prop_map(|(t, origin, left, right)| Sample::new(t, GazeSample { origin, left, right }))
}

/// Valid rows mixed with malformed ones.
fn noisy_pose_line() -> impl Strategy<Value = String> {
    prop_oneof![
        pose_sample().prop_map(|s| {
            let p = s.payload;
            format!(
                "{},{},{},{},{},{},{},{},{}",
                s.t.0,
                p.head_position[0],
                p.head_position[1],
                p.head_position[2],
                p.head_forward[0],
                p.head_forward[1],
                p.head_forward[2],
                p.controller_trigger,
                p.speed
            )
        }),
        "[a-z0-9,.]{1,40}".prop_filter("not blank", |s| !s.trim().is_empty()
            && !s.starts_with('#')),
        Just("1,0,0,0,0,0,2,0,1".to_string()),
        Just("1,0,0,0,0,0,1,7,1".to_string()),
        Just("1,0,0".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pose_round_trip(samples in prop::collection::vec(pose_sample(), 0..40)) {
        let pose = SampleStream::new(StreamKind::Pose, 30.0, samples).unwrap();
        let log = orclsim_core::ingest::PoseLog {
            pose: pose.clone(),
            vehicle: SampleStream::empty(StreamKind::Vehicle),
        };
        let parsed = parse_pose_log(&write_pose_log(&log), None).unwrap();
        prop_assert!(parsed.errors.is_empty());
        prop_assert_eq!(parsed.value.pose.samples, pose.samples);
    }

    #[test]
    fn gaze_round_trip(samples in prop::collection::vec(gaze_sample(), 0..40)) {
        let gaze = SampleStream::new(StreamKind::Gaze, 120.0, samples).unwrap();
        let parsed = parse_gaze_log(&write_gaze_log(&gaze), None).unwrap();
        prop_assert!(parsed.errors.is_empty());
        prop_assert_eq!(parsed.value.len(), gaze.len());
        for (a, b) in parsed.value.samples.iter().zip(&gaze.samples) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.payload.validity(), b.payload.validity());
            if b.payload.left.valid {
                prop_assert_eq!(&a.payload.left, &b.payload.left);
            }
            if b.payload.right.valid {
                prop_assert_eq!(&a.payload.right, &b.payload.right);
            }
        }
    }

    #[test]
    fn pose_rows_are_accounted(lines in prop::collection::vec(noisy_pose_line(), 0..60)) {
        let text = format!("t,x,y,z,fx,fy,fz,trigger,speed\n{}\n", lines.join("\n"));
        let parsed = parse_pose_log(&text, None).unwrap();
        prop_assert_eq!(parsed.total_rows, lines.len());
        prop_assert_eq!(parsed.accepted() + parsed.errors.len(), parsed.total_rows);
        prop_assert_eq!(parsed.value.pose.len(), parsed.accepted());
    }

    #[test]
    fn watch_rows_are_accounted(lines in prop::collection::vec(
        prop_oneof![
            (0.0f64..100.0, 20.0f64..300.0).prop_map(|(t, b)| format!("HR,{t},{b}")),
            (0.0f64..100.0).prop_map(|t| format!("ACC,{t},0,1,2")),
            "[A-Z]{2,3},[0-9.]{1,5}(,[0-9.-]{1,4}){0,4}",
        ],
        0..60,
    )) {
        let parsed = parse_watch_log(&lines.join("\n")).unwrap();
        prop_assert_eq!(parsed.total_rows, lines.len());
        prop_assert_eq!(parsed.accepted() + parsed.errors.len(), parsed.total_rows);
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,400}") {
        for r in [
            parse_pose_log(&text, None).map(|p| p.accepted() + p.errors.len() == p.total_rows),
            parse_gaze_log(&text, None).map(|p| p.accepted() + p.errors.len() == p.total_rows),
            parse_watch_log(&text).map(|p| p.accepted() + p.errors.len() == p.total_rows),
            parse_annotations(&text).map(|p| p.accepted() + p.errors.len() == p.total_rows),
        ] {
            if let Ok(balanced) = r {
                prop_assert!(balanced);
            }
        }
    }
}
