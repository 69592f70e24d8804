mod oracle;

use std::collections::BTreeMap;

use orclsim_core::gaze::{
    entropy_of, project_direction, stationary_entropy, transition_entropy, unproject, BinId, CameraModel, Eye,
    EntropyWindow,
};
use proptest::prelude::*;

fn bins() -> impl Strategy<Value = Vec<BinId>> {
    prop::collection::vec(
        prop_oneof![
            9 => (0i64..6, 0i64..4).prop_map(|(col, row)| BinId::Cell { col, row }),
            1 => Just(BinId::OffScreen),
        ],
        0..300,
    )
}

proptest! {
    #[test]
    fn sge_within_bounds(seq in bins()) {
        let w = EntropyWindow::from_sequence(&seq, 5.0, false);
        let sge = stationary_entropy(&w);
        prop_assert!(sge >= 0.0);
        if w.occupied_bins() > 0 {
            prop_assert!(sge <= (w.occupied_bins() as f64).log2() + 1e-12);
        }
        let counts: Vec<f64> = w.bin_occupancy.values().map(|&c| c as f64).collect();
        if !counts.is_empty() {
            prop_assert!((sge - oracle::entropy_bits(&counts)).abs() < 1e-12);
        }
    }

    /// Conditional entropy never exceeds the entropy of what it predicts.
    #[test]
    fn gte_bounded_by_destination_entropy(seq in bins(), exclude in any::<bool>()) {
        let w = EntropyWindow::from_sequence(&seq, 5.0, exclude);
        let gte = transition_entropy(&w);
        prop_assert!(gte >= 0.0);
        prop_assert!(gte <= entropy_of(w.destination_marginal().values()) + 1e-12);
    }

    #[test]
    fn gte_matches_joint_minus_origin(seq in bins()) {
        // H(D|O) = H(O,D) - H(O)
        let w = EntropyWindow::from_sequence(&seq, 5.0, false);
        let joint: Vec<f64> = w.transition_counts.values().map(|&c| c as f64).collect();
        if joint.is_empty() {
            prop_assert_eq!(transition_entropy(&w), 0.0);
        } else {
            let mut rows: BTreeMap<BinId, f64> = BTreeMap::new();
            for (&(from, _), &c) in &w.transition_counts {
                *rows.entry(from).or_insert(0.0) += c as f64;
            }
            let rows: Vec<f64> = rows.into_values().collect();
            let expected = oracle::entropy_bits(&joint) - oracle::entropy_bits(&rows);
            prop_assert!((transition_entropy(&w) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn relabeling_preserves_entropies(seq in bins(), shift in 1i64..50) {
        let relabel = |b: &BinId| match *b {
            BinId::Cell { col, row } => BinId::Cell { col: row + shift, row: -col },
            BinId::OffScreen => BinId::Cell { col: -1000, row: -1000 },
        };
        let a = EntropyWindow::from_sequence(&seq, 5.0, false);
        let moved: Vec<BinId> = seq.iter().map(relabel).collect();
        let b = EntropyWindow::from_sequence(&moved, 5.0, false);
        prop_assert!((stationary_entropy(&a) - stationary_entropy(&b)).abs() < 1e-12);
        prop_assert!((transition_entropy(&a) - transition_entropy(&b)).abs() < 1e-12);
    }

    #[test]
    fn projection_round_trip(x in 0.0f64..1920.0, y in 0.0f64..1080.0) {
        let cam = CameraModel::default();
        let p = project_direction(unproject(x, y, &cam), &cam, Eye::Cyclopean);
        prop_assert!(!p.off_screen);
        prop_assert!((p.x - x).abs() < 1e-6 && (p.y - y).abs() < 1e-6);
    }
}
