use orclsim_core::spatial::{locate, signed_distance_to_intersection, RoadNetwork};
use proptest::prelude::*;

/// Arclengths at least `margin` away from every centerline vertex.
fn interior_arclength(net: &RoadNetwork, margin: f64) -> impl Strategy<Value = f64> {
    let mut vertices = vec![0.0];
    for w in net.centerline().windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][2] - w[0][2]);
        vertices.push(vertices.last().unwrap() + len);
    }
    (0.0..net.length()).prop_filter("near a vertex", move |s| {
        vertices.iter().all(|v| (s - v).abs() >= margin)
    })
}

proptest! {
    #[test]
    fn locate_recovers_construction(
        (s, d) in (-3.0f64..3.0).prop_flat_map(|d| {
            let net = RoadNetwork::corridor_fixture();
            (interior_arclength(&net, 3.0 * d.abs() + 0.5), Just(d))
        })
    ) {
        let net = RoadNetwork::corridor_fixture();
        let loc = locate(net.point_at(s, d), &net).unwrap();
        prop_assert!((loc.arclength - s).abs() < 1e-6, "{} vs {}", loc.arclength, s);
        prop_assert!((loc.lateral_offset - d).abs() < 1e-6);
        prop_assert!(!loc.out_of_corridor);
    }

    #[test]
    fn signed_distance_is_monotone(mut arcs in prop::collection::vec(0.0f64..460.0, 2..50)) {
        let net = RoadNetwork::corridor_fixture();
        arcs.sort_by(f64::total_cmp);
        for name in ["int1", "int2", "int3"] {
            let mut prev = f64::NEG_INFINITY;
            for &s in &arcs {
                let loc = locate(net.point_at(s, 0.0), &net).unwrap();
                let sd = signed_distance_to_intersection(&loc, name, &net).unwrap();
                prop_assert!(sd >= prev - 1e-9);
                prev = sd;
            }
        }
    }
}
