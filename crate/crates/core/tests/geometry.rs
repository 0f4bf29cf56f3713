use gunloc_core::geo::MIRROR_SUFFIX;
use gunloc_core::{project_to_plane, reflect_through_plane, Position, PulseSet, SensorObservation};
use proptest::prelude::*;

fn arb_set() -> impl Strategy<Value = PulseSet> {
    prop::collection::vec((-5e3..5e3f64, -5e3..5e3f64, -100.0..300.0f64, 0.0..10.0f64), 1..12).prop_map(|rows| {
        let obs = rows
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, z, t))| SensorObservation::new(format!("s{i}"), Position::new(x, y, z), t))
            .collect();
        PulseSet::new("p", obs).unwrap()
    })
}

proptest! {
    #[test]
    fn projection_is_idempotent(set in arb_set()) {
        let once = project_to_plane(&set);
        prop_assert_eq!(&project_to_plane(&once), &once);
        prop_assert!(once.observations().iter().all(|o| o.position.z == 0.0));
        for (a, b) in once.observations().iter().zip(set.observations()) {
            prop_assert_eq!(a.arrival_time, b.arrival_time);
            prop_assert_eq!((a.position.x, a.position.y), (b.position.x, b.position.y));
        }
    }

    #[test]
    fn reflection_is_an_involution(set in arb_set(), z_star in -50.0..50.0f64) {
        let doubled = reflect_through_plane(&set, z_star).unwrap();
        prop_assert_eq!(doubled.len(), 2 * set.len());
        for o in set.observations() {
            let mirror_id = format!("{}{}", o.sensor_id, MIRROR_SUFFIX);
            let mirror = doubled.observations().iter().find(|m| m.sensor_id == mirror_id).unwrap();
            prop_assert_eq!(mirror.arrival_time, o.arrival_time);
            prop_assert_eq!((mirror.position.x, mirror.position.y), (o.position.x, o.position.y));
            // Reflecting the mirror image again returns the original elevation.
            let back = 2.0 * z_star - mirror.position.z;
            prop_assert!((back - o.position.z).abs() <= 1e-9 * (1.0 + o.position.z.abs()));
            prop_assert!(((mirror.position.z + o.position.z) / 2.0 - z_star).abs() <= 1e-9 * (1.0 + z_star.abs()));
        }
    }
}
