mod common;

use common::{grid, small_scene, trace_for};
use proptest::prelude::*;
use viewsel_core::crowd::{
    cover_rate, generate_crowd_trace, rasterize_density, read_trace_csv, visible_persons, write_trace_csv, CrowdFrame,
    Person,
};
use viewsel_core::grid::Mask;

#[test]
fn uniform_crowd_fills_quadrants_evenly() {
    let g = grid(200, 200);
    let frames = generate_crowd_trace(&g, 1, (1000, 1000), 0.0, 42).unwrap();
    let (lo, hi) = g.extent();
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut quadrants = [0usize; 4];
    for p in &frames[0].persons {
        let q = (p.position[0] >= mid[0]) as usize + 2 * (p.position[1] >= mid[1]) as usize;
        quadrants[q] += 1;
    }
    let sigma = (1000.0f64 * 0.25 * 0.75).sqrt();
    for q in quadrants {
        assert!((q as f64 - 250.0).abs() <= 5.0 * sigma, "{quadrants:?}");
    }
}

#[test]
fn interior_persons_keep_full_mass_under_a_wide_mask() {
    let g = grid(60, 60);
    let persons: Vec<Person> = (0..10).map(|i| Person::at(8.0 + i as f64 * 1.5, 15.0)).collect();
    let frame = CrowdFrame { frame_id: 0, persons };
    let mut mask = g.mask(false);
    // Rows and columns well beyond 4 sigma from every person.
    for r in 10..50 {
        for c in 5..55 {
            mask.set(r, c, true);
        }
    }
    let d = rasterize_density(&frame, &g, 1.0, Some(&mask)).unwrap();
    assert!((d.sum() - 10.0).abs() < 1e-6);
}

fn arb_frame() -> impl Strategy<Value = CrowdFrame> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 0..40).prop_map(|pts| CrowdFrame {
        frame_id: 7,
        persons: pts.into_iter().map(|(x, y)| Person::at(x, y)).collect(),
    })
}

fn arb_mask() -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), 400).prop_map(|v| Mask::from_vec(20, 20, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn visible_persons_match_cell_lookup(frame in arb_frame(), mask in arb_mask()) {
        let g = grid(20, 20);
        let got = visible_persons(&frame, &mask, &g).unwrap();
        let expect: Vec<Person> = frame
            .persons
            .iter()
            .filter(|p| {
                let c = ((p.position[0] / 0.5).floor() as usize).min(19);
                let r = ((p.position[1] / 0.5).floor() as usize).min(19);
                *mask.get(r, c)
            })
            .copied()
            .collect();
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn union_visibility_keeps_everyone_already_seen(frame in arb_frame(), a in arb_mask(), b in arb_mask()) {
        let g = grid(20, 20);
        let seen_a = visible_persons(&frame, &a, &g).unwrap();
        let seen_ab = visible_persons(&frame, &a.or(&b).unwrap(), &g).unwrap();
        prop_assert!(seen_a.iter().all(|p| seen_ab.contains(p)));
        if !frame.persons.is_empty() {
            let frames = [frame.clone()];
            prop_assert!(cover_rate(&frames, &a, &g).unwrap() <= cover_rate(&frames, &a.or(&b).unwrap(), &g).unwrap());
        }
    }

    #[test]
    fn masking_never_adds_mass(frame in arb_frame(), mask in arb_mask(), sigma in 0.3..3.0f64) {
        let g = grid(20, 20);
        let full = rasterize_density(&frame, &g, sigma, None).unwrap();
        let masked = rasterize_density(&frame, &g, sigma, Some(&mask)).unwrap();
        prop_assert!(masked.sum() <= full.sum() + 1e-9);
        for (i, &v) in masked.values().data().iter().enumerate() {
            if !mask.data()[i] {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn cover_rate_grows_with_cameras(seed in 0u64..500, order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let scene = small_scene(seed, 6, 30);
        let trace = trace_for(&scene, 3, seed);
        let mut last = 0.0;
        for k in 1..=order.len() {
            let cr = cover_rate(&trace, &scene.visibility(&order[..k]), &scene.grid).unwrap();
            prop_assert!(cr >= last);
            last = cr;
        }
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let g = grid(40, 40);
    let frames = generate_crowd_trace(&g, 5, (0, 30), 0.5, 9).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&frames, &mut buf).unwrap();
    assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), frames);
}
