mod common;

use common::{arb_camera, camera, frustum_contains, grid, small_scene};
use proptest::prelude::*;
use viewsel_core::geometry::{combined_visibility, project_footprint, SceneConfig};
use viewsel_core::grid::Mask;

fn check_against_frustum(cam: &viewsel_core::geometry::CameraPose, g: &viewsel_core::grid::GroundGrid) -> usize {
    let fp = project_footprint(cam, g).unwrap();
    let mut checked = 0;
    for r in 0..g.height_cells {
        for c in 0..g.width_cells {
            let (inside, margin) = frustum_contains(cam, g.cell_center(r, c));
            if margin < 1e-9 {
                continue;
            }
            assert_eq!(*fp.mask.get(r, c), inside, "cell ({r}, {c})");
            checked += 1;
        }
    }
    assert_eq!(fp.area_cells, fp.mask.count());
    checked
}

#[test]
fn oblique_camera_matches_frustum_membership() {
    let g = grid(40, 40);
    let cam = camera("oblique", [10.0, -2.0, 6.0], 90.0, -30.0, 60.0, 45.0, 30.0);
    check_against_frustum(&cam, &g);
    let fp = project_footprint(&cam, &g).unwrap();
    assert!(fp.area_cells > 100);
    // Nothing behind the camera.
    assert!(!fp.mask.get(0, 0));
}

#[test]
fn mask_union_matches_cellwise_or() {
    let g = grid(20, 20);
    let cams = [
        camera("a", [2.0, 2.0, 4.0], 45.0, -40.0, 70.0, 50.0, 12.0),
        camera("b", [9.0, 1.0, 3.0], 120.0, -35.0, 60.0, 40.0, 9.0),
        camera("c", [5.0, 9.0, 5.0], -90.0, -50.0, 80.0, 60.0, 15.0),
    ];
    let fps: Vec<_> = cams.iter().map(|c| project_footprint(c, &g).unwrap()).collect();
    let union = combined_visibility(&fps, &g).unwrap();
    for i in 0..g.n_cells() {
        let expect = fps.iter().any(|f| f.mask.data()[i]);
        assert_eq!(union.data()[i], expect);
    }
}

#[test]
fn generated_scene_survives_a_json_round_trip() {
    let scene = small_scene(11, 8, 50);
    let text = serde_json::to_string(&scene.to_config()).unwrap();
    let back: SceneConfig = serde_json::from_str(&text).unwrap();
    let reloaded = back.into_scene().unwrap();
    reloaded.validate().unwrap();
    assert_eq!(reloaded.cameras, scene.cameras);
    assert_eq!(reloaded.footprints, scene.footprints);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn footprint_matches_frustum_oracle(cam in arb_camera()) {
        check_against_frustum(&cam, &grid(30, 30));
    }

    #[test]
    fn longer_range_never_loses_cells(cam in arb_camera(), extra in 0.0..20.0f64) {
        let g = grid(30, 30);
        let near = project_footprint(&cam, &g).unwrap();
        let mut far_cam = cam.clone();
        far_cam.max_range_m += extra;
        let far = project_footprint(&far_cam, &g).unwrap();
        prop_assert!(near.mask.is_subset_of(&far.mask));
    }

    #[test]
    fn projection_is_pure(cam in arb_camera()) {
        let g = grid(30, 30);
        prop_assert_eq!(project_footprint(&cam, &g).unwrap(), project_footprint(&cam, &g).unwrap());
    }

    #[test]
    fn union_grows_with_supersets_and_is_subadditive(
        cams in prop::collection::vec(arb_camera(), 1..6),
        split in 0usize..6,
    ) {
        let g = grid(30, 30);
        let fps: Vec<_> = cams.iter().map(|c| project_footprint(c, &g).unwrap()).collect();
        let k = split.min(fps.len());
        let sub = combined_visibility(&fps[..k], &g).unwrap();
        let all = combined_visibility(&fps, &g).unwrap();
        prop_assert!(sub.is_subset_of(&all));

        let total: usize = fps.iter().map(|f| f.area_cells).sum();
        let disjoint = (0..fps.len()).all(|i| {
            (i + 1..fps.len()).all(|j| fps[i].mask.and(&fps[j].mask).unwrap().count() == 0)
        });
        prop_assert!(all.count() <= total);
        prop_assert_eq!(all.count() == total, disjoint);
    }

    #[test]
    fn scene_visibility_is_the_union_of_its_footprints(seed in 0u64..1000, picks in prop::collection::vec(0usize..6, 0..6)) {
        let scene = small_scene(seed, 6, 30);
        let mut expect: Mask = scene.grid.mask(false);
        for &i in &picks {
            expect.or_assign(&scene.footprints[i].mask).unwrap();
        }
        prop_assert_eq!(scene.visibility(&picks), expect);
    }
}
