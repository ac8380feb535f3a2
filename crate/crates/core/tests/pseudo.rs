mod common;

use common::{small_scene, trace_for};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewsel_core::crowd::{rasterize_density, visible_persons, CrowdFrame};
use viewsel_core::pseudo::{make_modeltrain_pair, make_training_batch, make_viewsel_pair, BatchRatio, PairStage, TrainingPair};
use viewsel_core::selection::{random_select, RandomMode};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pairs_honour_their_mask_contracts(seed in any::<u64>(), n in 4usize..9, k_pick in 1usize..4) {
        let scene = small_scene(seed % 200, n, 30);
        let trace = trace_for(&scene, 2, seed);
        let k = k_pick.min(n / 2);
        let state = random_select(&scene, k, seed, RandomMode::AtOnce).unwrap();
        let selected = state.selected_indices(&scene).unwrap();
        let hv = scene.visibility(&selected);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        for frame in &trace {
            let vs = make_viewsel_pair(&state, &scene, frame, &mut rng, 1.0).unwrap();
            prop_assert_eq!(vs.stage, PairStage::ViewSel);
            prop_assert_eq!(vs.input_view_ids.len(), k + 1);
            prop_assert_eq!(&vs.input_view_ids[..k], &state.selected[..]);
            prop_assert!(!state.selected.contains(&vs.input_view_ids[k]));
            prop_assert_eq!(&vs.loss_mask, &hv);

            let mt = make_modeltrain_pair(&state, &scene, frame, &mut rng, 1.0).unwrap();
            prop_assert_eq!(mt.input_view_ids.len(), k);
            let inside = mt.input_view_ids.iter().filter(|id| state.selected.contains(id)).count();
            prop_assert_eq!(inside, 1);
            let inputs: Vec<usize> = mt.input_view_ids.iter().map(|id| scene.camera_index(id).unwrap()).collect();
            let union = scene.visibility(&inputs);
            for i in 0..scene.grid.n_cells() {
                prop_assert_eq!(mt.loss_mask.data()[i], hv.data()[i] && union.data()[i]);
            }

            for pair in [&vs, &mt] {
                for (i, &v) in pair.gt_density.values().data().iter().enumerate() {
                    if !pair.loss_mask.data()[i] {
                        prop_assert_eq!(v, 0.0);
                    }
                }
                let seen = CrowdFrame {
                    frame_id: frame.frame_id,
                    persons: visible_persons(frame, &hv, &scene.grid).unwrap(),
                };
                let expect = rasterize_density(&seen, &scene.grid, 1.0, Some(&pair.loss_mask)).unwrap();
                prop_assert_eq!(&pair.gt_density, &expect);
            }
        }
    }
}

#[test]
fn batches_are_reproducible_and_follow_the_ratio() {
    let scene = small_scene(7, 8, 40);
    let trace = trace_for(&scene, 6, 8);
    let state = random_select(&scene, 3, 1, RandomMode::AtOnce).unwrap();
    let ratio = BatchRatio { real: 2, pseudo: 1 };
    let make = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        make_training_batch(&state, &scene, &trace, &mut rng, ratio, PairStage::ModelTrain, 1.0).unwrap()
    };
    let a = make(3);
    assert_eq!(a, make(3));
    let real = a.iter().filter(|p| !p.is_pseudo()).count();
    let pseudo = a.iter().filter(|p| p.is_pseudo()).count();
    assert_eq!((real, pseudo), (6, 3));
    assert!(matches!(a[0], TrainingPair::Real(_)));
    assert!(matches!(a[2], TrainingPair::Pseudo(_)));
}
