mod common;

use common::{small_scene, trace_for};
use proptest::prelude::*;
use viewsel_core::crowd::{CrowdFrame, Person};
use viewsel_core::geometry::Scene;
use viewsel_core::predictor::{calibrate, noisy_predict, oracle_predict, PredictorConfig};
use viewsel_core::scenegen::{generate_scene, SceneGenParams};

fn empty_scene(cells: usize) -> Scene {
    // Any single camera will do; the tests pass visibility explicitly.
    let p = SceneGenParams {
        n_cameras: 1,
        grid_h: cells,
        grid_w: cells,
        seed: 1,
        ..Default::default()
    };
    generate_scene("p", &p).unwrap()
}

#[test]
fn misses_follow_a_binomial_count() {
    let scene = empty_scene(100);
    let persons = (0..1000)
        .map(|i| Person::at(1.0 + (i % 40) as f64 * 1.2, 1.0 + (i / 40) as f64 * 1.8))
        .collect();
    let frame = CrowdFrame { frame_id: 3, persons };
    let cfg = PredictorConfig {
        miss_rate: 0.2,
        position_jitter_m: 0.0,
        count_noise_rel: 0.0,
        seed: 77,
        ..Default::default()
    };
    assert_eq!(cfg.calibration.quality, 0.0);
    let full = scene.grid.mask(true);
    let sum = noisy_predict(&frame, &full, &scene, &cfg).unwrap().sum();
    let sigma = (1000.0f64 * 0.2 * 0.8).sqrt();
    assert!((sum - 800.0).abs() <= 5.0 * sigma, "sum {sum}");
}

#[test]
fn quality_follows_the_closed_form_curve() {
    let cfg = PredictorConfig {
        q_scale: 50.0,
        ..Default::default()
    };
    let q = calibrate(&cfg, 50).calibration.quality;
    assert!((q - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    assert!((q - 0.6321).abs() < 1e-4);
}

fn arb_config() -> impl Strategy<Value = PredictorConfig> {
    (0.0..0.9f64, 0.0..3.0f64, 0.0..0.5f64, any::<u64>(), 0u64..400).prop_map(|(miss, jitter, noise, seed, labeled)| {
        calibrate(
            &PredictorConfig {
                miss_rate: miss,
                position_jitter_m: jitter,
                count_noise_rel: noise,
                seed,
                ..Default::default()
            },
            labeled,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn predictions_stay_inside_visibility_and_bounded(cfg in arb_config(), seed in 0u64..200, pick in 0usize..5) {
        let scene = small_scene(seed, 5, 30);
        let trace = trace_for(&scene, 2, seed);
        let vis = scene.visibility(&[pick]);
        for frame in &trace {
            let oracle = oracle_predict(frame, &vis, &scene, cfg.kernel_sigma_cells).unwrap();
            let noisy = noisy_predict(frame, &vis, &scene, &cfg).unwrap();
            for (i, (&o, &n)) in oracle.values().data().iter().zip(noisy.values().data()).enumerate() {
                if !vis.data()[i] {
                    prop_assert_eq!(o, 0.0);
                    prop_assert_eq!(n, 0.0);
                }
            }
            let bound = frame.persons.len() as f64 * (1.0 + cfg.count_noise_rel);
            prop_assert!(noisy.sum() <= bound + 1e-9);
            let again = noisy_predict(frame, &vis, &scene, &cfg).unwrap();
            prop_assert_eq!(noisy, again);
        }
    }

    #[test]
    fn more_labels_never_lower_quality(cfg in arb_config(), a in 0u64..500, b in 0u64..500) {
        let once = calibrate(&cfg, a);
        let twice = calibrate(&once, b);
        prop_assert!(once.calibration.quality >= cfg.calibration.quality);
        prop_assert!(twice.calibration.quality >= once.calibration.quality);
    }
}
