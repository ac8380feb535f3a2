use proptest::prelude::*;
use viewsel_core::crowd::{rasterize_density, CrowdFrame, Person};
use viewsel_core::grid::GroundGrid;
use viewsel_core::metrics::{counting_metrics, extract_peaks, localization_metrics, match_points};

/// Best matching by dynamic programming over subsets of predictions:
/// most pairs within `t`, then least total distance.
fn best_assignment(pred: &[[f64; 2]], gt: &[[f64; 2]], t: f64) -> (usize, f64) {
    let n = pred.len();
    let full = 1usize << n;
    let mut best = vec![(0usize, 0.0f64); full];
    let mut reach = vec![false; full];
    reach[0] = true;
    for g in gt {
        let mut next_best = best.clone();
        let mut next_reach = reach.clone();
        for used in 0..full {
            if !reach[used] {
                continue;
            }
            for (i, p) in pred.iter().enumerate() {
                if used & (1 << i) != 0 {
                    continue;
                }
                let d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
                if d > t {
                    continue;
                }
                let cand = (best[used].0 + 1, best[used].1 + d);
                let to = used | (1 << i);
                if !next_reach[to] || better(cand, next_best[to]) {
                    next_best[to] = cand;
                    next_reach[to] = true;
                }
            }
        }
        best = next_best;
        reach = next_reach;
    }
    (0..full)
        .filter(|&m| reach[m])
        .map(|m| best[m])
        .fold((0, 0.0), |a, b| if better(b, a) { b } else { a })
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12)
}

fn arb_points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..6.0f64, 0.0..6.0f64).prop_map(|(x, y)| [x, y]), 0..=max)
}

#[test]
fn eight_predictions_against_seven_people() {
    let pred = [[0.1, 0.2], [1.0, 1.1], [2.3, 0.4], [3.1, 3.3], [0.4, 2.8], [4.0, 1.2], [2.2, 2.1], [5.5, 5.1]];
    let gt = [[0.3, 0.1], [1.2, 1.4], [2.0, 0.7], [3.5, 3.0], [0.2, 3.1], [2.5, 2.4], [5.0, 0.2]];
    let m = match_points(&pred, &gt, 1.0).unwrap();
    let total: f64 = m.matches.iter().map(|x| x.distance).sum();
    let (tp, dist) = best_assignment(&pred, &gt, 1.0);
    assert_eq!(m.tp(), tp);
    assert!((total - dist).abs() < 1e-9);
}

#[test]
fn two_people_give_two_peaks() {
    let grid = GroundGrid::new(30, 30, 0.5, [0.0, 0.0]).unwrap();
    let frame = CrowdFrame {
        frame_id: 0,
        persons: vec![Person::at(2.25, 7.25), Person::at(7.25, 7.25)],
    };
    let d = rasterize_density(&frame, &grid, 1.0, None).unwrap();
    let mut peaks = extract_peaks(&d, &grid, 0.05, 2.0).unwrap();
    peaks.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(peaks, vec![[2.25, 7.25], [7.25, 7.25]]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matching_is_optimal_and_symmetric(pred in arb_points(7), gt in arb_points(7), t in 0.3..2.0f64) {
        let m = match_points(&pred, &gt, t).unwrap();
        let (tp, dist) = best_assignment(&pred, &gt, t);
        prop_assert_eq!(m.tp(), tp);
        let total: f64 = m.matches.iter().map(|x| x.distance).sum();
        prop_assert!((total - dist).abs() < 1e-9, "{} vs {}", total, dist);
        prop_assert!(m.matches.iter().all(|x| x.distance <= t));

        let swapped = match_points(&gt, &pred, t).unwrap();
        prop_assert_eq!(swapped.fp(), m.fn_());
        prop_assert_eq!(swapped.fn_(), m.fp());
    }

    #[test]
    fn localization_report_is_consistent(
        distances in prop::collection::vec(0.0..1.0f64, 0..30),
        fp in 0usize..20,
        fn_ in 0usize..20,
    ) {
        let gt_total = distances.len() + fn_;
        prop_assume!(gt_total > 0);
        let r = localization_metrics(&distances, fp, fn_, gt_total, 1.0).unwrap();
        prop_assert!(r.moda <= 1.0);
        prop_assert_eq!(r.moda == 1.0, fp == 0 && fn_ == 0);
        prop_assert!((0.0..=1.0).contains(&r.modp));
        if r.precision + r.recall > 0.0 {
            let f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
            prop_assert!((r.f1 - f1).abs() <= 1e-12);
        }
        if !distances.is_empty() {
            let mean = distances.iter().sum::<f64>() / distances.len() as f64;
            prop_assert!((r.modp - (1.0 - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn counting_errors_match_their_formulas(pairs in prop::collection::vec((0.0..200.0f64, 1.0..200.0f64), 1..20)) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let gt: Vec<f64> = pairs.iter().map(|p| p.1.round()).collect();
        let r = counting_metrics(&pred, &gt, 0.5).unwrap();
        let n = pred.len() as f64;
        let mae = pred.iter().zip(&gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
        let mse = (pred.iter().zip(&gt).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n).sqrt();
        let nae = pred.iter().zip(&gt).map(|(p, g)| (p - g).abs() / g).sum::<f64>() / n;
        prop_assert!((r.mae - mae).abs() < 1e-9);
        prop_assert!((r.mse - mse).abs() < 1e-9);
        prop_assert!((r.nae - nae).abs() < 1e-9);
    }
}
