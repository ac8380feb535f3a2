//! Counting and localization metrics.

use serde::{Deserialize, Serialize};

use crate::crowd::DensityMap;
use crate::error::{Error, Result};
use crate::grid::GroundGrid;

/// Localization match threshold in metres.
pub const DEFAULT_MATCH_THRESHOLD_M: f64 = 0.5;
pub const DEFAULT_PEAK_MIN_VALUE: f64 = 0.05;
pub const DEFAULT_NMS_RADIUS_CELLS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub mae: f64,
    /// Root mean squared error.
    pub mse: f64,
    pub nae: f64,
    pub cover_rate: f64,
    pub n_frames: usize,
}

/// Counting errors of predicted against ground-truth counts. Frames with
/// zero ground truth are left out of NAE only.
pub fn counting_metrics(predicted: &[f64], gt: &[f64], cover_rate: f64) -> Result<CountingReport> {
    if predicted.len() != gt.len() {
        return Err(Error::LengthMismatch(predicted.len(), gt.len()));
    }
    if predicted.is_empty() {
        return Err(Error::config("counts", "at least one frame is required"));
    }
    let n = predicted.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut rel = 0.0;
    let mut rel_n = 0usize;
    for (&p, &g) in predicted.iter().zip(gt) {
        let e = (p - g).abs();
        abs += e;
        sq += e * e;
        if g > 0.0 {
            rel += e / g;
            rel_n += 1;
        }
    }
    Ok(CountingReport {
        mae: abs / n,
        mse: (sq / n).sqrt(),
        nae: if rel_n == 0 { 0.0 } else { rel / rel_n as f64 },
        cover_rate,
        n_frames: predicted.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMatch {
    pub predicted: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<PointMatch>,
    pub unmatched_predicted: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.matches.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_predicted.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_gt.len()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major).
/// Returns `assign[row] = col`.
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    // Shortest augmenting paths with potentials, 1-based sentinels.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// One-to-one matching that maximizes the number of pairs within
/// `threshold_m` and, among those, minimizes the total matched distance.
pub fn match_points(predicted: &[[f64; 2]], gt: &[[f64; 2]], threshold_m: f64) -> Result<MatchResult> {
    if !threshold_m.is_finite() || threshold_m <= 0.0 {
        return Err(Error::config("threshold_m", "must be positive and finite"));
    }
    let n = predicted.len().max(gt.len());
    let mut result = MatchResult {
        matches: Vec::new(),
        unmatched_predicted: Vec::new(),
        unmatched_gt: Vec::new(),
    };
    if n > 0 {
        // Forbidden or dummy pairs cost more than any full set of real
        // matches, so the solver first maximizes the match count.
        let big = threshold_m * (n as f64 + 1.0) * 2.0;
        let mut cost = vec![big; n * n];
        for (i, &p) in predicted.iter().enumerate() {
            for (j, &g) in gt.iter().enumerate() {
                let d = dist(p, g);
                if d <= threshold_m {
                    cost[i * n + j] = d;
                }
            }
        }
        let assign = hungarian(n, &cost);
        let mut gt_used = vec![false; gt.len()];
        for (i, &j) in assign.iter().enumerate().take(predicted.len()) {
            if j < gt.len() {
                let d = dist(predicted[i], gt[j]);
                if d <= threshold_m {
                    result.matches.push(PointMatch {
                        predicted: i,
                        gt: j,
                        distance: d,
                    });
                    gt_used[j] = true;
                    continue;
                }
            }
            result.unmatched_predicted.push(i);
        }
        result.unmatched_gt = (0..gt.len()).filter(|&j| !gt_used[j]).collect();
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold_m: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// MODA, MODP (mean of `1 - d / t` over matches), precision, recall, F1.
pub fn localization_metrics(
    match_distances: &[f64],
    fp: usize,
    fn_: usize,
    gt_total: usize,
    threshold_m: f64,
) -> Result<LocalizationReport> {
    if gt_total == 0 {
        return Err(Error::UndefinedModa);
    }
    let tp = match_distances.len();
    if tp + fn_ != gt_total {
        return Err(Error::config(
            "gt_total",
            format!("{tp} matches + {fn_} misses do not add up to {gt_total}"),
        ));
    }
    let modp = if tp == 0 {
        0.0
    } else {
        match_distances.iter().map(|d| 1.0 - d / threshold_m).sum::<f64>() / tp as f64
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    // 2PR / (P + R) written over counts, so exact ratios stay exact.
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    Ok(LocalizationReport {
        moda: (gt_total as f64 - (fp + fn_) as f64) / gt_total as f64,
        modp,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        threshold_m,
    })
}

/// Cell-center coordinates of local maxima above `min_value`, after greedy
/// non-maximum suppression in descending value order (ties by cell index).
pub fn extract_peaks(density: &DensityMap, grid: &GroundGrid, min_value: f64, nms_radius_cells: f64) -> Result<Vec<[f64; 2]>> {
    if nms_radius_cells.is_nan() || nms_radius_cells < 1.0 {
        return Err(Error::config("nms_radius_cells", "must be at least 1"));
    }
    let field = density.values();
    grid.check_shape(field)?;
    let (h, w) = (field.height(), field.width());
    let data = field.data();
    let mut candidates = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = data[r * w + c];
            if v.is_nan() || v <= min_value {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    if data[rr as usize * w + cc as usize] > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((r * w + c, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let r2 = nms_radius_cells * nms_radius_cells;
    let mut kept: Vec<usize> = Vec::new();
    for (idx, _) in candidates {
        let (r, c) = (idx / w, idx % w);
        let suppressed = kept.iter().any(|&k| {
            let (kr, kc) = ((k / w) as f64, (k % w) as f64);
            (kr - r as f64).powi(2) + (kc - c as f64).powi(2) <= r2
        });
        if !suppressed {
            kept.push(idx);
        }
    }
    Ok(kept
        .into_iter()
        .map(|idx| {
            let (r, c) = grid.row_col(idx);
            grid.cell_center(r, c)
        })
        .collect())
}
