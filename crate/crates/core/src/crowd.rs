//! Synthetic crowds, ground-plane density rasters, and crowd visibility.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GroundGrid, Mask};

/// Default Gaussian kernel width for ground-truth densities, in cells.
pub const DEFAULT_KERNEL_SIGMA_CELLS: f64 = 1.0;

/// Kernel support radius in units of sigma.
pub const KERNEL_TRUNCATION_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub position: [f64; 2],
}

impl Person {
    pub fn at(x: f64, y: f64) -> Self {
        Self { position: [x, y] }
    }
}

/// People on the ground at one synchronized timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdFrame {
    pub frame_id: u64,
    pub persons: Vec<Person>,
}

/// Nonnegative density raster `M_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    values: Field,
}

impl DensityMap {
    pub fn new(values: Field) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config("density", format!("values must be finite and >= 0, found {v}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(grid: &GroundGrid) -> Self {
        Self { values: grid.field(0.0) }
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn into_field(self) -> Field {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        assert!(factor >= 0.0, "density scale must be nonnegative");
        self.values.scale(factor);
        self
    }

    /// Cellwise mean of several maps on the same grid.
    pub fn average(maps: &[DensityMap], grid: &GroundGrid) -> Result<DensityMap> {
        let mut acc = grid.field(0.0);
        for map in maps {
            grid.check_shape(&map.values)?;
            for (a, v) in acc.data_mut().iter_mut().zip(map.values.data()) {
                *a += v;
            }
        }
        if !maps.is_empty() {
            acc.scale(1.0 / maps.len() as f64);
        }
        Ok(DensityMap { values: acc })
    }
}

/// Parameters of the synthetic crowd generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceGenParams {
    pub n_frames: usize,
    pub count_range: (usize, usize),
    pub clustering: f64,
    pub seed: u64,
}

impl Default for TraceGenParams {
    fn default() -> Self {
        Self {
            n_frames: 40,
            count_range: (80, 160),
            clustering: 0.7,
            seed: 0,
        }
    }
}

/// Generate a seeded crowd trace.
///
/// Each person is drawn uniformly over the grid with probability
/// `1 - clustering`, otherwise around one of a few Gaussian cluster centres.
/// Cluster anchors are fixed per trace and drift per frame, so crowded
/// regions persist over time.
pub fn generate_crowd_trace(
    grid: &GroundGrid,
    n_frames: usize,
    count_range: (usize, usize),
    clustering: f64,
    seed: u64,
) -> Result<Vec<CrowdFrame>> {
    grid.validate()?;
    if n_frames == 0 {
        return Err(Error::config("n_frames", "must be at least 1"));
    }
    if count_range.0 > count_range.1 {
        return Err(Error::config("count_range", "lower bound exceeds upper bound"));
    }
    if !(0.0..=1.0).contains(&clustering) {
        return Err(Error::config("clustering", "must lie in [0, 1]"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = grid.extent();
    let span = [hi[0] - lo[0], hi[1] - lo[1]];
    let scale = span[0].min(span[1]);
    let n_clusters = rng.random_range(3..=6usize);
    let anchors: Vec<[f64; 2]> = (0..n_clusters)
        .map(|_| {
            [
                lo[0] + span[0] * rng.random_range(0.1..0.9),
                lo[1] + span[1] * rng.random_range(0.1..0.9),
            ]
        })
        .collect();
    let drift = Normal::new(0.0, 0.04 * scale).expect("positive std");
    let spread = Normal::new(0.0, 0.07 * scale).expect("positive std");
    let clamp = |p: [f64; 2]| [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])];

    let frames = (0..n_frames)
        .map(|f| {
            let centres: Vec<[f64; 2]> = anchors
                .iter()
                .map(|a| clamp([a[0] + drift.sample(&mut rng), a[1] + drift.sample(&mut rng)]))
                .collect();
            let count = rng.random_range(count_range.0..=count_range.1);
            let persons = (0..count)
                .map(|_| {
                    let p = if rng.random::<f64>() < clustering {
                        let c = centres[rng.random_range(0..centres.len())];
                        [c[0] + spread.sample(&mut rng), c[1] + spread.sample(&mut rng)]
                    } else {
                        [
                            lo[0] + span[0] * rng.random::<f64>(),
                            lo[1] + span[1] * rng.random::<f64>(),
                        ]
                    };
                    Person { position: clamp(p) }
                })
                .collect();
            CrowdFrame {
                frame_id: f as u64,
                persons,
            }
        })
        .collect();
    Ok(frames)
}

/// Rasterize persons into a density map with truncated Gaussian kernels.
///
/// Each kernel is normalized to unit mass over the in-bounds cells before
/// the optional mask is applied, so masking removes mass without
/// renormalizing it.
pub fn rasterize_density(
    frame: &CrowdFrame,
    grid: &GroundGrid,
    kernel_sigma_cells: f64,
    mask: Option<&Mask>,
) -> Result<DensityMap> {
    rasterize_points(frame.persons.iter().map(|p| p.position), grid, kernel_sigma_cells, mask)
}

pub(crate) fn rasterize_points(
    points: impl IntoIterator<Item = [f64; 2]>,
    grid: &GroundGrid,
    kernel_sigma_cells: f64,
    mask: Option<&Mask>,
) -> Result<DensityMap> {
    if !(kernel_sigma_cells.is_finite() && kernel_sigma_cells > 0.0) {
        return Err(Error::config("kernel_sigma_cells", "must be positive"));
    }
    if let Some(m) = mask {
        grid.check_shape(m)?;
    }
    let mut field = grid.field(0.0);
    let radius = KERNEL_TRUNCATION_SIGMAS * kernel_sigma_cells;
    let radius_sq = radius * radius;
    let inv_two_var = 1.0 / (2.0 * kernel_sigma_cells * kernel_sigma_cells);
    let (h, w) = (grid.height_cells as i64, grid.width_cells as i64);
    let mut weights: Vec<(usize, f64)> = Vec::new();

    for p in points {
        // Continuous cell coordinates; cell (r, c) has its centre at (c + 0.5, r + 0.5).
        let u = (p[0] - grid.origin[0]) / grid.cell_size_m;
        let v = (p[1] - grid.origin[1]) / grid.cell_size_m;
        let c_lo = ((u - 0.5 - radius).ceil() as i64).max(0);
        let c_hi = ((u - 0.5 + radius).floor() as i64).min(w - 1);
        let r_lo = ((v - 0.5 - radius).ceil() as i64).max(0);
        let r_hi = ((v - 0.5 + radius).floor() as i64).min(h - 1);

        weights.clear();
        let mut total = 0.0;
        for r in r_lo..=r_hi {
            let dy = r as f64 + 0.5 - v;
            for c in c_lo..=c_hi {
                let dx = c as f64 + 0.5 - u;
                let d2 = dx * dx + dy * dy;
                if d2 <= radius_sq {
                    let wgt = (-d2 * inv_two_var).exp();
                    total += wgt;
                    weights.push((grid.index(r as usize, c as usize), wgt));
                }
            }
        }
        let data = field.data_mut();
        if total > 0.0 {
            for &(idx, wgt) in &weights {
                data[idx] += wgt / total;
            }
        } else {
            // Kernel narrower than the distance to any cell centre.
            let (r, c) = grid.cell_of(p);
            data[grid.index(r, c)] += 1.0;
        }
    }

    let field = match mask {
        Some(m) => field.masked(m)?,
        None => field,
    };
    Ok(DensityMap { values: field })
}

/// Persons whose containing cell is true in `visibility`.
pub fn visible_persons(frame: &CrowdFrame, visibility: &Mask, grid: &GroundGrid) -> Result<Vec<Person>> {
    grid.check_shape(visibility)?;
    Ok(frame
        .persons
        .iter()
        .filter(|p| {
            let (r, c) = grid.cell_of(p.position);
            *visibility.get(r, c)
        })
        .copied()
        .collect())
}

pub(crate) fn count_visible(frame: &CrowdFrame, visibility: &Mask, grid: &GroundGrid) -> usize {
    frame
        .persons
        .iter()
        .filter(|p| {
            let (r, c) = grid.cell_of(p.position);
            *visibility.get(r, c)
        })
        .count()
}

/// Fraction of all persons across `frames` inside `visibility`.
pub fn cover_rate(frames: &[CrowdFrame], visibility: &Mask, grid: &GroundGrid) -> Result<f64> {
    grid.check_shape(visibility)?;
    let total: usize = frames.iter().map(|f| f.persons.len()).sum();
    if total == 0 {
        return Err(Error::UndefinedCoverRate);
    }
    let seen: usize = frames.iter().map(|f| count_visible(f, visibility, grid)).sum();
    Ok(seen as f64 / total as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    frame_id: u64,
    person_idx: Option<usize>,
    x_m: Option<f64>,
    y_m: Option<f64>,
}

/// Write a trace as CSV (`frame_id,person_idx,x_m,y_m`). A frame with no
/// persons is written as a single row with the person columns left blank.
pub fn write_trace_csv<W: Write>(frames: &[CrowdFrame], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for frame in frames {
        if frame.persons.is_empty() {
            out.serialize(TraceRow {
                frame_id: frame.frame_id,
                person_idx: None,
                x_m: None,
                y_m: None,
            })?;
        }
        for (i, p) in frame.persons.iter().enumerate() {
            out.serialize(TraceRow {
                frame_id: frame.frame_id,
                person_idx: Some(i),
                x_m: Some(p.position[0]),
                y_m: Some(p.position[1]),
            })?;
        }
    }
    out.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}

/// Read a trace written by [`write_trace_csv`]. Lines starting with `#` are
/// ignored.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<CrowdFrame>> {
    let mut input = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut frames: Vec<CrowdFrame> = Vec::new();
    for row in input.deserialize() {
        let row: TraceRow = row?;
        if frames.last().map(|f| f.frame_id) != Some(row.frame_id) {
            if frames.iter().any(|f| f.frame_id == row.frame_id) {
                return Err(Error::config("trace", format!("frame {} is not contiguous", row.frame_id)));
            }
            frames.push(CrowdFrame {
                frame_id: row.frame_id,
                persons: Vec::new(),
            });
        }
        if let (Some(x), Some(y)) = (row.x_m, row.y_m) {
            frames.last_mut().expect("pushed above").persons.push(Person::at(x, y));
        }
    }
    Ok(frames)
}

/// Load a trace from `.csv` or JSON (array of frames).
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<CrowdFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_trace_csv(file)
    } else {
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
