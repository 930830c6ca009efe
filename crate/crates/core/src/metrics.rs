//! Overlap and surface-distance segmentation metrics.
//!
//! Surfaces are voxel sets (foreground voxels with a background or
//! out-of-grid face neighbour) and distances are measured between voxel
//! centres in millimetres using an exact anisotropic Euclidean distance
//! transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{binary_combine, BoolOp, Mask, ScalarGrid, Spacing};
use crate::morphology::{erode, StructElem};

/// Surface tolerance for the normalised surface Dice, in mm.
pub const DEFAULT_NSD_TOL_MM: f64 = 4.0;
/// HD95 reported when exactly one of the two masks is empty, in mm.
pub const DEFAULT_HD_PENALTY_MM: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub nsd: f64,
    pub hd95_mm: f64,
}

/// Exact Euclidean distance (mm) from every voxel to the nearest `true` voxel.
///
/// Separable lower-envelope-of-parabolas transform, one pass per axis with
/// that axis' spacing. Every voxel is `+inf` when the mask is empty.
pub fn edt(mask: &Mask, spacing: Spacing) -> ScalarGrid {
    let dims = mask.dims();
    let [nz, ny, nx] = dims.as_array();
    let mut d2: Vec<f64> = mask
        .data()
        .iter()
        .map(|&v| if v { 0.0 } else { f64::INFINITY })
        .collect();

    let mut env = Envelope::with_capacity(nz.max(ny).max(nx));
    for (axis, len, stride, w) in [
        (2usize, nx, 1usize, spacing.sx()),
        (1, ny, nx, spacing.sy()),
        (0, nz, ny * nx, spacing.sz()),
    ] {
        let w2 = w * w;
        let outer = dims.len() / len;
        let mut line = vec![0.0; len];
        let mut out = vec![0.0; len];
        for k in 0..outer {
            let base = line_start(k, axis, ny, nx);
            for (i, v) in line.iter_mut().enumerate() {
                *v = d2[base + i * stride];
            }
            env.transform(&line, w2, &mut out);
            for (i, &v) in out.iter().enumerate() {
                d2[base + i * stride] = v;
            }
        }
    }
    let data = d2.into_iter().map(f64::sqrt).collect();
    ScalarGrid::from_parts(dims, spacing, data)
}

/// Flat index of the first voxel of the `k`-th line along `axis`.
fn line_start(k: usize, axis: usize, ny: usize, nx: usize) -> usize {
    match axis {
        // lines along x: k enumerates (z, y)
        2 => k * nx,
        // lines along y: k enumerates (z, x)
        1 => (k / nx) * ny * nx + k % nx,
        // lines along z: k enumerates (y, x)
        _ => k,
    }
}

/// Scratch space for the 1D squared-distance transform.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[x] = min_q w2 * (x - q)^2 + f[q]` over finite `f[q]`.
    fn transform(&mut self, f: &[f64], w2: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        let key = |q: usize| f[q] + w2 * (q * q) as f64;
        for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = (key(q) - key(v)) / (2.0 * w2 * (q - v) as f64);
                if s <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (x, o) in out.iter_mut().enumerate() {
            while k + 1 < self.sites.len() && self.bounds[k + 1] < x as f64 {
                k += 1;
            }
            let q = self.sites[k];
            let dx = x as f64 - q as f64;
            *o = w2 * dx * dx + f[q];
        }
    }
}

/// Foreground voxels with at least one face neighbour that is background or
/// outside the grid.
pub fn surface_voxels(mask: &Mask) -> Mask {
    binary_combine(mask, &erode(mask, StructElem::Face6, 1), BoolOp::AndNot).expect("erosion preserves geometry")
}

/// Distances (mm) from each surface voxel of `from` to the nearest surface voxel
/// of `to`, in z-major order of `from`'s surface.
fn directed_surface_distances(from_surface: &Mask, to_dist: &ScalarGrid) -> Vec<f64> {
    from_surface
        .data()
        .iter()
        .zip(to_dist.data())
        .filter(|(&s, _)| s)
        .map(|(_, &d)| d)
        .collect()
}

/// Nearest-rank percentile: the `ceil(q * m)`-th smallest of `m` values.
pub fn nearest_rank_percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn ratio(num: usize, den: usize, other_empty: bool) -> f64 {
    if den == 0 {
        if other_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Dice, precision, recall, NSD at `nsd_tol_mm` and HD95 for one case.
///
/// Physical distances use the grids' spacing. Both masks empty scores as a
/// perfect match; exactly one empty gives Dice = NSD = 0 and HD95 =
/// `hd_penalty_mm`.
pub fn seg_metrics(gt: &Mask, pred: &Mask, nsd_tol_mm: f64, hd_penalty_mm: f64) -> Result<MetricReport> {
    gt.check_geometry(pred, "seg_metrics")?;
    if !(nsd_tol_mm.is_finite() && nsd_tol_mm >= 0.0) {
        return Err(Error::invalid(format!("NSD tolerance must be >= 0, got {nsd_tol_mm}")));
    }
    if !(hd_penalty_mm.is_finite() && hd_penalty_mm >= 0.0) {
        return Err(Error::invalid(format!("HD penalty must be >= 0, got {hd_penalty_mm}")));
    }
    let n_gt = gt.count();
    let n_pred = pred.count();
    let inter = gt.data().iter().zip(pred.data()).filter(|(&a, &b)| a && b).count();

    let dice = if n_gt + n_pred == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (n_gt + n_pred) as f64
    };
    let precision = ratio(inter, n_pred, n_gt == 0);
    let recall = ratio(inter, n_gt, n_pred == 0);

    let (nsd, hd95_mm) = match (n_gt == 0, n_pred == 0) {
        (true, true) => (1.0, 0.0),
        (true, false) | (false, true) => (0.0, hd_penalty_mm),
        (false, false) => {
            let spacing = gt.spacing();
            let gt_surf = surface_voxels(gt);
            let pred_surf = surface_voxels(pred);
            let mut pred_to_gt = directed_surface_distances(&pred_surf, &edt(&gt_surf, spacing));
            let mut gt_to_pred = directed_surface_distances(&gt_surf, &edt(&pred_surf, spacing));
            let within = pred_to_gt
                .iter()
                .chain(&gt_to_pred)
                .filter(|&&d| d <= nsd_tol_mm)
                .count();
            let nsd = within as f64 / (pred_to_gt.len() + gt_to_pred.len()) as f64;
            let hd = nearest_rank_percentile(&mut pred_to_gt, 0.95).max(nearest_rank_percentile(&mut gt_to_pred, 0.95));
            (nsd, hd)
        }
    };

    Ok(MetricReport {
        dice,
        precision,
        recall,
        nsd,
        hd95_mm,
    })
}

/// One line of a cohort report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Trailing line of a cohort report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortMean {
    pub aggregate: String,
    pub cases: usize,
    #[serde(flatten)]
    pub mean: MetricReport,
}

pub fn cohort_mean(cases: &[CaseMetrics]) -> CohortMean {
    let n = cases.len().max(1) as f64;
    let avg = |f: fn(&MetricReport) -> f64| crate::numeric::sum(cases.iter().map(|c| f(&c.report))) / n;
    CohortMean {
        aggregate: "mean".to_string(),
        cases: cases.len(),
        mean: MetricReport {
            dice: avg(|r| r.dice),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            nsd: avg(|r| r.nsd),
            hd95_mm: avg(|r| r.hd95_mm),
        },
    }
}

/// JSON lines: one object per case followed by the mean.
pub fn cohort_report_jsonl(cases: &[CaseMetrics]) -> Result<String> {
    let mut out = String::new();
    for c in cases {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&cohort_mean(cases))?);
    out.push('\n');
    Ok(out)
}
