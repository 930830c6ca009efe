//! Anatomy-guided patch sampling.
//!
//! A patch centred at voxel `i` is scored by its gain: the inner product of a
//! truncated Gaussian kernel around `i` with a binary interest mask. The
//! sampling map balances total gain against the variance of the map; its
//! unconstrained optimum `g / mu + 1/n` is projected onto the simplex by
//! normalisation. Two such maps (organs, tumour) are mixed linearly and patch
//! centres are then drawn from the result by inverse-CDF sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coord, Dims, Mask, ScalarGrid};
use crate::numeric;

/// Balancing coefficient between total gain and map variance.
pub const DEFAULT_MU: f64 = 1.0;
/// Weight of the tumour map when mixing with the organ map.
pub const DEFAULT_LAMBDA: f64 = 0.33;

/// Tolerance on the sum of a [`SamplingMap`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Training patch size and the Gaussian kernel derived from it.
///
/// The kernel scale per axis is `0.1 * size`. By default that value is used
/// as the variance (diagonal covariance entry); with `sigma_is_stddev` it is
/// squared first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    /// Patch size (dz, dy, dx) in voxels.
    pub size: [usize; 3],
    #[serde(default)]
    pub sigma_is_stddev: bool,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            size: [32, 96, 96],
            sigma_is_stddev: false,
        }
    }
}

impl PatchSpec {
    pub fn new(size: [usize; 3]) -> Result<Self> {
        let spec = PatchSpec {
            size,
            sigma_is_stddev: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.contains(&0) {
            return Err(Error::invalid(format!("patch size {:?} must be positive", self.size)));
        }
        Ok(())
    }

    /// `0.1 * size` per axis.
    pub fn sigma(&self) -> [f64; 3] {
        self.size.map(|d| 0.1 * d as f64)
    }

    /// Diagonal of the covariance matrix.
    pub fn variances(&self) -> [f64; 3] {
        let s = self.sigma();
        if self.sigma_is_stddev {
            s.map(|v| v * v)
        } else {
            s
        }
    }

    /// Kernel support half-width per axis, `floor(size / 2)`, inclusive.
    pub fn half_extent(&self) -> [usize; 3] {
        self.size.map(|d| d / 2)
    }

    /// `(2 pi)^(-3/2) det(Sigma)^(-1/2)`.
    pub fn norm_const(&self) -> f64 {
        let [a, b, c] = self.variances();
        (2.0 * std::f64::consts::PI).powf(-1.5) / (a * b * c).sqrt()
    }

    /// Unnormalised 1D kernel weights `exp(-k^2 / (2 var))` for k in -h..=h.
    fn axis_kernel(&self, axis: usize) -> Vec<f64> {
        let h = self.half_extent()[axis] as i64;
        let var = self.variances()[axis];
        (-h..=h).map(|k| (-0.5 * (k * k) as f64 / var).exp()).collect()
    }
}

/// Per-voxel gain of a patch centred there.
#[derive(Clone, Debug, PartialEq)]
pub struct GainField {
    grid: ScalarGrid,
    patch: PatchSpec,
}

impl GainField {
    /// Wraps precomputed gains; values must be non-negative.
    pub fn from_grid(grid: ScalarGrid, patch: PatchSpec) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("gain values must be non-negative, found {v}")));
        }
        Ok(GainField { grid, patch })
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn patch(&self) -> &PatchSpec {
        &self.patch
    }
}

/// Probability of choosing each voxel as a patch centre.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMap {
    grid: ScalarGrid,
}

impl SamplingMap {
    /// Accepts a grid that is already a probability map.
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("sampling map has negative value {v}")));
        }
        let total = grid.sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("sampling map sums to {total}, not 1")));
        }
        Ok(SamplingMap { grid })
    }

    /// Divides non-negative weights by their sum (e.g. a map re-read from float32).
    pub fn normalized(grid: ScalarGrid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!(
                "sampling weights must be non-negative, found {v}"
            )));
        }
        let total = grid.sum();
        if total <= 0.0 {
            return Err(Error::invalid("sampling weights sum to zero"));
        }
        let grid = grid.map(|v| v / total)?;
        Ok(SamplingMap { grid })
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.grid
    }

    pub fn probabilities(&self) -> &[f64] {
        self.grid.data()
    }
}

/// Gain of every voxel, via three 1D truncated-Gaussian passes.
///
/// `O` is zero outside the grid. Summation order is fixed, so results are
/// reproducible bit for bit.
pub fn gain_map(interest: &Mask, patch: &PatchSpec) -> Result<GainField> {
    patch.validate()?;
    let dims = interest.dims();
    let mut buf: Vec<f64> = interest.data().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    for axis in [2, 1, 0] {
        buf = convolve_axis(&buf, dims, axis, &patch.axis_kernel(axis));
    }
    let c = patch.norm_const();
    buf.iter_mut().for_each(|v| *v *= c);
    let grid = ScalarGrid::new(dims, interest.spacing(), buf)?;
    Ok(GainField { grid, patch: *patch })
}

/// Zero-padded 1D correlation of a symmetric kernel along `axis` (0 = z).
fn convolve_axis(src: &[f64], dims: Dims, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let [nz, ny, nx] = dims.as_array();
    let (len, stride) = match axis {
        0 => (nz, ny * nx),
        1 => (ny, nx),
        _ => (nx, 1),
    };
    let h = kernel.len() / 2;
    let mut out = vec![0.0; src.len()];
    let mut line = vec![0.0; len];
    for base in (0..src.len()).filter(|&i| (i / stride) % len == 0) {
        for (k, v) in line.iter_mut().enumerate() {
            *v = src[base + k * stride];
        }
        if line.iter().all(|&v| v == 0.0) {
            continue;
        }
        for i in 0..len {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(len - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += kernel[j + h - i] * line[j];
            }
            out[base + i * stride] = acc;
        }
    }
    out
}

/// Gain at `p` by direct summation over the truncated neighbourhood.
pub fn gain_at_naive(interest: &Mask, patch: &PatchSpec, p: Coord) -> f64 {
    let dims = interest.dims();
    let h = patch.half_extent().map(|v| v as i64);
    let var = patch.variances();
    let c = patch.norm_const();
    let mut acc = 0.0;
    for dz in -h[0]..=h[0] {
        for dy in -h[1]..=h[1] {
            for dx in -h[2]..=h[2] {
                let Some(i) = dims.index_signed(p.z as i64 + dz, p.y as i64 + dy, p.x as i64 + dx) else {
                    continue;
                };
                if interest.data()[i] {
                    let q = (dz * dz) as f64 / var[0] + (dy * dy) as f64 / var[1] + (dx * dx) as f64 / var[2];
                    acc += c * (-0.5 * q).exp();
                }
            }
        }
    }
    acc
}

/// Projects the unconstrained optimum `g / mu + 1/n` onto the simplex.
pub fn psm_from_gain(gain: &GainField, mu: f64) -> Result<SamplingMap> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let g = gain.grid();
    let n = g.len() as f64;
    let base = 1.0 / n;
    // sum of g/mu + 1/n over all voxels
    let total = numeric::sum(g.data().iter().copied()) / mu + 1.0;
    let grid = g.map(|v| (v / mu + base) / total)?;
    Ok(SamplingMap { grid })
}

/// `(1 - lambda) * organ + lambda * tumor`.
pub fn combine_psm(organ: &SamplingMap, tumor: &SamplingMap, lambda: f64) -> Result<SamplingMap> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    organ.grid.check_geometry(&tumor.grid, "combine_psm")?;
    let data = organ
        .probabilities()
        .iter()
        .zip(tumor.probabilities())
        .map(|(&a, &b)| (1.0 - lambda) * a + lambda * b)
        .collect();
    let grid = ScalarGrid::new(organ.grid.dims(), organ.grid.spacing(), data)?;
    Ok(SamplingMap { grid })
}

/// Inverse-CDF sampler over the flat z-major voxel order.
#[derive(Clone, Debug)]
pub struct CenterSampler {
    dims: Dims,
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CenterSampler {
    pub fn new(map: &SamplingMap) -> Self {
        let mut acc = 0.0;
        let cdf: Vec<f64> = map
            .probabilities()
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = map.probabilities().iter().rposition(|&p| p > 0.0).unwrap_or(0);
        CenterSampler {
            dims: map.grid.dims(),
            cdf,
            last_positive,
        }
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.cdf[self.cdf.len() - 1];
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.last_positive)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Coord {
        self.dims.coord(self.sample_index(rng))
    }
}

/// `count` independent centre draws, reproducible from `seed` on any platform.
pub fn draw_centers(map: &SamplingMap, count: usize, seed: u64) -> Result<Vec<Coord>> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let sampler = CenterSampler::new(map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}
