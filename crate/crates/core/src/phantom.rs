//! Synthetic abdomen phantom: a hollow tube bent along a 270 degree arc in
//! the central axial plane, a spherical tumour sitting on its wall, and a few
//! ellipsoidal distractor organs.
//!
//! Colon and tumour geometry depend only on the geometric fields of the spec;
//! the seed drives distractor placement and intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coord, Dims, LabelGrid, Mask, ScalarGrid, Spacing};

pub const LABEL_BACKGROUND: u32 = 0;
pub const LABEL_COLON: u32 = 1;
/// Distractor organs are labelled `LABEL_FIRST_DISTRACTOR + k`.
pub const LABEL_FIRST_DISTRACTOR: u32 = 2;

/// Angular extent of the tube centreline.
pub const ARC_SPAN_RAD: f64 = 1.5 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intensity {
    pub mean: f64,
    pub stddev: f64,
}

impl Intensity {
    const fn new(mean: f64, stddev: f64) -> Self {
        Intensity { mean, stddev }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityProfile {
    pub background: Intensity,
    pub lumen: Intensity,
    pub wall: Intensity,
    pub tumor: Intensity,
    pub organ: Intensity,
}

impl Default for IntensityProfile {
    fn default() -> Self {
        IntensityProfile {
            background: Intensity::new(-0.3, 0.1),
            lumen: Intensity::new(-1.0, 0.1),
            wall: Intensity::new(0.8, 0.1),
            tumor: Intensity::new(1.2, 0.15),
            organ: Intensity::new(0.5, 0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Radius of the arc the tube centreline follows, mm.
    pub arc_radius_mm: f64,
    pub tube_radius_mm: f64,
    pub wall_thickness_mm: f64,
    pub tumor_radius_mm: f64,
    /// Position of the tumour along the arc, degrees from the arc start.
    pub tumor_angle_deg: f64,
    pub n_distractors: usize,
    pub intensity: IntensityProfile,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: Dims::new(64, 96, 96).expect("static dims"),
            spacing: Spacing::new(2.0, 1.0, 1.0).expect("static spacing"),
            arc_radius_mm: 28.0,
            tube_radius_mm: 12.0,
            wall_thickness_mm: 3.0,
            tumor_radius_mm: 5.0,
            tumor_angle_deg: 135.0,
            n_distractors: 3,
            intensity: IntensityProfile::default(),
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PhantomSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Physical extent (mm) along (z, y, x).
    fn extent(&self) -> [f64; 3] {
        let d = self.dims.as_array();
        let s = self.spacing.as_array();
        [d[0] as f64 * s[0], d[1] as f64 * s[1], d[2] as f64 * s[2]]
    }

    /// Volume centre in mm, voxel-centre coordinates.
    fn center(&self) -> [f64; 3] {
        let d = self.dims.as_array();
        let s = self.spacing.as_array();
        [0, 1, 2].map(|a| (d[a] as f64 - 1.0) * 0.5 * s[a])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arc_radius_mm", self.arc_radius_mm),
            ("tube_radius_mm", self.tube_radius_mm),
            ("wall_thickness_mm", self.wall_thickness_mm),
            ("tumor_radius_mm", self.tumor_radius_mm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.wall_thickness_mm >= self.tube_radius_mm {
            return Err(Error::invalid("wall thickness must be smaller than the tube radius"));
        }
        if self.arc_radius_mm <= self.tube_radius_mm {
            return Err(Error::invalid("arc radius must exceed the tube radius"));
        }
        if !self.tumor_angle_deg.is_finite() || !(0.0..=270.0).contains(&self.tumor_angle_deg) {
            return Err(Error::invalid("tumor angle must lie on the 270 degree arc"));
        }
        let [ez, ey, ex] = self.extent();
        let reach = self.arc_radius_mm + self.tube_radius_mm;
        if 2.0 * self.tube_radius_mm > ez || 2.0 * reach > ey.min(ex) {
            return Err(Error::invalid(format!(
                "tube (arc {} + radius {} mm) does not fit in a {:.1}x{:.1}x{:.1} mm volume",
                self.arc_radius_mm, self.tube_radius_mm, ez, ey, ex
            )));
        }
        for i in [
            self.intensity.background,
            self.intensity.lumen,
            self.intensity.wall,
            self.intensity.tumor,
            self.intensity.organ,
        ] {
            if !(i.mean.is_finite() && i.stddev.is_finite() && i.stddev >= 0.0) {
                return Err(Error::invalid(format!("invalid intensity {i:?}")));
            }
        }
        Ok(())
    }

    /// Physical position (mm) of a voxel centre.
    pub fn position(&self, c: Coord) -> [f64; 3] {
        [
            c.z as f64 * self.spacing.sz(),
            c.y as f64 * self.spacing.sy(),
            c.x as f64 * self.spacing.sx(),
        ]
    }

    /// Point on the centreline at `theta` radians from the arc start.
    pub fn centerline_point(&self, theta: f64) -> [f64; 3] {
        let c = self.center();
        [
            c[0],
            c[1] + self.arc_radius_mm * theta.cos(),
            c[2] + self.arc_radius_mm * theta.sin(),
        ]
    }

    /// Distance (mm) from `p` to the centreline arc.
    pub fn centerline_distance(&self, p: [f64; 3]) -> f64 {
        let c = self.center();
        let (dz, dy, dx) = (p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        let phi = dx.atan2(dy).rem_euclid(2.0 * std::f64::consts::PI);
        if phi <= ARC_SPAN_RAD {
            let rho = dy.hypot(dx);
            (rho - self.arc_radius_mm).hypot(dz)
        } else {
            [0.0, ARC_SPAN_RAD]
                .map(|t| dist(p, self.centerline_point(t)))
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        }
    }

    /// Analytic tumour centre before snapping to a voxel: on the lumen side of
    /// the wall at `tumor_angle_deg`.
    pub fn tumor_anchor(&self) -> [f64; 3] {
        let theta = self.tumor_angle_deg.to_radians();
        let c = self.center();
        let r = self.arc_radius_mm + (self.tube_radius_mm - self.wall_thickness_mm);
        [c[0], c[1] + r * theta.cos(), c[2] + r * theta.sin()]
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub ct: ScalarGrid,
    pub labels: LabelGrid,
    pub tumor: Mask,
    /// Voxels of the tube wall (subset of the colon label).
    pub wall: Mask,
    /// Voxel the tumour sphere is centred on.
    pub tumor_center: Coord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Background,
    Lumen,
    Wall,
    Organ,
}

/// Builds the phantom described by `spec`.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let dims = spec.dims;
    let spacing = spec.spacing;
    let outer = spec.tube_radius_mm;
    let inner = spec.tube_radius_mm - spec.wall_thickness_mm;

    let centerline: Vec<f64> = (0..dims.len())
        .map(|i| spec.centerline_distance(spec.position(dims.coord(i))))
        .collect();
    let mut regions: Vec<Region> = centerline
        .iter()
        .map(|&d| {
            if d < inner {
                Region::Lumen
            } else if d <= outer {
                Region::Wall
            } else {
                Region::Background
            }
        })
        .collect();

    let tumor_center = snap_to_wall(spec, &regions)?;
    let tc = spec.position(tumor_center);
    let tumor: Vec<bool> = (0..dims.len())
        .map(|i| dist(spec.position(dims.coord(i)), tc) <= spec.tumor_radius_mm)
        .collect();

    let mut labels: Vec<u32> = regions
        .iter()
        .map(|r| {
            if matches!(r, Region::Lumen | Region::Wall) {
                LABEL_COLON
            } else {
                LABEL_BACKGROUND
            }
        })
        .collect();

    let mut placement_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keep_out = outer + spec.tumor_radius_mm + 2.0 * spacing.as_array().into_iter().fold(0.0, f64::max);
    let [ez, ey, ex] = spec.extent();
    for k in 0..spec.n_distractors {
        let center = [
            placement_rng.random_range(0.0..ez),
            placement_rng.random_range(0.0..ey),
            placement_rng.random_range(0.0..ex),
        ];
        let radii = [0.0; 3].map(|_| placement_rng.random_range(0.08..0.2) * ey.min(ex));
        let label = LABEL_FIRST_DISTRACTOR + k as u32;
        for i in 0..dims.len() {
            if labels[i] != LABEL_BACKGROUND || centerline[i] <= keep_out {
                continue;
            }
            let p = spec.position(dims.coord(i));
            let q: f64 = (0..3).map(|a| ((p[a] - center[a]) / radii[a]).powi(2)).sum();
            if q <= 1.0 {
                labels[i] = label;
                regions[i] = Region::Organ;
            }
        }
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_1a7e_ca5e_0001);
    let prof = spec.intensity;
    let sample = |i: Intensity, rng: &mut ChaCha8Rng| -> Result<f64> {
        let n = Normal::new(i.mean, i.stddev).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(n.sample(rng))
    };
    let mut ct = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let inten = if tumor[i] {
            prof.tumor
        } else {
            match regions[i] {
                Region::Background => prof.background,
                Region::Lumen => prof.lumen,
                Region::Wall => prof.wall,
                Region::Organ => prof.organ,
            }
        };
        // stored at float32 precision so the volume survives a float32 file
        ct.push(f64::from(sample(inten, &mut noise_rng)? as f32));
    }

    let wall = regions.iter().map(|&r| r == Region::Wall).collect();
    Ok(Phantom {
        ct: ScalarGrid::new(dims, spacing, ct)?,
        labels: LabelGrid::new(dims, spacing, labels)?,
        tumor: Mask::new(dims, spacing, tumor)?,
        wall: Mask::new(dims, spacing, wall)?,
        tumor_center,
    })
}

/// Wall voxel nearest to the analytic tumour anchor.
fn snap_to_wall(spec: &PhantomSpec, regions: &[Region]) -> Result<Coord> {
    let anchor = spec.tumor_anchor();
    (0..regions.len())
        .filter(|&i| regions[i] == Region::Wall)
        .map(|i| spec.dims.coord(i))
        .min_by(|a, b| dist(spec.position(*a), anchor).total_cmp(&dist(spec.position(*b), anchor)))
        .ok_or_else(|| Error::invalid("tube wall is thinner than the voxel grid can resolve"))
}

/// Copy of `labels` with `label` erased (set to background) inside a slab of
/// the arc between `from_deg` and `to_deg`, mimicking a segmentation model
/// that misses part of an organ.
pub fn erase_arc_segment(spec: &PhantomSpec, labels: &LabelGrid, label: u32, from_deg: f64, to_deg: f64) -> LabelGrid {
    let c = spec.center();
    let (lo, hi) = (from_deg.to_radians(), to_deg.to_radians());
    let data = (0..labels.len())
        .map(|i| {
            let v = labels.data()[i];
            let p = spec.position(labels.dims().coord(i));
            let phi = (p[2] - c[2]).atan2(p[1] - c[1]).rem_euclid(2.0 * std::f64::consts::PI);
            if v == label && (lo..=hi).contains(&phi) {
                LABEL_BACKGROUND
            } else {
                v
            }
        })
        .collect();
    LabelGrid::from_parts(labels.dims(), labels.spacing(), data)
}
