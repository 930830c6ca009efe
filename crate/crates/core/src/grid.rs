//! Dense 3D voxel grids with physical spacing.
//!
//! Every volume in the crate is a [`VoxelGrid`] stored flat in z-major order
//! (z slowest, x fastest), which is also the on-disk order of NIfTI payloads.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along (z, y, x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    nz: usize,
    ny: usize,
    nx: usize,
}

impl Dims {
    pub fn new(nz: usize, ny: usize, nx: usize) -> Result<Self> {
        if nz == 0 || ny == 0 || nx == 0 {
            return Err(Error::invalid(format!(
                "dimensions must be positive, got ({nz}, {ny}, {nx})"
            )));
        }
        nz.checked_mul(ny)
            .and_then(|v| v.checked_mul(nx))
            .ok_or_else(|| Error::invalid("voxel count overflows usize"))?;
        Ok(Dims { nz, ny, nx })
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nz, self.ny, self.nx]
    }

    /// Total number of voxels.
    pub fn len(&self) -> usize {
        self.nz * self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.z < self.nz && c.y < self.ny && c.x < self.nx
    }

    /// Flat z-major index of `c`. `c` must lie inside the grid.
    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        (c.z * self.ny + c.y) * self.nx + c.x
    }

    #[inline]
    pub fn coord(&self, index: usize) -> Coord {
        debug_assert!(index < self.len());
        let x = index % self.nx;
        let rest = index / self.nx;
        Coord {
            z: rest / self.ny,
            y: rest % self.ny,
            x,
        }
    }

    /// Signed lookup, `None` when outside the grid.
    #[inline]
    pub fn index_signed(&self, z: i64, y: i64, x: i64) -> Option<usize> {
        if z < 0 || y < 0 || x < 0 || z >= self.nz as i64 || y >= self.ny as i64 || x >= self.nx as i64 {
            return None;
        }
        Some(((z as usize) * self.ny + y as usize) * self.nx + x as usize)
    }
}

impl TryFrom<[usize; 3]> for Dims {
    type Error = Error;

    fn try_from(v: [usize; 3]) -> Result<Self> {
        Dims::new(v[0], v[1], v[2])
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        d.as_array()
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nz, self.ny, self.nx)
    }
}

/// Millimetres per voxel along (z, y, x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Spacing {
    sz: f64,
    sy: f64,
    sx: f64,
}

impl Spacing {
    pub fn new(sz: f64, sy: f64, sx: f64) -> Result<Self> {
        for s in [sz, sy, sx] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!(
                    "spacing must be positive and finite, got ({sz}, {sy}, {sx})"
                )));
            }
        }
        Ok(Spacing { sz, sy, sx })
    }

    pub fn isotropic() -> Self {
        Spacing {
            sz: 1.0,
            sy: 1.0,
            sx: 1.0,
        }
    }

    pub fn sz(&self) -> f64 {
        self.sz
    }

    pub fn sy(&self) -> f64 {
        self.sy
    }

    pub fn sx(&self) -> f64 {
        self.sx
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sz, self.sy, self.sx]
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Spacing::new(self.sz * k, self.sy * k, self.sx * k)
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::isotropic()
    }
}

impl TryFrom<[f64; 3]> for Spacing {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Spacing::new(v[0], v[1], v[2])
    }
}

impl From<Spacing> for [f64; 3] {
    fn from(s: Spacing) -> Self {
        s.as_array()
    }
}

/// Integer voxel position (z, y, x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Coord {
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl Coord {
    pub const fn new(z: usize, y: usize, x: usize) -> Self {
        Coord { z, y, x }
    }
}

impl From<[usize; 3]> for Coord {
    fn from(v: [usize; 3]) -> Self {
        Coord::new(v[0], v[1], v[2])
    }
}

impl From<Coord> for [usize; 3] {
    fn from(c: Coord) -> Self {
        [c.z, c.y, c.x]
    }
}

/// Element kinds a grid may carry: booleans, unsigned labels, real scalars.
pub trait Voxel: Copy + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;

    fn is_valid(self) -> bool {
        true
    }
}

impl Voxel for bool {
    fn to_f64(self) -> f64 {
        if self {
            1.0
        } else {
            0.0
        }
    }
}

impl Voxel for u32 {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Voxel for f64 {
    fn to_f64(self) -> f64 {
        self
    }

    fn is_valid(self) -> bool {
        self.is_finite()
    }
}

/// Dense 3D array with per-axis physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

pub type Mask = VoxelGrid<bool>;
pub type LabelGrid = VoxelGrid<u32>;
pub type ScalarGrid = VoxelGrid<f64>;

impl<T: Voxel> VoxelGrid<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims} ({} voxels)",
                data.len(),
                dims.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::invalid(format!("non-finite value {:?} at voxel {i}", data[i])));
        }
        Ok(VoxelGrid { dims, spacing, data })
    }

    /// Constructor for values already known to satisfy the element invariant.
    pub(crate) fn from_parts(dims: Dims, spacing: Spacing, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        VoxelGrid { dims, spacing, data }
    }

    pub fn filled(dims: Dims, spacing: Spacing, fill: T) -> Result<Self> {
        if !fill.is_valid() {
            return Err(Error::invalid(format!("invalid fill value {fill:?}")));
        }
        Ok(Self::from_parts(dims, spacing, vec![fill; dims.len()]))
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(Coord) -> T) -> Result<Self> {
        let data = (0..dims.len()).map(|i| f(dims.coord(i))).collect();
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: Coord) -> Option<T> {
        self.dims.contains(c).then(|| self.data[self.dims.index(c)])
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub(crate) fn check_geometry<U>(&self, other: &VoxelGrid<U>, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "{what}: dims differ ({} vs {})",
                self.dims, other.dims
            )));
        }
        if self.spacing != other.spacing {
            return Err(Error::invalid(format!(
                "{what}: spacing differs ({:?} vs {:?})",
                self.spacing.as_array(),
                other.spacing.as_array()
            )));
        }
        Ok(())
    }

    /// Element-wise map. Fails only if `f` produces an invalid element.
    pub fn map<U: Voxel>(&self, f: impl FnMut(T) -> U) -> Result<VoxelGrid<U>> {
        VoxelGrid::new(self.dims, self.spacing, self.data.iter().copied().map(f).collect())
    }

    pub fn to_scalar(&self) -> ScalarGrid {
        VoxelGrid::from_parts(self.dims, self.spacing, self.data.iter().map(|v| v.to_f64()).collect())
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    pub fn not(&self) -> Mask {
        Mask::from_parts(self.dims, self.spacing, self.data.iter().map(|v| !v).collect())
    }

    /// `self ⊆ other` as voxel sets.
    pub fn is_subset(&self, other: &Mask) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

impl ScalarGrid {
    /// Non-zero voxels become `true`.
    pub fn to_mask(&self) -> Mask {
        Mask::from_parts(self.dims, self.spacing, self.data.iter().map(|&v| v != 0.0).collect())
    }

    /// Interprets values as non-negative integer labels.
    pub fn to_labels(&self) -> Result<LabelGrid> {
        let mut out = Vec::with_capacity(self.data.len());
        for (i, &v) in self.data.iter().enumerate() {
            if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
                return Err(Error::invalid(format!(
                    "voxel {i} holds {v}, which is not an unsigned integer label"
                )));
            }
            out.push(v as u32);
        }
        Ok(LabelGrid::from_parts(self.dims, self.spacing, out))
    }

    pub fn sum(&self) -> f64 {
        crate::numeric::sum(self.data.iter().copied())
    }
}

/// Grid of `dims` with every voxel set to `fill`.
pub fn make_grid<T: Voxel>(dims: Dims, spacing: Spacing, fill: T) -> Result<VoxelGrid<T>> {
    VoxelGrid::filled(dims, spacing, fill)
}

/// Copies a `size`-shaped window around `center`.
///
/// Output voxel `k` reads grid coordinate `center - size/2 + k` (integer
/// division), so even sizes put `center` at the high-index voxel of the central
/// pair. Reads outside the grid yield `pad`.
pub fn extract_patch<T: Voxel>(grid: &VoxelGrid<T>, center: Coord, size: [usize; 3], pad: T) -> Result<VoxelGrid<T>> {
    if !grid.dims.contains(center) {
        return Err(Error::invalid(format!(
            "patch center {:?} outside grid {}",
            <[usize; 3]>::from(center),
            grid.dims
        )));
    }
    if !pad.is_valid() {
        return Err(Error::invalid(format!("invalid pad value {pad:?}")));
    }
    let out_dims = Dims::new(size[0], size[1], size[2])?;
    let origin = [
        center.z as i64 - (size[0] / 2) as i64,
        center.y as i64 - (size[1] / 2) as i64,
        center.x as i64 - (size[2] / 2) as i64,
    ];
    let mut data = Vec::with_capacity(out_dims.len());
    for kz in 0..size[0] {
        for ky in 0..size[1] {
            for kx in 0..size[2] {
                let v = grid
                    .dims
                    .index_signed(origin[0] + kz as i64, origin[1] + ky as i64, origin[2] + kx as i64)
                    .map_or(pad, |i| grid.data[i]);
                data.push(v);
            }
        }
    }
    Ok(VoxelGrid::from_parts(out_dims, grid.spacing, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
    Xor,
    /// `a AND NOT b`
    AndNot,
}

impl BoolOp {
    #[inline]
    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            BoolOp::And => a & b,
            BoolOp::Or => a | b,
            BoolOp::Xor => a ^ b,
            BoolOp::AndNot => a & !b,
        }
    }
}

pub fn binary_combine(a: &Mask, b: &Mask, op: BoolOp) -> Result<Mask> {
    a.check_geometry(b, "binary_combine")?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| op.apply(x, y)).collect();
    Ok(Mask::from_parts(a.dims, a.spacing, data))
}
