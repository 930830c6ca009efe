//! Binary 3D dilation and erosion.
//!
//! The public operations run on a bit-packed copy of the mask: each (z, y) row
//! is stored as 64-voxel words along x, so one step of a face-6 or full-26
//! element is a handful of shifts and boolean word ops per row. Voxels outside
//! the grid are background for both dilation and erosion, so erosion removes
//! anything touching the border.
//!
//! [`reference`] holds the per-voxel neighbourhood implementation the packed
//! path is checked against.

use serde::{Deserialize, Serialize};

use crate::grid::{binary_combine, BoolOp, Dims, Mask};

/// Structuring element of one morphological step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructElem {
    /// Centre plus the 6 face neighbours.
    #[default]
    #[serde(rename = "face6")]
    Face6,
    /// The full 3x3x3 cube.
    #[serde(rename = "full26")]
    Full26,
}

impl StructElem {
    /// Neighbour offsets (dz, dy, dx), origin excluded.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        match self {
            StructElem::Face6 => vec![[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]],
            StructElem::Full26 => {
                let mut v = Vec::with_capacity(26);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if (dz, dy, dx) != (0, 0, 0) {
                                v.push([dz, dy, dx]);
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

impl std::str::FromStr for StructElem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face6" => Ok(StructElem::Face6),
            "full26" => Ok(StructElem::Full26),
            other => Err(format!("unknown structuring element {other:?} (face6 | full26)")),
        }
    }
}

/// Mask stored as rows of 64-bit words along x. Bits past `nx` stay zero.
#[derive(Clone, Debug, PartialEq, Eq)]
struct PackedMask {
    dims: Dims,
    words: usize,
    tail: u64,
    bits: Vec<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Dilate,
    Erode,
}

impl PackedMask {
    fn from_mask(mask: &Mask) -> Self {
        let dims = mask.dims();
        let nx = dims.nx();
        let words = nx.div_ceil(64);
        let rows = dims.nz() * dims.ny();
        let mut bits = vec![0u64; rows * words];
        for (r, row) in mask.data().chunks_exact(nx).enumerate() {
            let out = &mut bits[r * words..(r + 1) * words];
            for (x, _) in row.iter().enumerate().filter(|(_, &v)| v) {
                out[x / 64] |= 1 << (x % 64);
            }
        }
        let rem = nx % 64;
        let tail = if rem == 0 { u64::MAX } else { (1u64 << rem) - 1 };
        PackedMask {
            dims,
            words,
            tail,
            bits,
        }
    }

    fn to_mask(&self, template: &Mask) -> Mask {
        let nx = self.dims.nx();
        let mut data = Vec::with_capacity(self.dims.len());
        for row in self.bits.chunks_exact(self.words) {
            data.extend((0..nx).map(|x| row[x / 64] >> (x % 64) & 1 == 1));
        }
        Mask::from_parts(self.dims, template.spacing(), data)
    }

    fn rows(&self) -> usize {
        self.dims.nz() * self.dims.ny()
    }

    fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words..(r + 1) * self.words]
    }

    /// Row index of (z, y) shifted by (dz, dy), `None` outside the grid.
    fn neighbour_row(&self, r: usize, dz: i64, dy: i64) -> Option<usize> {
        let (ny, nz) = (self.dims.ny() as i64, self.dims.nz() as i64);
        let z = (r as i64) / ny + dz;
        let y = (r as i64) % ny + dy;
        (0..nz).contains(&z).then_some(())?;
        (0..ny).contains(&y).then_some(())?;
        Some((z * ny + y) as usize)
    }

    /// `out[x] = row[x-1]`, zero shifted in at x = 0.
    #[inline]
    fn from_lower(row: &[u64], k: usize) -> u64 {
        let carry = if k > 0 { row[k - 1] >> 63 } else { 0 };
        (row[k] << 1) | carry
    }

    /// `out[x] = row[x+1]`, relies on zero tail bits.
    #[inline]
    fn from_upper(row: &[u64], k: usize) -> u64 {
        let carry = if k + 1 < row.len() { row[k + 1] << 63 } else { 0 };
        (row[k] >> 1) | carry
    }

    fn combine(step: Step, a: u64, b: u64) -> u64 {
        match step {
            Step::Dilate => a | b,
            Step::Erode => a & b,
        }
    }

    fn along_x(&self, step: Step) -> Vec<u64> {
        let mut out = vec![0u64; self.bits.len()];
        for r in 0..self.rows() {
            let row = self.row(r);
            for k in 0..self.words {
                let v = Self::combine(step, row[k], Self::from_lower(row, k));
                out[r * self.words + k] = Self::combine(step, v, Self::from_upper(row, k));
            }
            out[r * self.words + self.words - 1] &= self.tail;
        }
        out
    }

    /// Combines each row with its row neighbours at the given (dz, dy) offsets.
    fn across_rows(&self, src: &[u64], step: Step, offsets: &[(i64, i64)]) -> Vec<u64> {
        let mut out = src.to_vec();
        for r in 0..self.rows() {
            let dst = &mut out[r * self.words..(r + 1) * self.words];
            for &(dz, dy) in offsets {
                match self.neighbour_row(r, dz, dy) {
                    Some(n) => {
                        let nb = &src[n * self.words..(n + 1) * self.words];
                        for (d, &b) in dst.iter_mut().zip(nb) {
                            *d = Self::combine(step, *d, b);
                        }
                    }
                    None if step == Step::Erode => dst.fill(0),
                    None => {}
                }
            }
        }
        out
    }

    fn apply(&mut self, elem: StructElem, step: Step) {
        let x = self.along_x(step);
        self.bits = match elem {
            StructElem::Face6 => {
                // x-neighbours from the x-pass, y/z neighbours from the original rows
                let yz = self.across_rows(&self.bits, step, &[(0, -1), (0, 1), (-1, 0), (1, 0)]);
                x.iter().zip(&yz).map(|(&a, &b)| Self::combine(step, a, b)).collect()
            }
            StructElem::Full26 => {
                let xy = self.across_rows(&x, step, &[(0, -1), (0, 1)]);
                self.across_rows(&xy, step, &[(-1, 0), (1, 0)])
            }
        };
    }
}

fn iterate(mask: &Mask, elem: StructElem, times: usize, step: Step) -> Mask {
    if times == 0 {
        return mask.clone();
    }
    let mut packed = PackedMask::from_mask(mask);
    for _ in 0..times {
        packed.apply(elem, step);
    }
    packed.to_mask(mask)
}

/// `times` iterated dilations by `elem`.
pub fn dilate(mask: &Mask, elem: StructElem, times: usize) -> Mask {
    iterate(mask, elem, times, Step::Dilate)
}

/// `times` iterated erosions by `elem`; out-of-grid voxels count as background.
pub fn erode(mask: &Mask, elem: StructElem, times: usize) -> Mask {
    iterate(mask, elem, times, Step::Erode)
}

/// `dilate(mask, r_out) XOR erode(mask, r_in)`: a band straddling the mask boundary.
pub fn boundary_band(mask: &Mask, elem: StructElem, r_out: usize, r_in: usize) -> Mask {
    binary_combine(&dilate(mask, elem, r_out), &erode(mask, elem, r_in), BoolOp::Xor)
        .expect("dilation and erosion preserve geometry")
}

/// Per-voxel neighbourhood morphology, kept as the oracle for the packed path.
pub mod reference {
    use super::*;

    fn step(mask: &Mask, elem: StructElem, dilate: bool) -> Mask {
        let dims = mask.dims();
        let offsets = elem.offsets();
        let data = (0..dims.len())
            .map(|i| {
                let c = dims.coord(i);
                let at = |o: &[i64; 3]| {
                    dims.index_signed(c.z as i64 + o[0], c.y as i64 + o[1], c.x as i64 + o[2])
                        .is_some_and(|j| mask.data()[j])
                };
                if dilate {
                    mask.data()[i] || offsets.iter().any(at)
                } else {
                    mask.data()[i] && offsets.iter().all(at)
                }
            })
            .collect();
        Mask::from_parts(dims, mask.spacing(), data)
    }

    pub fn dilate(mask: &Mask, elem: StructElem, times: usize) -> Mask {
        (0..times).fold(mask.clone(), |m, _| step(&m, elem, true))
    }

    pub fn erode(mask: &Mask, elem: StructElem, times: usize) -> Mask {
        (0..times).fold(mask.clone(), |m, _| step(&m, elem, false))
    }
}
