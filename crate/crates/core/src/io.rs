//! Volume files: single-file NIfTI-1 (`.nii`) and raw little-endian payload
//! with a JSON sidecar (`.raw` + `.json`).
//!
//! Only the header fields needed to place voxels in a grid are interpreted.
//! Everything else (orientation, descriptions, intent) is carried as opaque
//! header bytes so that reading and re-writing a file keeps it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, ScalarGrid, Spacing, Voxel, VoxelGrid};

pub const NIFTI1_HEADER_SIZE: usize = 348;
pub const NIFTI1_VOX_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

// byte offsets inside the NIfTI-1 header
const OFF_SIZEOF_HDR: usize = 0;
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_MAGIC: usize = 344;

const NIFTI_UNITS_MM: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            8 => Ok(Datatype::Int32),
            16 => Ok(Datatype::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn byte_size(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
        }
    }

    fn bitpix(self) -> i16 {
        (self.byte_size() * 8) as i16
    }

    /// Appends the stored bytes of `v`; false when `v` has no exact encoding.
    fn encode(self, v: f64, out: &mut Vec<u8>) -> bool {
        match self {
            Datatype::Uint8 => {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return false;
                }
                out.push(v as u8);
            }
            Datatype::Int16 => {
                if v.fract() != 0.0 || !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&v) {
                    return false;
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
            Datatype::Int32 => {
                if v.fract() != 0.0 || !(f64::from(i32::MIN)..=f64::from(i32::MAX)).contains(&v) {
                    return false;
                }
                out.extend_from_slice(&(v as i32).to_le_bytes());
            }
            Datatype::Float32 => {
                let f = v as f32;
                if f64::from(f) != v {
                    return false;
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        true
    }

    fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            Datatype::Uint8 => bytes.iter().map(|&b| f64::from(b)).collect(),
            Datatype::Int16 => bytes
                .chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
                .collect(),
            Datatype::Int32 => bytes
                .chunks_exact(4)
                .map(|c| f64::from(i32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect(),
            Datatype::Float32 => bytes
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceFormat {
    Nifti1,
    RawJson,
}

impl SourceFormat {
    /// `.nii` is NIfTI-1; `.raw` and `.json` name the raw+sidecar pair.
    pub fn detect(path: &Path) -> Result<Self> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".nii.gz") {
            return Err(Error::Format(format!(
                "{}: compressed NIfTI is not supported, decompress first",
                path.display()
            )));
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("nii") => Ok(SourceFormat::Nifti1),
            Some("raw") | Some("json") => Ok(SourceFormat::RawJson),
            _ => Err(Error::Format(format!(
                "{}: unknown volume extension (expected .nii, .raw or .json)",
                path.display()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeMeta {
    pub dims: Dims,
    pub spacing: Spacing,
    pub datatype: Datatype,
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub source_format: SourceFormat,
    /// Original NIfTI header, reused on write so uninterpreted fields survive.
    pub header: Option<Box<[u8; NIFTI1_HEADER_SIZE]>>,
}

impl VolumeMeta {
    pub fn new(dims: Dims, spacing: Spacing, datatype: Datatype) -> Self {
        VolumeMeta {
            dims,
            spacing,
            datatype,
            scl_slope: 1.0,
            scl_inter: 0.0,
            source_format: SourceFormat::Nifti1,
            header: None,
        }
    }

    pub fn for_grid<T>(grid: &VoxelGrid<T>, datatype: Datatype) -> Self
    where
        T: Voxel,
    {
        VolumeMeta::new(grid.dims(), grid.spacing(), datatype)
    }

    fn is_scaled(&self) -> bool {
        self.scl_slope != 0.0 && !(self.scl_slope == 1.0 && self.scl_inter == 0.0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    datatype: Datatype,
}

fn raw_pair(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("raw"), path.with_extension("json"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn le_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn le_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn le_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Widens through the shortest decimal form so that a spacing written as
/// `0.78` comes back as the f64 `0.78` rather than `0.7799999713897705`.
fn widen_decimal(v: f32) -> f64 {
    v.to_string().parse().unwrap_or(f64::from(v))
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_i32(b: &mut [u8], off: usize, v: i32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Reads a volume, applying `scl_slope`/`scl_inter` when the slope is non-zero.
pub fn read_volume(path: impl AsRef<Path>) -> Result<(ScalarGrid, VolumeMeta)> {
    let path = path.as_ref();
    match SourceFormat::detect(path)? {
        SourceFormat::Nifti1 => read_nifti(path),
        SourceFormat::RawJson => read_raw(path),
    }
}

fn read_nifti(path: &Path) -> Result<(ScalarGrid, VolumeMeta)> {
    let bytes = read_bytes(path)?;
    let ctx = |msg: String| format!("{}: {msg}", path.display());
    if bytes.len() < NIFTI1_HEADER_SIZE {
        return Err(Error::CorruptFile(ctx(format!(
            "{} bytes is shorter than a NIfTI-1 header",
            bytes.len()
        ))));
    }
    let sizeof_hdr = le_i32(&bytes, OFF_SIZEOF_HDR);
    if sizeof_hdr != NIFTI1_HEADER_SIZE as i32 {
        let msg = if sizeof_hdr.swap_bytes() == NIFTI1_HEADER_SIZE as i32 {
            "header is byte-swapped (big-endian); only little-endian files are supported".to_string()
        } else {
            format!("sizeof_hdr is {sizeof_hdr}, expected 348")
        };
        return Err(Error::Format(ctx(msg)));
    }
    let ndim = le_i16(&bytes, OFF_DIM);
    if !(1..=7).contains(&ndim) {
        let msg = if (1..=7).contains(&ndim.swap_bytes()) {
            format!("dim[0] = {ndim} is implausible; header appears byte-swapped")
        } else {
            format!("dim[0] = {ndim} is out of range 1..=7")
        };
        return Err(Error::Format(ctx(msg)));
    }
    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC_SINGLE {
        return Err(Error::Format(ctx(format!(
            "magic {:?} is not single-file NIfTI-1 \"n+1\\0\"",
            String::from_utf8_lossy(&bytes[OFF_MAGIC..OFF_MAGIC + 4])
        ))));
    }
    let datatype = Datatype::from_code(le_i16(&bytes, OFF_DATATYPE))?;

    let mut extent = [1usize; 3];
    for (axis, e) in extent.iter_mut().enumerate().take(ndim.min(3) as usize) {
        let d = le_i16(&bytes, OFF_DIM + 2 * (axis + 1));
        if d <= 0 {
            return Err(Error::Format(ctx(format!("dim[{}] = {d} is not positive", axis + 1))));
        }
        *e = d as usize;
    }
    for axis in 4..=ndim as usize {
        let d = le_i16(&bytes, OFF_DIM + 2 * axis);
        if d > 1 {
            return Err(Error::Format(ctx(format!(
                "dim[{axis}] = {d}; only 3D volumes are supported"
            ))));
        }
    }
    let [nx, ny, nz] = extent;
    let dims = Dims::new(nz, ny, nx)?;

    let mut pix = [1.0f64; 3];
    for (axis, p) in pix.iter_mut().enumerate().take(ndim.min(3) as usize) {
        *p = widen_decimal(le_f32(&bytes, OFF_PIXDIM + 4 * (axis + 1)).abs());
    }
    let spacing = Spacing::new(pix[2], pix[1], pix[0])
        .map_err(|_| Error::Format(ctx(format!("pixdim[1..3] = {pix:?} is not a valid spacing"))))?;

    let vox_offset = le_f32(&bytes, OFF_VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset.fract() == 0.0 && vox_offset >= NIFTI1_VOX_OFFSET as f32) {
        return Err(Error::Format(ctx(format!("vox_offset {vox_offset} is invalid"))));
    }
    let start = vox_offset as usize;
    let need = dims.len() * datatype.byte_size();
    if bytes.len() < start + need {
        return Err(Error::CorruptFile(ctx(format!(
            "payload holds {} bytes, {need} required for {dims} {:?}",
            bytes.len().saturating_sub(start),
            datatype
        ))));
    }

    let scl_slope = f64::from(le_f32(&bytes, OFF_SCL_SLOPE));
    let scl_inter = f64::from(le_f32(&bytes, OFF_SCL_INTER));
    let mut header = Box::new([0u8; NIFTI1_HEADER_SIZE]);
    header.copy_from_slice(&bytes[..NIFTI1_HEADER_SIZE]);
    let meta = VolumeMeta {
        dims,
        spacing,
        datatype,
        scl_slope,
        scl_inter,
        source_format: SourceFormat::Nifti1,
        header: Some(header),
    };
    let grid = decode_payload(&bytes[start..start + need], &meta, path)?;
    Ok((grid, meta))
}

fn read_raw(path: &Path) -> Result<(ScalarGrid, VolumeMeta)> {
    let (raw_path, json_path) = raw_pair(path);
    let sidecar: Sidecar = serde_json::from_slice(&read_bytes(&json_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", json_path.display())))?;
    let dims = Dims::new(sidecar.dims[0], sidecar.dims[1], sidecar.dims[2])?;
    let spacing = Spacing::new(sidecar.spacing[0], sidecar.spacing[1], sidecar.spacing[2])?;
    let bytes = read_bytes(&raw_path)?;
    let need = dims.len() * sidecar.datatype.byte_size();
    if bytes.len() != need {
        return Err(Error::CorruptFile(format!(
            "{}: payload holds {} bytes, {need} expected",
            raw_path.display(),
            bytes.len()
        )));
    }
    let meta = VolumeMeta {
        dims,
        spacing,
        datatype: sidecar.datatype,
        scl_slope: 0.0,
        scl_inter: 0.0,
        source_format: SourceFormat::RawJson,
        header: None,
    };
    let grid = decode_payload(&bytes, &meta, &raw_path)?;
    Ok((grid, meta))
}

fn decode_payload(bytes: &[u8], meta: &VolumeMeta, path: &Path) -> Result<ScalarGrid> {
    let mut values = meta.datatype.decode(bytes);
    if meta.is_scaled() && meta.scl_slope.is_finite() {
        let (m, b) = (meta.scl_slope, meta.scl_inter);
        values.iter_mut().for_each(|v| *v = *v * m + b);
    }
    ScalarGrid::new(meta.dims, meta.spacing, values).map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))
}

/// Writes `grid` in the format implied by `path`'s extension.
///
/// Geometry comes from the grid. `meta` supplies the datatype, scaling and
/// (for NIfTI) any header bytes to carry over. Values that the datatype cannot
/// hold exactly are rejected.
pub fn write_volume<T: Voxel>(grid: &VoxelGrid<T>, meta: &VolumeMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = SourceFormat::detect(path)?;
    let payload = encode_payload(grid, meta, format)?;
    match format {
        SourceFormat::Nifti1 => {
            let mut out = Vec::with_capacity(NIFTI1_VOX_OFFSET + payload.len());
            out.extend_from_slice(&nifti_header(grid.dims(), grid.spacing(), meta)[..]);
            out.extend_from_slice(&[0u8; 4]);
            out.extend_from_slice(&payload);
            write_bytes(path, &out)
        }
        SourceFormat::RawJson => {
            let (raw_path, json_path) = raw_pair(path);
            let sidecar = Sidecar {
                dims: grid.dims().as_array(),
                spacing: grid.spacing().as_array(),
                datatype: meta.datatype,
            };
            write_bytes(&raw_path, &payload)?;
            let mut json = serde_json::to_vec(&sidecar)?;
            json.push(b'\n');
            write_bytes(&json_path, &json)
        }
    }
}

/// Writes with a fresh header of the given datatype.
pub fn save<T: Voxel>(grid: &VoxelGrid<T>, datatype: Datatype, path: impl AsRef<Path>) -> Result<()> {
    write_volume(grid, &VolumeMeta::for_grid(grid, datatype), path)
}

fn encode_payload<T: Voxel>(grid: &VoxelGrid<T>, meta: &VolumeMeta, format: SourceFormat) -> Result<Vec<u8>> {
    let dt = meta.datatype;
    let scaled = format == SourceFormat::Nifti1 && meta.is_scaled();
    let (m, b) = (f64::from(meta.scl_slope as f32), f64::from(meta.scl_inter as f32));
    let mut out = Vec::with_capacity(grid.len() * dt.byte_size());
    for (i, v) in grid.data().iter().enumerate() {
        let v = v.to_f64();
        let stored = if scaled { (v - b) / m } else { v };
        let ok = (!scaled || stored * m + b == v) && dt.encode(stored, &mut out);
        if !ok {
            return Err(Error::invalid(format!(
                "voxel {i} value {v} cannot be stored losslessly as {dt:?}"
            )));
        }
    }
    Ok(out)
}

fn nifti_header(dims: Dims, spacing: Spacing, meta: &VolumeMeta) -> Box<[u8; NIFTI1_HEADER_SIZE]> {
    let mut h = match &meta.header {
        Some(h) => h.clone(),
        None => {
            let mut h = Box::new([0u8; NIFTI1_HEADER_SIZE]);
            put_f32(&mut h[..], OFF_PIXDIM, 1.0);
            h[OFF_XYZT_UNITS] = NIFTI_UNITS_MM;
            h
        }
    };
    put_i32(&mut h[..], OFF_SIZEOF_HDR, NIFTI1_HEADER_SIZE as i32);
    let extent = [3, dims.nx(), dims.ny(), dims.nz(), 1, 1, 1, 1];
    for (k, &d) in extent.iter().enumerate() {
        put_i16(&mut h[..], OFF_DIM + 2 * k, d as i16);
    }
    put_i16(&mut h[..], OFF_DATATYPE, meta.datatype.code());
    put_i16(&mut h[..], OFF_BITPIX, meta.datatype.bitpix());
    put_f32(&mut h[..], OFF_PIXDIM + 4, spacing.sx() as f32);
    put_f32(&mut h[..], OFF_PIXDIM + 8, spacing.sy() as f32);
    put_f32(&mut h[..], OFF_PIXDIM + 12, spacing.sz() as f32);
    put_f32(&mut h[..], OFF_VOX_OFFSET, NIFTI1_VOX_OFFSET as f32);
    let (slope, inter) = if meta.is_scaled() {
        (meta.scl_slope as f32, meta.scl_inter as f32)
    } else {
        (1.0, 0.0)
    };
    put_f32(&mut h[..], OFF_SCL_SLOPE, slope);
    put_f32(&mut h[..], OFF_SCL_INTER, inter);
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Coord, Mask};
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn grid_465() -> ScalarGrid {
        let d = Dims::new(4, 5, 6).unwrap();
        let s = Spacing::new(5.0, 0.78, 0.78).unwrap();
        ScalarGrid::from_fn(d, s, |c| (c.z * 100 + c.y * 10 + c.x) as f64 * 0.25 - 7.5).unwrap()
    }

    #[test]
    fn header_layout_uses_xyz_order() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("g.nii");
        let g = grid_465();
        save(&g, Datatype::Float32, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 352 + 4 * 120);
        assert_eq!(le_i32(&bytes, 0), 348);
        let dim: Vec<i16> = (0..4).map(|k| le_i16(&bytes, 40 + 2 * k)).collect();
        assert_eq!(dim, vec![3, 6, 5, 4]);
        assert_eq!(le_f32(&bytes, 80), 0.78);
        assert_eq!(le_f32(&bytes, 84), 0.78);
        assert_eq!(le_f32(&bytes, 88), 5.0);
        assert_eq!(le_f32(&bytes, 108), 352.0);
        assert_eq!(le_i16(&bytes, 70), 16);
        assert_eq!(le_i16(&bytes, 72), 32);
        assert_eq!(&bytes[344..348], b"n+1\0");
        // x fastest: voxel (0,0,1) directly follows (0,0,0)
        assert_eq!(le_f32(&bytes, 356), (1.0 * 0.25 - 7.5) as f32);

        let (back, meta) = read_volume(&p).unwrap();
        assert_eq!(meta.dims, g.dims());
        assert_eq!(back.spacing(), g.spacing());
        assert_eq!(back.data(), g.data());
    }

    #[test]
    fn float32_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let d = Dims::new(3, 4, 5).unwrap();
        let vals: Vec<f64> = (0..d.len())
            .map(|i| f64::from((i as f32 * 0.731).sin() * 1e3))
            .collect();
        let g = ScalarGrid::new(d, Spacing::new(2.0, 0.5, 0.25).unwrap(), vals).unwrap();
        for name in ["a.nii", "a.raw"] {
            let p = dir.path().join(name);
            save(&g, Datatype::Float32, &p).unwrap();
            let (back, _) = read_volume(&p).unwrap();
            assert_eq!(back, g, "{name}");
        }
    }

    #[test]
    fn mask_encodes_as_uint8_zero_one() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.nii");
        let m = Mask::from_fn(Dims::new(2, 2, 2).unwrap(), Spacing::isotropic(), |c| c.x == 1).unwrap();
        save(&m, Datatype::Uint8, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(le_i16(&bytes, 70), 2);
        assert_eq!(&bytes[352..], &[0, 1, 0, 1, 0, 1, 0, 1]);
        let (back, _) = read_volume(&p).unwrap();
        assert_eq!(back.to_mask(), m);
    }

    #[test]
    fn zero_slope_reads_unscaled() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.nii");
        let g = ScalarGrid::from_fn(Dims::new(1, 2, 3).unwrap(), Spacing::isotropic(), |c| {
            (c.x + 3 * c.y) as f64
        })
        .unwrap();
        save(&g, Datatype::Uint8, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        put_f32(&mut bytes, OFF_SCL_SLOPE, 0.0);
        put_f32(&mut bytes, OFF_SCL_INTER, 100.0);
        fs::write(&p, &bytes).unwrap();
        let (back, meta) = read_volume(&p).unwrap();
        assert_eq!(meta.scl_slope, 0.0);
        assert_eq!(back.data(), g.data());
    }

    #[test]
    fn slope_and_intercept_applied() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.nii");
        let g = ScalarGrid::from_fn(Dims::new(1, 1, 4).unwrap(), Spacing::isotropic(), |c| {
            c.x as f64 * 2.0 - 1024.0
        })
        .unwrap();
        let mut meta = VolumeMeta::for_grid(&g, Datatype::Int16);
        meta.scl_slope = 2.0;
        meta.scl_inter = -1024.0;
        write_volume(&g, &meta, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(le_i16(&bytes, 352 + 2), 1);
        let (back, _) = read_volume(&p).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn wrong_sizeof_hdr_is_format_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.nii");
        save(&grid_465(), Datatype::Float32, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        put_i32(&mut bytes, 0, 540);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format(_))));
    }

    #[test]
    fn byte_swapped_header_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("be.nii");
        save(&grid_465(), Datatype::Float32, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[0..4].copy_from_slice(&348i32.to_be_bytes());
        fs::write(&p, &bytes).unwrap();
        let err = read_volume(&p).unwrap_err().to_string();
        assert!(err.contains("byte-swapped"), "{err}");

        let mut bytes = fs::read(&p).unwrap();
        bytes[0..4].copy_from_slice(&348i32.to_le_bytes());
        bytes[40..42].copy_from_slice(&3i16.to_be_bytes());
        fs::write(&p, &bytes).unwrap();
        let err = read_volume(&p).unwrap_err();
        assert!(
            matches!(err, Error::Format(ref m) if m.contains("byte-swapped")),
            "{err}"
        );
    }

    #[test]
    fn unsupported_datatype_and_truncation() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.nii");
        save(&grid_465(), Datatype::Float32, &p).unwrap();
        let good = fs::read(&p).unwrap();

        let mut bytes = good.clone();
        put_i16(&mut bytes, OFF_DATATYPE, 64);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::UnsupportedDatatype(64))));

        fs::write(&p, &good[..good.len() - 3]).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::CorruptFile(_))));

        fs::write(&p, &good[..100]).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn four_d_and_bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.nii");
        save(&grid_465(), Datatype::Float32, &p).unwrap();
        let good = fs::read(&p).unwrap();
        let mut bytes = good.clone();
        put_i16(&mut bytes, OFF_DIM, 4);
        put_i16(&mut bytes, OFF_DIM + 8, 2);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format(_))));
        let mut bytes = good;
        bytes[344..348].copy_from_slice(b"ni1\0");
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format(_))));
    }

    #[test]
    fn lossy_datatype_request_rejected() {
        let dir = tempdir().unwrap();
        let g = grid_465();
        assert!(matches!(
            save(&g, Datatype::Int16, dir.path().join("a.nii")),
            Err(Error::InvalidArgument(_))
        ));
        let big = ScalarGrid::filled(g.dims(), g.spacing(), 300.0).unwrap();
        assert!(save(&big, Datatype::Uint8, dir.path().join("b.nii")).is_err());
        let fine = ScalarGrid::filled(g.dims(), g.spacing(), 0.1).unwrap();
        assert!(save(&fine, Datatype::Float32, dir.path().join("c.nii")).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let g = grid_465();
        let err = save(&g, Datatype::Float32, "/nonexistent-dir/x.nii").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(matches!(read_volume("/nonexistent-dir/x.nii"), Err(Error::Io { .. })));
        assert!(matches!(read_volume("x.nii.gz"), Err(Error::Format(_))));
    }

    #[test]
    fn opaque_header_fields_preserved() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("o.nii");
        let q = dir.path().join("o2.nii");
        let g = grid_465();
        save(&g, Datatype::Float32, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        put_i16(&mut bytes, 254, 1); // sform_code
        put_f32(&mut bytes, 280, -0.78); // srow_x[0]
        bytes[148..155].copy_from_slice(b"phantom");
        fs::write(&p, &bytes).unwrap();
        let (grid, meta) = read_volume(&p).unwrap();
        write_volume(&grid, &meta, &q).unwrap();
        assert_eq!(fs::read(&q).unwrap(), bytes);
    }

    #[test]
    fn raw_sidecar_schema() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v.raw");
        let g = grid_465();
        save(&g, Datatype::Float32, &p).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("v.json")).unwrap()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"dims": [4, 5, 6], "spacing": [5.0, 0.78, 0.78], "datatype": "float32"})
        );
        let (back, meta) = read_volume(dir.path().join("v.json")).unwrap();
        assert_eq!(meta.source_format, SourceFormat::RawJson);
        assert_eq!(back.get(Coord::new(3, 4, 5)), g.get(Coord::new(3, 4, 5)));
        assert_eq!(back, g);
    }

    fn arb_values(dt: Datatype, n: usize) -> BoxedStrategy<Vec<f64>> {
        match dt {
            Datatype::Uint8 => proptest::collection::vec(any::<u8>().prop_map(f64::from), n).boxed(),
            Datatype::Int16 => proptest::collection::vec(any::<i16>().prop_map(f64::from), n).boxed(),
            Datatype::Int32 => proptest::collection::vec(any::<i32>().prop_map(f64::from), n).boxed(),
            Datatype::Float32 => proptest::collection::vec(
                any::<f32>()
                    .prop_filter("finite", |v| v.is_finite())
                    .prop_map(f64::from),
                n,
            )
            .boxed(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_all_datatypes(
            (dt, z, y, x, vals) in prop_oneof![
                Just(Datatype::Uint8), Just(Datatype::Int16), Just(Datatype::Int32), Just(Datatype::Float32)
            ]
            .prop_flat_map(|dt| (Just(dt), 1usize..5, 1usize..5, 1usize..5))
            .prop_flat_map(|(dt, z, y, x)| (Just(dt), Just(z), Just(y), Just(x), arb_values(dt, z * y * x))),
            raw in any::<bool>(),
        ) {
            let dir = tempdir().unwrap();
            let g = ScalarGrid::new(Dims::new(z, y, x).unwrap(), Spacing::new(1.5, 0.7, 0.3).unwrap(), vals).unwrap();
            let p = dir.path().join(if raw { "v.raw" } else { "v.nii" });
            save(&g, dt, &p).unwrap();
            let (back, meta) = read_volume(&p).unwrap();
            prop_assert_eq!(meta.datatype, dt);
            prop_assert_eq!(back.spacing(), g.spacing());
            prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
