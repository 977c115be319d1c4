//! Minimal reader for single-file, uncompressed NIfTI-1 (`n+1`).
//!
//! Only what the importer needs is decoded: dimensions, datatype, voxel size,
//! data offset and intensity scaling. Both byte orders are accepted; the
//! order is detected from `sizeof_hdr`.

use std::fs;
use std::path::Path;

use crate::error::{DataError, Result};
use crate::volume::VolumeRecord;

pub const HEADER_SIZE: usize = 348;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiType {
    U8,
    I8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl NiftiType {
    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => NiftiType::U8,
            4 => NiftiType::I16,
            8 => NiftiType::I32,
            16 => NiftiType::F32,
            64 => NiftiType::F64,
            256 => NiftiType::I8,
            512 => NiftiType::U16,
            768 => NiftiType::U32,
            other => return Err(DataError::UnsupportedDtype(format!("nifti datatype code {other}"))),
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiType::U8 | NiftiType::I8 => 1,
            NiftiType::I16 | NiftiType::U16 => 2,
            NiftiType::I32 | NiftiType::U32 | NiftiType::F32 => 4,
            NiftiType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub little_endian: bool,
    /// `[nx, ny, nz]`, x fastest in the payload.
    pub dims: [usize; 3],
    pub datatype: NiftiType,
    pub pixdim: [f64; 3],
    pub vox_offset: usize,
    pub scl_slope: f64,
    pub scl_inter: f64,
}

struct Reader<'a> {
    buf: &'a [u8],
    le: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.buf[at..at + N]);
        if !self.le {
            b.reverse();
        }
        b
    }
    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.bytes(at))
    }
    fn i32(&self, at: usize) -> i32 {
        i32::from_le_bytes(self.bytes(at))
    }
    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.bytes(at))
    }
}

pub fn parse_header(buf: &[u8]) -> Result<NiftiHeader> {
    if buf.len() < HEADER_SIZE {
        return Err(DataError::SizeMismatch { what: "nifti header".into(), expected: HEADER_SIZE, actual: buf.len() });
    }
    let le = match (
        i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]),
        i32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]),
    ) {
        (348, _) => true,
        (_, 348) => false,
        _ => return Err(DataError::Nifti("sizeof_hdr is not 348".into())),
    };
    if &buf[344..348] != b"n+1\0" {
        return Err(DataError::Nifti("only single-file n+1 images are supported".into()));
    }
    let r = Reader { buf, le };
    let rank = r.i16(40);
    if !(1..=7).contains(&rank) {
        return Err(DataError::Nifti(format!("dim[0] = {rank} is out of range")));
    }
    let mut dims = [1usize; 3];
    for (i, d) in dims.iter_mut().enumerate().take((rank as usize).min(3)) {
        let v = r.i16(42 + 2 * i);
        if v < 1 {
            return Err(DataError::Nifti(format!("dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    for i in 3..rank as usize {
        if r.i16(42 + 2 * i) > 1 {
            return Err(DataError::Nifti("only 2D and 3D images are supported".into()));
        }
    }
    let datatype = NiftiType::from_code(r.i16(70))?;
    let bitpix = r.i16(72);
    if bitpix as usize != 8 * datatype.bytes() {
        return Err(DataError::Nifti(format!("bitpix {bitpix} disagrees with {datatype:?}")));
    }
    let mut pixdim = [1.0; 3];
    for (i, p) in pixdim.iter_mut().enumerate() {
        let v = r.f32(80 + 4 * i) as f64;
        if v > 0.0 && v.is_finite() {
            *p = v;
        }
    }
    let off = r.f32(108);
    if !(off >= HEADER_SIZE as f32) || off.fract() != 0.0 {
        return Err(DataError::Nifti(format!("vox_offset {off} is not a valid byte offset")));
    }
    Ok(NiftiHeader {
        little_endian: le,
        dims,
        datatype,
        pixdim,
        vox_offset: off as usize,
        scl_slope: r.f32(112) as f64,
        scl_inter: r.f32(116) as f64,
    })
}

/// Header plus voxel values promoted to f64 with scaling applied. A zero
/// slope means no scaling.
pub fn read_nifti(path: &Path) -> Result<(NiftiHeader, Vec<f64>)> {
    let buf = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode(&buf)
}

pub fn decode(buf: &[u8]) -> Result<(NiftiHeader, Vec<f64>)> {
    let h = parse_header(buf)?;
    let n: usize = h.dims.iter().product();
    let size = h.datatype.bytes();
    let need = h.vox_offset + n * size;
    if buf.len() < need {
        return Err(DataError::SizeMismatch { what: "nifti payload".into(), expected: need, actual: buf.len() });
    }
    let r = Reader { buf, le: h.little_endian };
    let (slope, inter) =
        if h.scl_slope != 0.0 && h.scl_slope.is_finite() { (h.scl_slope, h.scl_inter) } else { (1.0, 0.0) };
    let values = (0..n)
        .map(|i| {
            let at = h.vox_offset + i * size;
            let raw = match h.datatype {
                NiftiType::U8 => buf[at] as f64,
                NiftiType::I8 => buf[at] as i8 as f64,
                NiftiType::I16 => r.i16(at) as f64,
                NiftiType::U16 => u16::from_le_bytes(r.bytes(at)) as f64,
                NiftiType::I32 => r.i32(at) as f64,
                NiftiType::U32 => u32::from_le_bytes(r.bytes(at)) as f64,
                NiftiType::F32 => r.f32(at) as f64,
                NiftiType::F64 => f64::from_le_bytes(r.bytes(at)),
            };
            raw * slope + inter
        })
        .collect();
    Ok((h, values))
}

/// Converts a NIfTI image (and optional mask of the same grid) into a
/// [`VolumeRecord`]. NIfTI stores x fastest, which is exactly the `[z, y, x]`
/// row-major layout of the container, so no voxels move.
pub fn import_nifti(image: &Path, mask: Option<&Path>, id: &str) -> Result<VolumeRecord> {
    let (h, values) = read_nifti(image)?;
    let mask_values = match mask {
        Some(p) => {
            let (mh, mv) = read_nifti(p)?;
            if mh.dims != h.dims {
                return Err(DataError::ShapeMismatch {
                    image: h.dims.iter().rev().copied().collect(),
                    mask: mh.dims.iter().rev().copied().collect(),
                });
            }
            let mut out = Vec::with_capacity(mv.len());
            for (i, v) in mv.into_iter().enumerate() {
                if v == 0.0 || v == 1.0 {
                    out.push(v as u8);
                } else {
                    return Err(DataError::MaskValue { index: i, value: v });
                }
            }
            out
        }
        None => vec![0; values.len()],
    };
    let [nx, ny, nz] = h.dims;
    let [px, py, pz] = h.pixdim;
    let image = values.into_iter().map(|v| v as f32).collect();
    VolumeRecord::new(id, [nz, ny, nx], [pz, py, px], image, mask_values)
}
