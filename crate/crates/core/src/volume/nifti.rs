//! Minimal single-file NIfTI-1 (`.nii`, optionally gzip-wrapped) reader and
//! writer.
//!
//! Only the fields needed to recover a 3-D grid are interpreted. On disk the
//! first voxel index varies fastest; in memory the last one does, so both
//! directions transpose.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use super::{identity4, Affine, Grid3, IntensityVolume, LabelVolume, Volume, VolumeError};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file holds {0} bytes, shorter than a NIfTI-1 header")]
    TruncatedHeader(usize),
    #[error("sizeof_hdr is not 348 in either byte order")]
    BadHeaderSize,
    #[error("unsupported magic {0:?}: only single-file \"n+1\" images are supported")]
    UnsupportedMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("expected a 3-D image, header has dim[0] = {0}")]
    Dimensionality(i16),
    #[error("payload truncated: need {expected} bytes after vox_offset, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("voxel {index} holds {value}, which is not a non-negative integer label")]
    NotALabel { index: usize, value: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(#[from] VolumeError),
}

/// The interpreted subset of a NIfTI-1 header.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
    pub little_endian: bool,
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self, NiftiError> {
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::TruncatedHeader(bytes.len()));
        }
        let le = if i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
            true
        } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
            false
        } else {
            return Err(NiftiError::BadHeaderSize);
        };
        let r = Reader { bytes, le };
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[344..348]);
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = r.i16(40 + 2 * i);
            pixdim[i] = r.f32(76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (row, s) in srow.iter_mut().enumerate() {
            for (c, v) in s.iter_mut().enumerate() {
                *v = r.f32(280 + 16 * row + 4 * c);
            }
        }
        Ok(Self {
            dim,
            datatype: r.i16(70),
            bitpix: r.i16(72),
            pixdim,
            vox_offset: r.f32(108),
            scl_slope: r.f32(112),
            scl_inter: r.f32(116),
            qform_code: r.i16(252),
            sform_code: r.i16(254),
            srow,
            magic,
            little_endian: le,
        })
    }

    /// Grid described by `dim`, `pixdim` and (when `sform_code > 0`) the sform rows.
    pub fn grid(&self) -> Result<Grid3, NiftiError> {
        if self.dim[0] != 3 {
            return Err(NiftiError::Dimensionality(self.dim[0]));
        }
        let dims = [self.dim[1].max(0) as usize, self.dim[2].max(0) as usize, self.dim[3].max(0) as usize];
        if self.sform_code > 0 {
            let mut affine: Affine = identity4();
            for r in 0..3 {
                for c in 0..4 {
                    affine[r][c] = self.srow[r][c] as f64;
                }
            }
            // pixdim and the sform can disagree in the last bits; the sform wins.
            let mut spacing = [0.0; 3];
            for (a, s) in spacing.iter_mut().enumerate() {
                *s = (0..3).map(|r| affine[r][a].powi(2)).sum::<f64>().sqrt();
            }
            Ok(Grid3::new(dims, spacing, affine)?)
        } else {
            let spacing = [self.pixdim[1].abs() as f64, self.pixdim[2].abs() as f64, self.pixdim[3].abs() as f64];
            Ok(Grid3::axis_aligned(dims, spacing)?)
        }
    }

    fn bytes_per_voxel(&self) -> Result<usize, NiftiError> {
        match self.datatype {
            DT_UINT8 => Ok(1),
            DT_INT16 => Ok(2),
            DT_INT32 | DT_FLOAT32 => Ok(4),
            DT_FLOAT64 => Ok(8),
            other => Err(NiftiError::UnsupportedDatatype(other)),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    le: bool,
}

impl Reader<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        self.bytes[off..off + N].try_into().unwrap()
    }
    fn i16(&self, off: usize) -> i16 {
        let a = self.arr::<2>(off);
        if self.le { i16::from_le_bytes(a) } else { i16::from_be_bytes(a) }
    }
    fn i32(&self, off: usize) -> i32 {
        let a = self.arr::<4>(off);
        if self.le { i32::from_le_bytes(a) } else { i32::from_be_bytes(a) }
    }
    fn f32(&self, off: usize) -> f32 {
        let a = self.arr::<4>(off);
        if self.le { f32::from_le_bytes(a) } else { f32::from_be_bytes(a) }
    }
    fn f64(&self, off: usize) -> f64 {
        let a = self.arr::<8>(off);
        if self.le { f64::from_le_bytes(a) } else { f64::from_be_bytes(a) }
    }
}

fn load_bytes(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let raw = fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decodes header and scaled voxel values (in memory order) from file bytes.
pub fn decode(bytes: &[u8]) -> Result<(NiftiHeader, Grid3, Vec<f64>), NiftiError> {
    let hdr = NiftiHeader::parse(bytes)?;
    if &hdr.magic != b"n+1\0" {
        return Err(NiftiError::UnsupportedMagic(hdr.magic));
    }
    let grid = hdr.grid()?;
    let bpv = hdr.bytes_per_voxel()?;
    let offset = (hdr.vox_offset.max(HEADER_SIZE as f32)) as usize;
    let n = grid.len();
    let expected = n * bpv;
    let found = bytes.len().saturating_sub(offset);
    if found < expected {
        return Err(NiftiError::TruncatedPayload { expected, found });
    }
    let r = Reader { bytes, le: hdr.little_endian };
    let (slope, inter) = if hdr.scl_slope != 0.0 && hdr.scl_slope.is_finite() {
        (hdr.scl_slope as f64, if hdr.scl_inter.is_finite() { hdr.scl_inter as f64 } else { 0.0 })
    } else {
        (1.0, 0.0)
    };
    let [nx, ny, nz] = grid.dims();
    let mut data = vec![0.0f64; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let disk = i + nx * (j + ny * k);
                let off = offset + disk * bpv;
                let raw = match hdr.datatype {
                    DT_UINT8 => bytes[off] as f64,
                    DT_INT16 => r.i16(off) as f64,
                    DT_INT32 => r.i32(off) as f64,
                    DT_FLOAT32 => r.f32(off) as f64,
                    _ => r.f64(off),
                };
                data[grid.index(i, j, k)] = slope * raw + inter;
            }
        }
    }
    Ok((hdr, grid, data))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader, NiftiError> {
    NiftiHeader::parse(&load_bytes(path.as_ref())?)
}

pub fn read_intensity(path: impl AsRef<Path>) -> Result<IntensityVolume, NiftiError> {
    let (_, grid, data) = decode(&load_bytes(path.as_ref())?)?;
    Ok(Volume::new(grid, data.into_iter().map(|v| v as f32).collect())?)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume, NiftiError> {
    let (_, grid, data) = decode(&load_bytes(path.as_ref())?)?;
    let mut labels = Vec::with_capacity(data.len());
    for (index, &value) in data.iter().enumerate() {
        if !(value >= 0.0) || value.fract() != 0.0 || value > u32::MAX as f64 {
            return Err(NiftiError::NotALabel { index, value });
        }
        labels.push(value as u32);
    }
    Ok(Volume::new(grid, labels)?)
}

/// Serializes a float32 single-file NIfTI-1 image, little-endian, sform only.
pub fn encode(grid: &Grid3, values: impl Fn(usize) -> f32) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r'; // regular
    let dims = grid.dims();
    put_i16(&mut h, 40, 3);
    for a in 0..3 {
        put_i16(&mut h, 42 + 2 * a, dims[a] as i16);
    }
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, DT_FLOAT32);
    put_i16(&mut h, 72, 32);
    put_f32(&mut h, 76, 1.0); // qfac
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, grid.spacing()[a] as f32);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // NIFTI_UNITS_MM
    put_i16(&mut h, 252, 0);
    put_i16(&mut h, 254, 2); // NIFTI_XFORM_ALIGNED_ANAT
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut h, 280 + 16 * r + 4 * c, grid.affine()[r][c] as f32);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    // bytes 348..352: extension flag, all zero
    let [nx, ny, nz] = dims;
    h.reserve(grid.len() * 4);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                h.extend_from_slice(&values(grid.index(i, j, k)).to_le_bytes());
            }
        }
    }
    h
}

fn store(path: &Path, bytes: Vec<u8>) -> Result<(), NiftiError> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes)?;
        fs::write(path, enc.finish()?)?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn write_intensity(volume: &IntensityVolume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let data = volume.data();
    store(path.as_ref(), encode(volume.grid(), |i| data[i]))
}

pub fn write_labels(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let data = volume.data();
    store(path.as_ref(), encode(volume.grid(), |i| data[i] as f32))
}
