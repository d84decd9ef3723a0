//! Minimal NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Only what the pipeline needs: 3D scalar images, the common integer and
//! float datatypes, `scl_slope`/`scl_inter`, and qform/sform geometry.
//! Decoding never trusts the header for allocation sizes; the data section
//! must actually be present before anything is allocated.

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use std::io::{Read, Write};
use thiserror::Error;

use crate::grid::Grid;

pub const HEADER_SIZE: usize = 348;
const WRITE_VOX_OFFSET: usize = 352;
const MAX_DECOMPRESSED: u64 = 1 << 31;

#[derive(Debug, Error, PartialEq)]
pub enum NiftiError {
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dimensionality: {0}D image (only 3D scalar volumes are accepted)")]
    UnsupportedDimensionality(usize),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("gzip stream could not be decompressed: {0}")]
    Gzip(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        Ok(match code {
            2 => Datatype::U8,
            4 => Datatype::I16,
            8 => Datatype::I32,
            16 => Datatype::F32,
            64 => Datatype::F64,
            256 => Datatype::I8,
            512 => Datatype::U16,
            768 => Datatype::U32,
            other => return Err(NiftiError::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::I32 => 8,
            Datatype::F32 => 16,
            Datatype::F64 => 64,
            Datatype::I8 => 256,
            Datatype::U16 => 512,
            Datatype::U32 => 768,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::U8 | Datatype::I8 => 1,
            Datatype::I16 | Datatype::U16 => 2,
            Datatype::I32 | Datatype::U32 | Datatype::F32 => 4,
            Datatype::F64 => 8,
        }
    }
}

/// The header fields the pipeline reads.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub endian: Endian,
    /// `dim[0]`.
    pub ndim: usize,
    pub dims: [usize; 3],
    pub datatype: Datatype,
    pub pixdim: [f32; 8],
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
}

/// Decoded voxels in file order plus the voxel-to-world affine (mm).
#[derive(Debug, Clone)]
pub struct NiftiImage {
    pub header: NiftiHeader,
    pub data: Vec<f32>,
    /// Rows of the 3x4 voxel-to-world matrix in millimetres.
    pub affine: [[f64; 4]; 3],
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn u32_bytes(&self, off: usize) -> [u8; 4] {
        let mut b = [0u8; 4];
        b.copy_from_slice(&self.bytes[off..off + 4]);
        b
    }

    fn i32(&self, off: usize) -> i32 {
        let b = self.u32_bytes(off);
        match self.endian {
            Endian::Little => i32::from_le_bytes(b),
            Endian::Big => i32::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = self.u32_bytes(off);
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Transparently gunzip `bytes` when they start with the gzip magic.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>, NiftiError> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .take(MAX_DECOMPRESSED)
            .read_to_end(&mut out)
            .map_err(|e| NiftiError::Gzip(e.to_string()))?;
        Ok(std::borrow::Cow::Owned(out))
    } else {
        Ok(std::borrow::Cow::Borrowed(bytes))
    }
}

/// Parse and validate the 348-byte header at the start of `bytes`
/// (already decompressed).
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::MalformedHeader(format!(
            "file too short for a NIfTI-1 header ({} bytes)",
            bytes.len()
        )));
    }
    let le = Reader {
        bytes,
        endian: Endian::Little,
    };
    let endian = if le.i32(0) == HEADER_SIZE as i32 {
        Endian::Little
    } else if (Reader {
        bytes,
        endian: Endian::Big,
    })
    .i32(0)
        == HEADER_SIZE as i32
    {
        Endian::Big
    } else {
        return Err(NiftiError::MalformedHeader("sizeof_hdr is not 348".into()));
    };
    let r = Reader { bytes, endian };

    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(NiftiError::MalformedHeader(
                "detached .hdr/.img pairs are not supported".into(),
            ))
        }
        other => {
            return Err(NiftiError::MalformedHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    }

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(NiftiError::MalformedHeader(format!("dim[0] = {ndim}")));
    }
    let ndim = ndim as usize;
    let mut dim = [1i64; 8];
    for (d, slot) in dim.iter_mut().enumerate().take(ndim + 1).skip(1) {
        let v = r.i16(40 + 2 * d) as i64;
        if v < 1 {
            return Err(NiftiError::MalformedHeader(format!("dim[{d}] = {v}")));
        }
        *slot = v;
    }
    if ndim < 3 {
        return Err(NiftiError::UnsupportedDimensionality(ndim));
    }
    if dim[4..=ndim.max(3)].iter().any(|&d| d > 1) {
        return Err(NiftiError::UnsupportedDimensionality(ndim));
    }

    let datatype = Datatype::from_code(r.i16(70))?;
    let mut pixdim = [0f32; 8];
    for (d, slot) in pixdim.iter_mut().enumerate() {
        *slot = r.f32(76 + 4 * d);
    }
    let vox_offset = r.f32(108);
    if !vox_offset.is_finite() || vox_offset < HEADER_SIZE as f32 || vox_offset > 1.0e9 {
        return Err(NiftiError::MalformedHeader(format!(
            "vox_offset = {vox_offset}"
        )));
    }
    let mut quatern = [0f32; 3];
    let mut qoffset = [0f32; 3];
    for a in 0..3 {
        quatern[a] = r.f32(256 + 4 * a);
        qoffset[a] = r.f32(268 + 4 * a);
    }
    let mut srow = [[0f32; 4]; 3];
    for (row, out) in srow.iter_mut().enumerate() {
        for (c, v) in out.iter_mut().enumerate() {
            *v = r.f32(280 + 16 * row + 4 * c);
        }
    }

    Ok(NiftiHeader {
        endian,
        ndim,
        dims: [dim[1] as usize, dim[2] as usize, dim[3] as usize],
        datatype,
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        xyzt_units: bytes[123],
        qform_code: r.i16(252),
        sform_code: r.i16(254),
        quatern,
        qoffset,
        srow,
    })
}

fn unit_scale(xyzt_units: u8) -> f64 {
    match xyzt_units & 0x07 {
        1 => 1000.0,
        3 => 0.001,
        _ => 1.0,
    }
}

fn finite_or(v: f32, fallback: f64) -> f64 {
    if v.is_finite() {
        v as f64
    } else {
        fallback
    }
}

/// Voxel-to-world matrix: sform when set, else qform, else scaled identity.
pub fn affine(h: &NiftiHeader) -> Result<[[f64; 4]; 3], NiftiError> {
    let scale = unit_scale(h.xyzt_units);
    let pix = |a: usize| -> f64 {
        let v = finite_or(h.pixdim[a], 1.0).abs();
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let mut m = [[0f64; 4]; 3];
    if h.sform_code > 0 {
        for r in 0..3 {
            for c in 0..4 {
                m[r][c] = h.srow[r][c] as f64;
            }
        }
    } else if h.qform_code > 0 {
        let (mut b, mut c, mut d) = (
            h.quatern[0] as f64,
            h.quatern[1] as f64,
            h.quatern[2] as f64,
        );
        let s = b * b + c * c + d * d;
        let a = if s > 1.0 {
            let n = s.sqrt();
            b /= n;
            c /= n;
            d /= n;
            0.0
        } else {
            (1.0 - s).sqrt()
        };
        let rot = [
            [
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
            ],
            [
                2.0 * (b * c + a * d),
                a * a + c * c - b * b - d * d,
                2.0 * (c * d - a * b),
            ],
            [
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a + d * d - c * c - b * b,
            ],
        ];
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let sc = [pix(1), pix(2), pix(3) * qfac];
        for r in 0..3 {
            for col in 0..3 {
                m[r][col] = rot[r][col] * sc[col];
            }
            m[r][3] = h.qoffset[r] as f64;
        }
    } else {
        m[0][0] = pix(1);
        m[1][1] = pix(2);
        m[2][2] = pix(3);
    }
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            if !v.is_finite() {
                return Err(NiftiError::MalformedHeader(
                    "non-finite orientation matrix".into(),
                ));
            }
            *v *= scale;
        }
    }
    Ok(m)
}

/// Decode a complete NIfTI-1 file (optionally gzip-compressed).
pub fn decode(bytes: &[u8]) -> Result<NiftiImage, NiftiError> {
    let bytes = maybe_gunzip(bytes)?;
    let header = parse_header(&bytes)?;
    let n = header.dims[0]
        .checked_mul(header.dims[1])
        .and_then(|v| v.checked_mul(header.dims[2]))
        .ok_or_else(|| NiftiError::MalformedHeader("voxel count overflows".into()))?;
    let elem = header.datatype.size();
    let need = n
        .checked_mul(elem)
        .and_then(|v| v.checked_add(header.vox_offset))
        .ok_or_else(|| NiftiError::MalformedHeader("data size overflows".into()))?;
    if bytes.len() < need {
        return Err(NiftiError::MalformedHeader(format!(
            "data section truncated: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    let raw = &bytes[header.vox_offset..need];
    let slope = header.scl_slope;
    let (slope, inter) = if slope != 0.0 && slope.is_finite() && header.scl_inter.is_finite() {
        (slope as f64, header.scl_inter as f64)
    } else {
        (1.0, 0.0)
    };
    let big = header.endian == Endian::Big;
    let data: Vec<f32> = raw
        .chunks_exact(elem)
        .map(|c| {
            let v: f64 = match header.datatype {
                Datatype::U8 => c[0] as f64,
                Datatype::I8 => c[0] as i8 as f64,
                Datatype::I16 => {
                    let b = [c[0], c[1]];
                    (if big { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }) as f64
                }
                Datatype::U16 => {
                    let b = [c[0], c[1]];
                    (if big { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) }) as f64
                }
                Datatype::I32 => {
                    let b = [c[0], c[1], c[2], c[3]];
                    (if big { i32::from_be_bytes(b) } else { i32::from_le_bytes(b) }) as f64
                }
                Datatype::U32 => {
                    let b = [c[0], c[1], c[2], c[3]];
                    (if big { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) }) as f64
                }
                Datatype::F32 => {
                    let b = [c[0], c[1], c[2], c[3]];
                    (if big { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }) as f64
                }
                Datatype::F64 => {
                    let mut b = [0u8; 8];
                    b.copy_from_slice(c);
                    if big {
                        f64::from_be_bytes(b)
                    } else {
                        f64::from_le_bytes(b)
                    }
                }
            };
            (v * slope + inter) as f32
        })
        .collect();
    let affine = affine(&header)?;
    Ok(NiftiImage {
        header,
        data,
        affine,
    })
}

/// Voxel payload for [`encode`].
pub enum VoxelData<'a> {
    F32(&'a [f32]),
    U8(&'a [u8]),
}

/// Encode an axis-aligned volume as an uncompressed little-endian NIfTI-1 file.
///
/// Both qform (identity rotation) and sform carry the grid's spacing and origin.
pub fn encode(grid: &Grid, data: VoxelData<'_>) -> Vec<u8> {
    let (datatype, bitpix, payload_len) = match &data {
        VoxelData::F32(v) => (Datatype::F32, 32i16, v.len() * 4),
        VoxelData::U8(v) => (Datatype::U8, 8i16, v.len()),
    };
    let mut h = vec![0u8; WRITE_VOX_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| {
        h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    };
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| {
        h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    };
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    put_i16(&mut h, 40, 3);
    for a in 0..3 {
        put_i16(&mut h, 42 + 2 * a, grid.dims[a].min(i16::MAX as usize) as i16);
    }
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, datatype.code());
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, grid.spacing[a] as f32);
    }
    put_f32(&mut h, 108, WRITE_VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    // mm + sec
    h[123] = 2 | 8;
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for a in 0..3 {
        put_f32(&mut h, 268 + 4 * a, grid.origin[a] as f32);
    }
    for row in 0..3 {
        for c in 0..3 {
            let v = if row == c { grid.spacing[row] } else { 0.0 };
            put_f32(&mut h, 280 + 16 * row + 4 * c, v as f32);
        }
        put_f32(&mut h, 280 + 16 * row + 12, grid.origin[row] as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h.reserve(payload_len);
    match data {
        VoxelData::F32(v) => {
            for x in v {
                h.extend_from_slice(&x.to_le_bytes());
            }
        }
        VoxelData::U8(v) => h.extend_from_slice(v),
    }
    h
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Reorder file-order voxels into the canonical RAS lattice.
///
/// Each voxel axis is assigned to the world axis it is most aligned with and
/// flipped when it points in the negative direction; any residual obliquity is
/// dropped. Returns the canonical grid, the reordered voxels, and the source
/// orientation code (e.g. `"LPS"`).
pub fn canonicalize(
    dims: [usize; 3],
    data: &[f32],
    affine: &[[f64; 4]; 3],
) -> Result<(Grid, Vec<f32>, String), NiftiError> {
    let col = |a: usize| [affine[0][a], affine[1][a], affine[2][a]];
    let norms: Vec<f64> = (0..3)
        .map(|a| {
            let c = col(a);
            (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
        })
        .collect();
    if norms.iter().any(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(NiftiError::MalformedHeader(
            "degenerate voxel-to-world matrix".into(),
        ));
    }
    // Greedy assignment by decreasing alignment; ties resolved by index order.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(9);
    for a in 0..3 {
        let c = col(a);
        for (w, cw) in c.iter().enumerate() {
            pairs.push((cw.abs() / norms[a], a, w));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut world_of = [usize::MAX; 3];
    let mut src_of = [usize::MAX; 3];
    for (_, a, w) in pairs {
        if world_of[a] == usize::MAX && src_of[w] == usize::MAX {
            world_of[a] = w;
            src_of[w] = a;
        }
    }
    let flip: [bool; 3] = std::array::from_fn(|w| col(src_of[w])[w] < 0.0);

    const POS: [char; 3] = ['R', 'A', 'S'];
    const NEG: [char; 3] = ['L', 'P', 'I'];
    let code: String = (0..3)
        .map(|a| {
            let w = world_of[a];
            if col(a)[w] < 0.0 {
                NEG[w]
            } else {
                POS[w]
            }
        })
        .collect();

    let new_dims: [usize; 3] = std::array::from_fn(|w| dims[src_of[w]]);
    let spacing: [f64; 3] = std::array::from_fn(|w| norms[src_of[w]]);
    let mut first = [0f64; 3];
    for w in 0..3 {
        let a = src_of[w];
        first[a] = if flip[w] { (dims[a] - 1) as f64 } else { 0.0 };
    }
    let origin: [f64; 3] = std::array::from_fn(|r| {
        affine[r][0] * first[0] + affine[r][1] * first[1] + affine[r][2] * first[2] + affine[r][3]
    });

    let strides = [1usize, dims[0], dims[0] * dims[1]];
    let mut out = Vec::with_capacity(data.len());
    for k in 0..new_dims[2] {
        for j in 0..new_dims[1] {
            for i in 0..new_dims[0] {
                let n = [i, j, k];
                let mut idx = 0usize;
                for w in 0..3 {
                    let a = src_of[w];
                    let o = if flip[w] { dims[a] - 1 - n[w] } else { n[w] };
                    idx += o * strides[a];
                }
                out.push(data[idx]);
            }
        }
    }
    Ok((Grid::new(new_dims, spacing, origin), out, code))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new([3, 4, 2], [0.7, 0.8, 5.0], [-1.0, 2.0, 3.0])
    }

    #[test]
    fn encode_decode_roundtrip_f32() {
        let g = grid();
        let data: Vec<f32> = (0..g.len()).map(|i| i as f32 * 1.5 - 3.0).collect();
        let bytes = encode(&g, VoxelData::F32(&data));
        let img = decode(&bytes).unwrap();
        assert_eq!(img.header.dims, g.dims);
        assert_eq!(img.data, data);
        let (cg, cdata, code) = canonicalize(img.header.dims, &img.data, &img.affine).unwrap();
        assert_eq!(code, "RAS");
        assert_eq!(cdata, data);
        for a in 0..3 {
            assert!((cg.spacing[a] - g.spacing[a]).abs() < 1e-5);
            assert!((cg.origin[a] - g.origin[a]).abs() < 1e-5);
        }
    }

    #[test]
    fn gzip_is_detected() {
        let g = grid();
        let data = vec![1u8; g.len()];
        let bytes = gzip(&encode(&g, VoxelData::U8(&data)));
        let img = decode(&bytes).unwrap();
        assert_eq!(img.header.datatype, Datatype::U8);
        assert!(img.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn corrupted_magic() {
        let g = grid();
        let mut bytes = encode(&g, VoxelData::U8(&vec![0; g.len()]));
        bytes[345] = b'X';
        assert!(matches!(
            decode(&bytes),
            Err(NiftiError::MalformedHeader(_))
        ));
    }

    #[test]
    fn truncated_data() {
        let g = grid();
        let bytes = encode(&g, VoxelData::F32(&vec![0.0; g.len()]));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(NiftiError::MalformedHeader(_))
        ));
    }

    #[test]
    fn rejects_2d_and_4d() {
        let g = grid();
        let mut bytes = encode(&g, VoxelData::U8(&vec![0; g.len()]));
        bytes[40..42].copy_from_slice(&2i16.to_le_bytes());
        assert_eq!(
            decode(&bytes).unwrap_err(),
            NiftiError::UnsupportedDimensionality(2)
        );
        let mut bytes = encode(&g, VoxelData::U8(&vec![0; g.len()]));
        bytes[40..42].copy_from_slice(&4i16.to_le_bytes());
        bytes[48..50].copy_from_slice(&2i16.to_le_bytes());
        assert_eq!(
            decode(&bytes).unwrap_err(),
            NiftiError::UnsupportedDimensionality(4)
        );
    }

    #[test]
    fn trailing_singleton_dims_are_3d() {
        let g = grid();
        let mut bytes = encode(&g, VoxelData::U8(&vec![0; g.len()]));
        bytes[40..42].copy_from_slice(&4i16.to_le_bytes());
        assert!(decode(&bytes).is_ok());
    }

    #[test]
    fn big_endian_int16_with_scaling() {
        // Hand-built big-endian header: 2x1x1 int16, slope 2, intercept -1024.
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_be_bytes());
        for (d, v) in [3i16, 2, 1, 1, 1, 1, 1, 1].iter().enumerate() {
            h[40 + 2 * d..42 + 2 * d].copy_from_slice(&v.to_be_bytes());
        }
        h[70..72].copy_from_slice(&4i16.to_be_bytes());
        for a in 0..4 {
            h[76 + 4 * a..80 + 4 * a].copy_from_slice(&1f32.to_be_bytes());
        }
        h[108..112].copy_from_slice(&352f32.to_be_bytes());
        h[112..116].copy_from_slice(&2f32.to_be_bytes());
        h[116..120].copy_from_slice(&(-1024f32).to_be_bytes());
        h[344..348].copy_from_slice(b"n+1\0");
        h.extend_from_slice(&10i16.to_be_bytes());
        h.extend_from_slice(&(-3i16).to_be_bytes());
        let img = decode(&h).unwrap();
        assert_eq!(img.header.endian, Endian::Big);
        assert_eq!(img.data, vec![-1004.0, -1030.0]);
    }

    #[test]
    fn lps_is_flipped_to_ras() {
        // x and y axes point left and posterior.
        let affine = [
            [-2.0, 0.0, 0.0, 10.0],
            [0.0, -1.0, 0.0, 20.0],
            [0.0, 0.0, 3.0, 30.0],
        ];
        let dims = [2, 3, 1];
        let data: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let (g, out, code) = canonicalize(dims, &data, &affine).unwrap();
        assert_eq!(code, "LPS");
        assert_eq!(g.spacing, [2.0, 1.0, 3.0]);
        // New voxel (0,0,0) is old voxel (1,2,0), at world (8, 18, 30).
        assert_eq!(g.origin, [8.0, 18.0, 30.0]);
        assert_eq!(out[0], data[1 + 2 * 2]);
        // Physical position of every voxel is preserved.
        for k in 0..1 {
            for j in 0..3 {
                for i in 0..2 {
                    let new_idx = g.index(i, j, k);
                    let p = g.to_physical([i as f64, j as f64, k as f64]);
                    let oi = ((p[0] - 10.0) / -2.0).round() as usize;
                    let oj = ((p[1] - 20.0) / -1.0).round() as usize;
                    assert_eq!(out[new_idx], data[oi + 2 * oj]);
                }
            }
        }
    }

    #[test]
    fn permuted_axes() {
        // Voxel axis 0 runs along world z, axis 2 along world x.
        let affine = [
            [0.0, 0.0, 1.5, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [4.0, 0.0, 0.0, 0.0],
        ];
        let dims = [2, 1, 3];
        let data: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let (g, out, code) = canonicalize(dims, &data, &affine).unwrap();
        assert_eq!(code, "SAR");
        assert_eq!(g.dims, [3, 1, 2]);
        assert_eq!(g.spacing, [1.5, 1.0, 4.0]);
        // New (i=2,j=0,k=1) came from old (a0=1, a2=2).
        assert_eq!(out[g.index(2, 0, 1)], data[1 + 2 * 2]);
    }
}
