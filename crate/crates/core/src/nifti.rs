//! Minimal NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Volumes are written as int16 and masks as uint8, both with identity
//! scaling. The reader accepts the common integer and float datatypes and
//! maps them to HU after applying `scl_slope` / `scl_inter`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, HuVolume, Shape, Spacing};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;

/// Loads a volume in HU from a NIfTI-1 file.
pub fn load_volume(path: impl AsRef<Path>) -> Result<HuVolume> {
    let bytes = read_file(path.as_ref())?;
    decode(&bytes)
}

/// Loads a {0, 255} mask. Any stored datatype is accepted as long as every
/// value is exactly 0 or 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let vol = load_volume(path)?;
    let shape = vol.shape();
    let spacing = vol.spacing();
    let data = vol
        .into_data()
        .into_iter()
        .map(|v| match v {
            0 => Ok(0u8),
            255 => Ok(255u8),
            other => Err(Error::InvalidMask(format!("value {other} is neither 0 nor 255"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    BinaryMask::new(shape, spacing, data)
}

/// Writes an int16 volume. Paths ending in `.gz` are gzip-compressed.
pub fn save_volume(v: &HuVolume, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(v.data().len() * 2);
    for &x in v.data() {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write_file(path.as_ref(), v.shape(), v.spacing(), DT_INT16, 16, &payload)
}

/// Writes a uint8 mask. Paths ending in `.gz` are gzip-compressed.
pub fn save_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), m.shape(), m.spacing(), DT_UINT8, 8, m.data())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        // a gzip stream cut short surfaces here as UnexpectedEof
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::MalformedHeader(format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_file(
    path: &Path,
    shape: Shape,
    spacing: Spacing,
    datatype: i16,
    bitpix: i16,
    payload: &[u8],
) -> Result<()> {
    if [shape.nx, shape.ny, shape.nz].iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidInput(format!("{shape:?} exceeds the NIfTI-1 dimension limit")));
    }
    let header = encode_header(shape, spacing, datatype, bitpix);
    let file = File::create(path)?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(&header)?;
        enc.write_all(payload)?;
        enc.finish()?.flush()?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&header)?;
        w.write_all(payload)?;
        w.flush()?;
    }
    Ok(())
}

fn encode_header(shape: Shape, spacing: Spacing, datatype: i16, bitpix: i16) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let dims = [3, shape.nx as i16, shape.ny as i16, shape.nz as i16, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * i, *d);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    let pixdim = [1.0, spacing.sx as f32, spacing.sy as f32, spacing.sz as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * i, *p);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    // millimetres
    h[123] = 2;
    // sform: scaled identity
    put_i16(&mut h, 254, 1);
    put_f32(&mut h, 280, spacing.sx as f32);
    put_f32(&mut h, 300, spacing.sy as f32);
    put_f32(&mut h, 320, spacing.sz as f32);
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

struct Reader<'a> {
    bytes: &'a [u8],
    swap: bool,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.swap { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.swap { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }
    }
}

fn decode(bytes: &[u8]) -> Result<HuVolume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated { expected: HEADER_SIZE, actual: bytes.len() });
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let swap = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(Error::MalformedHeader(format!("sizeof_hdr is {le}, expected 348"))),
    };
    let r = Reader { bytes, swap };
    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::UnsupportedDatatype(
                "split .hdr/.img pairs are not supported".into(),
            ))
        }
        m => return Err(Error::MalformedHeader(format!("bad magic {m:?}"))),
    }

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::MalformedHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 7];
    for (i, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = r.i16(42 + 2 * i);
        if v < 1 {
            return Err(Error::MalformedHeader(format!("dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    if dims[3..].iter().any(|&d| d != 1) {
        return Err(Error::UnsupportedDatatype(format!(
            "only 2D/3D images are supported, got dims {:?}",
            &dims[..ndim as usize]
        )));
    }
    let shape = Shape::new(dims[0], dims[1], dims[2])?;

    let pix = |i: usize| r.f32(76 + 4 * i) as f64;
    let sz = if ndim >= 3 { pix(3) } else { 1.0 };
    let spacing = Spacing::new(pix(1), pix(2), sz)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;

    let datatype = r.i16(70);
    let width = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::UnsupportedDatatype(format!("NIfTI datatype code {other}"))),
    };

    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::MalformedHeader(format!("vox_offset = {vox_offset}")));
    }
    let start = vox_offset as usize;
    let expected = start + shape.len() * width;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    let payload = &bytes[start..expected];

    let mut slope = r.f32(112) as f64;
    let inter = r.f32(116) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };
    let identity = slope == 1.0 && inter == 0.0;

    let raw = |i: usize| -> f64 {
        let b = &payload[i * width..(i + 1) * width];
        macro_rules! num {
            ($t:ty) => {{
                let a = b.try_into().unwrap();
                (if swap { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match datatype {
            DT_UINT8 => b[0] as f64,
            DT_INT8 => b[0] as i8 as f64,
            DT_INT16 => num!(i16),
            DT_UINT16 => num!(u16),
            DT_INT32 => num!(i32),
            DT_UINT32 => num!(u32),
            DT_FLOAT32 => num!(f32),
            _ => num!(f64),
        }
    };

    let mut data = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        let v = if identity { raw(i) } else { raw(i) * slope + inter };
        let rounded = v.round();
        if !rounded.is_finite() || rounded < i16::MIN as f64 || rounded > i16::MAX as f64 {
            return Err(Error::UnsupportedDatatype(format!(
                "voxel {i} has value {v}, which does not fit in signed 16-bit HU"
            )));
        }
        data.push(rounded as i16);
    }
    HuVolume::new(shape, spacing, data)
}
