//! PFM, 16-bit PNG and `PXDM` raw float readers/writers.
//!
//! * PFM: `Pf\n<w> <h>\n<scale>\n`, then `f32` samples, little-endian when
//!   `scale < 0`, big-endian otherwise, bottom row first. Read as disparity.
//! * png16: single-channel 16-bit grayscale; disparity = raw / 65535.
//! * rawf32: 16-byte header (`PXDM`, u32 width, u32 height, u32 flags, all
//!   little-endian), then row-major little-endian `f32`. Flag bit 0 marks
//!   the values as depth instead of disparity.

use std::io::Cursor;
use std::str::FromStr;

use super::{DepthError, DepthMap, DisparityMap};

const PXDM_MAGIC: &[u8; 4] = b"PXDM";
const PXDM_FLAG_DEPTH: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthFormat {
    Pfm,
    Png16,
    RawF32,
}

impl DepthFormat {
    pub const ALL: [DepthFormat; 3] = [DepthFormat::Pfm, DepthFormat::Png16, DepthFormat::RawF32];

    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Pfm => "pfm",
            DepthFormat::Png16 => "png",
            DepthFormat::RawF32 => "pxdm",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.extension().eq_ignore_ascii_case(ext))
    }
}

impl FromStr for DepthFormat {
    type Err = DepthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pfm" => Ok(DepthFormat::Pfm),
            "png16" | "png" => Ok(DepthFormat::Png16),
            "rawf32" | "pxdm" => Ok(DepthFormat::RawF32),
            other => Err(DepthError::Header(format!("unknown depth format {other:?}"))),
        }
    }
}

/// A decoded grid, tagged with what its values mean.
#[derive(Clone, Debug, PartialEq)]
pub enum DepthGrid {
    Disparity(DisparityMap),
    Depth(DepthMap),
}

impl DepthGrid {
    pub fn width(&self) -> usize {
        match self {
            DepthGrid::Disparity(m) => m.width(),
            DepthGrid::Depth(m) => m.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            DepthGrid::Disparity(m) => m.height(),
            DepthGrid::Depth(m) => m.height(),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            DepthGrid::Disparity(m) => m.values(),
            DepthGrid::Depth(m) => m.values(),
        }
    }
}

pub fn read_depth_file(bytes: &[u8], format: DepthFormat) -> Result<DepthGrid, DepthError> {
    match format {
        DepthFormat::Pfm => read_pfm(bytes).map(DepthGrid::Disparity),
        DepthFormat::Png16 => read_png16(bytes).map(DepthGrid::Disparity),
        DepthFormat::RawF32 => read_rawf32(bytes),
    }
}

fn header_line<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str, DepthError> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| DepthError::Header(format!("unterminated PFM {what} line")))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map(|s| s.trim_end_matches('\r').trim())
        .map_err(|_| DepthError::Header(format!("non-ASCII PFM {what} line")))
}

fn read_pfm(bytes: &[u8]) -> Result<DisparityMap, DepthError> {
    let mut pos = 0;
    let magic = header_line(bytes, &mut pos, "magic")?;
    if magic != "Pf" {
        return Err(DepthError::Header(format!(
            "expected single-channel PFM magic \"Pf\", found {magic:?}"
        )));
    }
    let dims = header_line(bytes, &mut pos, "dimension")?;
    let mut parts = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(DepthError::Header(format!("bad PFM dimensions {dims:?}"))),
    };
    let scale_text = header_line(bytes, &mut pos, "scale")?;
    let scale: f32 = scale_text
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| DepthError::Header(format!("bad PFM scale {scale_text:?}")))?;
    let little_endian = scale < 0.0;

    let expected = payload_len(width, height)?;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(DepthError::Size {
            expected,
            found: payload.len(),
        });
    }
    let mut values = vec![0.0; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, file_row) = (i % width, i / width);
        let y = height - 1 - file_row;
        check_sample(v, x, y, pos + 4 * i, true)?;
        values[y * width + x] = f64::from(v);
    }
    DisparityMap::new(width, height, values)
}

fn payload_len(width: usize, height: usize) -> Result<usize, DepthError> {
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| DepthError::Header(format!("dimensions {width}x{height} overflow")))
}

fn check_sample(v: f32, x: usize, y: usize, offset: usize, disparity: bool) -> Result<(), DepthError> {
    if !v.is_finite() || (disparity && v < 0.0) {
        return Err(DepthError::BadPixel {
            x,
            y,
            offset,
            value: f64::from(v),
        });
    }
    Ok(())
}

fn read_png16(bytes: &[u8]) -> Result<DisparityMap, DepthError> {
    let png_err = |e: png::DecodingError| DepthError::Header(format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(DepthError::Header(format!(
            "png16 requires 16-bit grayscale, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| DepthError::Header("png frame too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let data = &buf[..frame.buffer_size()];
    let expected = width * height * 2;
    if data.len() != expected {
        return Err(DepthError::Size {
            expected,
            found: data.len(),
        });
    }
    let values = data
        .chunks_exact(2)
        .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65535.0)
        .collect();
    DisparityMap::new(width, height, values)
}

fn read_rawf32(bytes: &[u8]) -> Result<DepthGrid, DepthError> {
    if bytes.len() < 16 {
        return Err(DepthError::Header(format!(
            "rawf32 header needs 16 bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != PXDM_MAGIC {
        return Err(DepthError::Header(format!("bad rawf32 magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let (width, height, flags) = (word(4) as usize, word(8) as usize, word(12));
    if width == 0 || height == 0 {
        return Err(DepthError::Header(format!("bad rawf32 dimensions {width}x{height}")));
    }
    let is_depth = flags & PXDM_FLAG_DEPTH != 0;
    let expected = payload_len(width, height)?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(DepthError::Size {
            expected,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(width * height);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        check_sample(v, i % width, i / width, 16 + 4 * i, !is_depth)?;
        values.push(f64::from(v));
    }
    if is_depth {
        DepthMap::new(width, height, values).map(DepthGrid::Depth)
    } else {
        DisparityMap::new(width, height, values).map(DepthGrid::Disparity)
    }
}

/// Little-endian PFM (negative scale), bottom row first. Values are
/// narrowed to `f32`.
pub fn write_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for row in values.chunks_exact(width).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// `PXDM` raw floats; `is_depth` sets flag bit 0.
pub fn write_rawf32(width: usize, height: usize, values: &[f64], is_depth: bool) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = Vec::with_capacity(16 + values.len() * 4);
    out.extend_from_slice(PXDM_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    let flags = if is_depth { PXDM_FLAG_DEPTH } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// 16-bit grayscale PNG of disparities in `[0, 1]`, stored as
/// `round(v * 65535)`.
pub fn write_png16(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut data = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let raw = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        data.extend_from_slice(&raw.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder.write_header().expect("in-memory png header");
        writer.write_image_data(&data).expect("in-memory png data");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rawf32_identity_decode() {
        let bytes = write_rawf32(2, 2, &[1.0, 2.0, 4.0, 5.0], false);
        let DepthGrid::Disparity(map) = read_depth_file(&bytes, DepthFormat::RawF32).unwrap() else {
            panic!("expected disparity");
        };
        assert_eq!((map.width(), map.height()), (2, 2));
        assert_eq!(map.values(), &[1.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn rawf32_depth_flag() {
        let bytes = write_rawf32(1, 2, &[3.0, 7.0], true);
        assert!(matches!(
            read_depth_file(&bytes, DepthFormat::RawF32).unwrap(),
            DepthGrid::Depth(_)
        ));
    }

    #[test]
    fn png16_scale() {
        let bytes = write_png16(2, 1, &[1.0, 0.0]);
        let grid = read_depth_file(&bytes, DepthFormat::Png16).unwrap();
        assert_eq!(grid.values(), &[1.0, 0.0]);
    }

    #[test]
    fn png16_rejects_8bit() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            enc.write_header().unwrap().write_image_data(&[9]).unwrap();
        }
        assert!(matches!(
            read_depth_file(&out, DepthFormat::Png16),
            Err(DepthError::Header(_))
        ));
    }

    #[test]
    fn pfm_flips_rows() {
        let bytes = write_pfm(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        // bottom row is stored first
        assert_eq!(&bytes[12..16], &3.0f32.to_le_bytes());
        let grid = read_depth_file(&bytes, DepthFormat::Pfm).unwrap();
        assert_eq!(grid.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn errors_name_the_problem() {
        assert!(matches!(
            read_depth_file(b"PF\n1 1\n-1\n\0\0\0\0", DepthFormat::Pfm),
            Err(DepthError::Header(_))
        ));
        assert!(matches!(
            read_depth_file(b"Pf\n2 1\n-1\n\0\0\0\0", DepthFormat::Pfm),
            Err(DepthError::Size { expected: 8, found: 4 })
        ));
        let mut nan = b"Pf\n1 1\n-1\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_depth_file(&nan, DepthFormat::Pfm),
            Err(DepthError::BadPixel { x: 0, y: 0, offset: 10, .. })
        ));
        let mut inf = write_rawf32(2, 1, &[0.0, 0.0], false);
        inf[20..24].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            read_depth_file(&inf, DepthFormat::RawF32),
            Err(DepthError::BadPixel { x: 1, y: 0, offset: 20, .. })
        ));
        assert!(matches!(
            read_depth_file(b"XXXX", DepthFormat::RawF32),
            Err(DepthError::Header(_))
        ));
        let short = &write_rawf32(2, 2, &[0.0; 4], false)[..20];
        assert!(matches!(
            read_depth_file(short, DepthFormat::RawF32),
            Err(DepthError::Size { expected: 16, found: 4 })
        ));
    }

    fn grid() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
        (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(0.0f32..1e6, w * h))
        })
    }

    proptest! {
        #[test]
        fn pfm_and_rawf32_round_trip_bit_exact((w, h, values) in grid()) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            for bytes in [write_pfm(w, h, &values), write_rawf32(w, h, &values, false)] {
                let format = if bytes.starts_with(b"Pf") { DepthFormat::Pfm } else { DepthFormat::RawF32 };
                let grid = read_depth_file(&bytes, format).unwrap();
                prop_assert_eq!((grid.width(), grid.height()), (w, h));
                let same = grid.values().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits());
                prop_assert!(same);
            }
        }
    }
}
