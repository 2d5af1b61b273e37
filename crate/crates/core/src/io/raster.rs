//! Raster I/O: PNG and PPM/PGM for images, 16-bit PGM for saliency maps.
//!
//! Saliency PGM uses maxval 65534 so that the 0.5 label encodes as exactly
//! half of the maximum raster value (65534/2 = 32767) and decodes back to
//! exactly 0.5.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::io::write_atomic;
use crate::saliency::SaliencyMap;

pub const SALIENCY_PGM_MAXVAL: u16 = 65534;

// --- saliency maps -------------------------------------------------------

pub fn encode_saliency_pgm(map: &SaliencyMap) -> Vec<u8> {
    let (h, w) = map.dims();
    let mut out = format!("P5\n{w} {h}\n{SALIENCY_PGM_MAXVAL}\n").into_bytes();
    for &v in map.values() {
        let raw = (v * SALIENCY_PGM_MAXVAL as f64).round() as u16;
        out.extend_from_slice(&raw.to_be_bytes());
    }
    out
}

pub fn decode_saliency_pgm(bytes: &[u8]) -> Result<SaliencyMap> {
    let (w, h, maxval, data) = parse_pnm_header(bytes, b"P5")?;
    if maxval < 256 {
        let values = data.iter().map(|&b| b as f64 / maxval as f64).collect();
        return SaliencyMap::new(h, w, values);
    }
    if data.len() != 2 * w * h {
        return Err(Error::Format("PGM data length mismatch".into()));
    }
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
        .collect();
    SaliencyMap::new(h, w, values)
}

pub fn write_saliency_pgm(path: &Path, map: &SaliencyMap) -> Result<()> {
    write_atomic(path, &encode_saliency_pgm(map))
}

pub fn read_saliency_pgm(path: &Path) -> Result<SaliencyMap> {
    decode_saliency_pgm(&std::fs::read(path)?)
}

// --- images ---------------------------------------------------------------

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let rgb = img.to_rgb();
    let mut out = format!("P6\n{} {}\n255\n", rgb.width(), rgb.height()).into_bytes();
    out.extend_from_slice(&rgb.to_u8());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    let (w, h, maxval, data) = parse_pnm_header(bytes, b"P6")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
    }
    if data.len() != 3 * w * h {
        return Err(Error::Format("PPM data length mismatch".into()));
    }
    ImageBuffer::from_u8(h, w, 3, &data)
}

pub fn encode_pgm8(img: &ImageBuffer) -> Result<Vec<u8>> {
    if img.channels() != 1 {
        return Err(Error::Format("PGM output requires a 1-channel image".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_u8());
    Ok(out)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(
            Cursor::new(&mut out),
            img.width() as u32,
            img.height() as u32,
        );
        encoder.set_color(if img.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        writer
            .write_image_data(&img.to_u8())
            .map_err(|e| Error::Format(format!("png: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let w = info.width as usize;
    let h = info.height as usize;
    let data = &buf[..info.buffer_size()];
    match info.color_type {
        png::ColorType::Grayscale => ImageBuffer::from_u8(h, w, 1, data),
        png::ColorType::Rgb => ImageBuffer::from_u8(h, w, 3, data),
        png::ColorType::GrayscaleAlpha => {
            let gray: Vec<u8> = data.chunks_exact(2).map(|c| c[0]).collect();
            ImageBuffer::from_u8(h, w, 1, &gray)
        }
        // alpha is out of scope; drop it
        png::ColorType::Rgba => {
            let rgb: Vec<u8> = data
                .chunks_exact(4)
                .flat_map(|c| [c[0], c[1], c[2]])
                .collect();
            ImageBuffer::from_u8(h, w, 3, &rgb)
        }
        other => Err(Error::Format(format!("unsupported PNG color type {other:?}"))),
    }
}

/// Load an image by extension: `.png`, `.ppm`, or 8-bit `.pgm`.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path)?;
    match extension(path).as_str() {
        "png" => decode_png(&bytes),
        "ppm" => decode_ppm(&bytes),
        "pgm" => {
            let (w, h, maxval, data) = parse_pnm_header(&bytes, b"P5")?;
            if maxval != 255 {
                return Err(Error::Format(format!(
                    "expected 8-bit PGM image, maxval {maxval}"
                )));
            }
            ImageBuffer::from_u8(h, w, 1, &data)
        }
        other => Err(Error::Format(format!("unsupported image extension {other:?}"))),
    }
}

/// Save an image by extension: `.png`, `.ppm` (RGB), or `.pgm` (1-channel).
pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "png" => encode_png(img)?,
        "ppm" => encode_ppm(img),
        "pgm" => encode_pgm8(img)?,
        other => {
            return Err(Error::Format(format!(
                "unsupported image extension {other:?}"
            )))
        }
    };
    write_atomic(path, &bytes)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Parse a binary PNM header (`P5`/`P6`): returns (width, height, maxval,
/// sample data). Comments and arbitrary whitespace are accepted.
fn parse_pnm_header(bytes: &[u8], magic: &[u8]) -> Result<(usize, usize, u32, Vec<u8>)> {
    if bytes.len() < 2 || &bytes[0..2] != magic {
        return Err(Error::Format("bad PNM magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad PNM header field".into()))?;
    }
    // exactly one whitespace byte after maxval
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PNM header".into()));
    }
    pos += 1;
    let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format("bad PNM dimensions".into()));
    }
    Ok((w, h, maxval, bytes[pos..].to_vec()))
}
