//! 8-bit image codecs: PNG (gray or RGB), binary PGM (P5) and binary PPM (P6).
//!
//! Pixels are normalized by dividing by 255 on decode and quantized with
//! round-to-nearest on encode.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

use super::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<ImageFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(ImageFormat::Png),
            "pgm" => Some(ImageFormat::Pgm),
            "ppm" => Some(ImageFormat::Ppm),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
            ImageFormat::Ppm => "ppm",
        }
    }
}

pub fn decode_frame(bytes: &[u8], format: ImageFormat) -> Result<Frame> {
    match format {
        ImageFormat::Png => decode_png(bytes),
        ImageFormat::Pgm => decode_pnm(bytes, b"P5", 1),
        ImageFormat::Ppm => decode_pnm(bytes, b"P6", 3),
    }
}

pub fn encode_frame(frame: &Frame, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Png => encode_png(frame),
        ImageFormat::Pgm => encode_pnm(frame, "P5", 1),
        ImageFormat::Ppm => encode_pnm(frame, "P6", 3),
    }
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        Error::Param(format!("unsupported image extension: {}", path.display()))
    })?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes, format).map_err(|e| match e {
        Error::Decode { offset, message } => Error::Decode {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        Error::Param(format!("unsupported image extension: {}", path.display()))
    })?;
    let bytes = encode_frame(frame, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dequantize(bytes: &[u8]) -> Vec<f64> {
    bytes.iter().map(|&b| b as f64 / 255.0).collect()
}

fn decode_png(bytes: &[u8]) -> Result<Frame> {
    let png_err = |e: png::DecodingError| Error::Decode {
        offset: 0,
        message: format!("png: {e}"),
    };
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        offset: 0,
        message: "png: image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Decode {
            offset: 0,
            message: format!("png: only 8-bit images are supported, got {:?}", info.bit_depth),
        });
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Decode {
                offset: 0,
                message: format!("png: only grayscale or RGB images are supported, got {other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(w * h * channels);
    Frame::new(w, h, channels, dequantize(&buf))
}

fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, frame.width() as u32, frame.height() as u32);
    encoder.set_color(if frame.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    encoder.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = frame.pixels().iter().map(|&p| quantize(p)).collect();
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Encode(format!("png: {e}")))?;
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Encode(format!("png: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::Encode(format!("png: {e}")))?;
    Ok(out)
}

fn encode_pnm(frame: &Frame, magic: &str, channels: usize) -> Result<Vec<u8>> {
    if frame.channels() != channels {
        return Err(Error::Encode(format!(
            "{magic} stores {channels}-channel frames, got {} channels",
            frame.channels()
        )));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|&p| quantize(p)));
    Ok(out)
}

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmCursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Decode {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

fn decode_pnm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<Frame> {
    let mut cur = PnmCursor { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(cur.err(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Decode {
            offset: maxval_at,
            message: format!("only 8-bit depth (maxval 255) is supported, got {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(cur.err(format!("degenerate dimensions {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected a single whitespace byte before the raster")),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| cur.err("dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < needed {
        return Err(Error::Decode {
            offset: bytes.len(),
            message: format!(
                "truncated raster: expected {needed} bytes, found {}",
                payload.len()
            ),
        });
    }
    Frame::new(width, height, channels, dequantize(&payload[..needed]))
}
