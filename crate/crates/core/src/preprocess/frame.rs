use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One decoded image, pixels row-major with interleaved channels, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Param(format!(
                "frames have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} frame needs {expected} values, got {}",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Param(format!(
                "pixel {i} = {} lies outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Frame::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a frame from values that may stray slightly outside `[0, 1]`, clamping them.
    pub fn from_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut pixels: Vec<f64>,
    ) -> Result<Self> {
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Frame::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Applies `f` to every pixel. `f` must keep values in `[0, 1]`.
    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Frame {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Frame {
            width,
            height,
            channels,
            pixels,
        }
    }
}

/// Pixel rectangle `(x, y, w, h)` selecting the region of interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CropRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        CropRect { x, y, w, h }
    }

    pub fn full(frame: &Frame) -> Self {
        CropRect::new(0, 0, frame.width(), frame.height())
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// The rect selecting `inner` (relative to this rect's output) from the original frame.
    pub fn compose(&self, inner: &CropRect) -> CropRect {
        CropRect::new(self.x + inner.x, self.y + inner.y, inner.w, inner.h)
    }
}

impl From<[usize; 4]> for CropRect {
    fn from([x, y, w, h]: [usize; 4]) -> Self {
        CropRect { x, y, w, h }
    }
}

impl From<CropRect> for [usize; 4] {
    fn from(r: CropRect) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_ranges() {
        assert!(matches!(Frame::new(2, 2, 1, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Frame::new(1, 1, 2, vec![0.0; 2]), Err(Error::Param(_))));
        assert!(matches!(Frame::new(1, 1, 1, vec![1.5]), Err(Error::Param(_))));
        assert!(matches!(Frame::new(0, 1, 1, vec![]), Err(Error::Param(_))));
    }

    #[test]
    fn crop_rect_serializes_as_array() {
        let r = CropRect::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[1,2,3,4]");
        let back: CropRect = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(back, r);
    }
}
