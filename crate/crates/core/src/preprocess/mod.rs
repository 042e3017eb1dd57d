//! Frame decoding and the pixel transforms applied before pooling:
//! crop, resize, brightness perturbation, negative, gamma correction.
//!
//! Every transform is a pure function returning a new [`Frame`] whose pixels
//! stay in `[0, 1]`.

mod codec;
mod frame;

pub use codec::{decode_frame, encode_frame, quantize, read_frame, write_frame, ImageFormat};
pub use frame::{CropRect, Frame};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const BRIGHTNESS_FACTOR_RANGE: (f64, f64) = (0.25, 4.0);

pub fn crop(f: &Frame, r: &CropRect) -> Result<Frame> {
    if !r.fits(f.width(), f.height()) {
        return Err(Error::Bounds {
            x: r.x,
            y: r.y,
            w: r.w,
            h: r.h,
            width: f.width(),
            height: f.height(),
        });
    }
    let c = f.channels();
    let mut out = Vec::with_capacity(r.w * r.h * c);
    for y in r.y..r.y + r.h {
        let row = (y * f.width() + r.x) * c;
        out.extend_from_slice(&f.pixels()[row..row + r.w * c]);
    }
    Ok(Frame::from_parts_unchecked(r.w, r.h, c, out))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Corner-aligned source coordinate for output index `i`.
fn source_coord(i: usize, out: usize, input: usize) -> f64 {
    if out == 1 {
        (input - 1) as f64 / 2.0
    } else {
        i as f64 * (input - 1) as f64 / (out - 1) as f64
    }
}

pub fn resize(f: &Frame, out_w: usize, out_h: usize) -> Result<Frame> {
    resize_with(f, out_w, out_h, Interpolation::Bilinear)
}

pub fn resize_with(f: &Frame, out_w: usize, out_h: usize, mode: Interpolation) -> Result<Frame> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Param(format!(
            "resize target must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    if out_w == f.width() && out_h == f.height() {
        return Ok(f.clone());
    }
    let c = f.channels();
    let mut out = Vec::with_capacity(out_w * out_h * c);
    for oy in 0..out_h {
        let sy = source_coord(oy, out_h, f.height());
        for ox in 0..out_w {
            let sx = source_coord(ox, out_w, f.width());
            match mode {
                Interpolation::Nearest => {
                    let (x, y) = (sx.round() as usize, sy.round() as usize);
                    for ch in 0..c {
                        out.push(f.get(x, y, ch));
                    }
                }
                Interpolation::Bilinear => {
                    let x0 = sx.floor() as usize;
                    let y0 = sy.floor() as usize;
                    let x1 = (x0 + 1).min(f.width() - 1);
                    let y1 = (y0 + 1).min(f.height() - 1);
                    let (ax, ay) = (sx - x0 as f64, sy - y0 as f64);
                    for ch in 0..c {
                        let top = f.get(x0, y0, ch) * (1.0 - ax) + f.get(x1, y0, ch) * ax;
                        let bottom = f.get(x0, y1, ch) * (1.0 - ax) + f.get(x1, y1, ch) * ax;
                        out.push((top * (1.0 - ay) + bottom * ay).clamp(0.0, 1.0));
                    }
                }
            }
        }
    }
    Ok(Frame::from_parts_unchecked(out_w, out_h, c, out))
}

pub fn adjust_brightness(f: &Frame, factor: f64) -> Result<Frame> {
    let (lo, hi) = BRIGHTNESS_FACTOR_RANGE;
    if !(factor > 0.0) {
        return Err(Error::Param(format!(
            "brightness factor must be positive, got {factor}"
        )));
    }
    if !(lo..=hi).contains(&factor) {
        return Err(Error::Param(format!(
            "brightness factor {factor} outside [{lo}, {hi}]"
        )));
    }
    Ok(f.map(|p| (p * factor).clamp(0.0, 1.0)))
}

pub fn negative(f: &Frame) -> Frame {
    f.map(|p| 1.0 - p)
}

pub fn gamma_correct(f: &Frame, gamma: f64) -> Result<Frame> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Param(format!("gamma must be positive, got {gamma}")));
    }
    Ok(f.map(|p| p.powf(gamma)))
}

/// Augmentation applied to every frame of one manifest entry.
///
/// Variant 0 is the original clip; higher variants cycle through negative,
/// gamma, and negative-then-gamma, with fresh brightness draws each cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Augmentation {
    None,
    Negative,
    Gamma,
    NegativeGamma,
}

impl Augmentation {
    pub fn for_variant(variant: u32) -> Augmentation {
        match variant % 4 {
            0 => Augmentation::None,
            1 => Augmentation::Negative,
            2 => Augmentation::Gamma,
            _ => Augmentation::NegativeGamma,
        }
    }

    pub fn apply(self, f: &Frame, gamma: f64) -> Result<Frame> {
        Ok(match self {
            Augmentation::None => f.clone(),
            Augmentation::Negative => negative(f),
            Augmentation::Gamma => gamma_correct(f, gamma)?,
            Augmentation::NegativeGamma => gamma_correct(&negative(f), gamma)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Output `[width, height]`; `None` keeps the (cropped) source size.
    pub resize: Option<[usize; 2]>,
    pub interpolation: Interpolation,
    /// Per-frame uniform brightness factor range; `None` disables the perturbation.
    pub brightness_range: Option<[f64; 2]>,
    pub gamma: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resize: Some([224, 224]),
            interpolation: Interpolation::Bilinear,
            brightness_range: Some([0.7, 1.3]),
            gamma: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some([w, h]) = self.resize {
            if w == 0 || h == 0 {
                return Err(Error::Config(format!("resize must be at least 1x1, got {w}x{h}")));
            }
        }
        if let Some([lo, hi]) = self.brightness_range {
            let (min, max) = BRIGHTNESS_FACTOR_RANGE;
            if !(lo > 0.0 && lo <= hi && lo >= min && hi <= max) {
                return Err(Error::Config(format!(
                    "brightness_range [{lo}, {hi}] must be ordered within [{min}, {max}]"
                )));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Crop, resize, brightness noise, then the augmentation for `variant`.
    ///
    /// Brightness factors are drawn from a stream derived from `seed`, so the
    /// result is a pure function of the arguments.
    pub fn apply_clip(
        &self,
        frames: &[Frame],
        rect: Option<&CropRect>,
        variant: u32,
        seed: u64,
    ) -> Result<Vec<Frame>> {
        let aug = Augmentation::for_variant(variant);
        let mut rng = rng_from_seed(derive_seed(seed, "brightness", variant as u64));
        frames
            .iter()
            .map(|f| {
                let mut g = match rect {
                    Some(r) => crop(f, r)?,
                    None => f.clone(),
                };
                if let Some([w, h]) = self.resize {
                    g = resize_with(&g, w, h, self.interpolation)?;
                }
                if let Some([lo, hi]) = self.brightness_range {
                    let factor = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
                    g = adjust_brightness(&g, factor)?;
                }
                aug.apply(&g, self.gamma)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize, c: usize) -> Frame {
        let n = w * h * c;
        Frame::new(w, h, c, (0..n).map(|i| i as f64 / (n.max(2) - 1) as f64).collect()).unwrap()
    }

    #[test]
    fn crop_full_frame_is_identity() {
        let f = ramp(5, 3, 3);
        assert_eq!(crop(&f, &CropRect::full(&f)).unwrap(), f);
    }

    #[test]
    fn crop_inner_block() {
        let f = ramp(4, 4, 1);
        let out = crop(&f, &CropRect::new(1, 1, 2, 2)).unwrap();
        let expected: Vec<f64> = [(1, 1), (2, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(x, y)| f.pixels()[y * 4 + x])
            .collect();
        assert_eq!(out.pixels(), expected.as_slice());
    }

    #[test]
    fn crop_out_of_bounds() {
        let f = ramp(4, 4, 1);
        assert!(matches!(crop(&f, &CropRect::new(3, 0, 2, 1)), Err(Error::Bounds { .. })));
        assert!(matches!(crop(&f, &CropRect::new(0, 0, 0, 1)), Err(Error::Bounds { .. })));
    }

    #[test]
    fn resize_two_to_three() {
        let f = Frame::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let out = resize(&f, 3, 1).unwrap();
        assert_eq!(out.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn resize_rejects_empty_target() {
        assert!(resize(&ramp(2, 2, 1), 0, 3).is_err());
    }

    #[test]
    fn nearest_resize_picks_source_pixels() {
        let f = ramp(4, 4, 1);
        let out = resize_with(&f, 2, 2, Interpolation::Nearest).unwrap();
        assert_eq!(out.pixels(), &[f.get(0, 0, 0), f.get(3, 0, 0), f.get(0, 3, 0), f.get(3, 3, 0)]);
    }

    #[test]
    fn brightness_examples() {
        let f = Frame::new(2, 1, 1, vec![0.4, 0.7]).unwrap();
        assert_eq!(adjust_brightness(&f, 1.0).unwrap(), f);
        assert_eq!(adjust_brightness(&f, 2.0).unwrap().pixels(), &[0.8, 1.0]);
        assert!(adjust_brightness(&f, 0.0).is_err());
        assert!(adjust_brightness(&f, -1.0).is_err());
        assert!(adjust_brightness(&f, 5.0).is_err());
    }

    #[test]
    fn negative_and_gamma_examples() {
        let f = Frame::new(3, 1, 1, vec![0.0, 1.0, 0.25]).unwrap();
        assert_eq!(negative(&f).pixels(), &[1.0, 0.0, 0.75]);
        assert_eq!(gamma_correct(&f, 0.5).unwrap().pixels(), &[0.0, 1.0, 0.5]);
        assert_eq!(gamma_correct(&f, 1.0).unwrap(), f);
        assert!(gamma_correct(&f, 0.0).is_err());
    }

    #[test]
    fn apply_clip_is_deterministic_and_varies_by_variant() {
        let frames: Vec<Frame> = (0..3).map(|_| ramp(6, 4, 3)).collect();
        let cfg = PreprocessConfig {
            resize: Some([3, 2]),
            ..PreprocessConfig::default()
        };
        let a = cfg.apply_clip(&frames, None, 0, 42).unwrap();
        let b = cfg.apply_clip(&frames, None, 0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!((a[0].width(), a[0].height()), (3, 2));
        let neg = cfg.apply_clip(&frames, None, 1, 42).unwrap();
        assert_ne!(a, neg);
    }

    fn any_frame() -> impl Strategy<Value = Frame> {
        (1usize..7, 1usize..7, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
            proptest::collection::vec(0.0f64..=1.0, w * h * c)
                .prop_map(move |px| Frame::new(w, h, c, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn crop_composes(f in any_frame(), seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let aw = rng.gen_range(1..=f.width());
            let ah = rng.gen_range(1..=f.height());
            let a = CropRect::new(rng.gen_range(0..=f.width() - aw), rng.gen_range(0..=f.height() - ah), aw, ah);
            let bw = rng.gen_range(1..=aw);
            let bh = rng.gen_range(1..=ah);
            let b = CropRect::new(rng.gen_range(0..=aw - bw), rng.gen_range(0..=ah - bh), bw, bh);
            let nested = crop(&crop(&f, &a).unwrap(), &b).unwrap();
            prop_assert_eq!(nested, crop(&f, &a.compose(&b)).unwrap());
        }

        #[test]
        fn gamma_half_never_darkens(f in any_frame()) {
            let g = gamma_correct(&f, 0.5).unwrap();
            for (o, i) in g.pixels().iter().zip(f.pixels()) {
                prop_assert!(o >= i);
            }
        }

        #[test]
        fn negative_is_an_involution(f in any_frame()) {
            for (a, b) in negative(&negative(&f)).pixels().iter().zip(f.pixels()) {
                prop_assert!((a - b).abs() <= f64::EPSILON);
            }
        }

        #[test]
        fn negative_mean_is_complement(f in any_frame()) {
            prop_assert!((negative(&f).mean() - (1.0 - f.mean())).abs() < 1e-12);
        }
    }
}
