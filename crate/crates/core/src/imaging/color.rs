//! sRGB (D65) <-> CIE Lab, stored channel-first with network-friendly ranges.
//!
//! `LabImage` keeps `L / 100` in `[0, 1]` and `a / 110`, `b / 110` clamped to
//! `[-1, 1]`.

use scs_tensor::Tensor;

use crate::error::{Result, ScsError};

pub const LAB_AB_SCALE: f64 = 110.0;
pub const LAB_L_SCALE: f64 = 100.0;

// sRGB primaries, D65 white
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Channel-first planar image.
#[derive(Debug, Clone, PartialEq)]
pub struct Planar {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Planar {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width || height == 0 || width == 0 {
            return Err(ScsError::Argument(format!(
                "{} values do not form a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `[1, C, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            vec![1, self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("sizes agree")
    }

    /// Mirror every row.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for (dst, src) in out
            .data
            .chunks_mut(self.width)
            .zip(self.data.chunks(self.width))
        {
            for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                *d = *s;
            }
        }
        out
    }

    /// Per-channel mean.
    pub fn channel_means(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|c| {
                self.plane(c).iter().map(|&v| v as f64).sum::<f64>()
                    / (self.height * self.width) as f64
            })
            .collect()
    }

    /// Copy of the `h x w` window at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(ScsError::Argument(format!(
                "crop {h}x{w}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in top..top + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + w]);
            }
        }
        Planar::new(self.channels, h, w, data)
    }

    /// Splits a `[N, C, H, W]` tensor into images.
    pub fn from_batch(t: &Tensor<f32>) -> Result<Vec<Self>> {
        let &[_, c, h, w] = t.shape() else {
            return Err(ScsError::Argument(format!(
                "expected [N,C,H,W], got {:?}",
                t.shape()
            )));
        };
        t.data()
            .chunks(c * h * w)
            .map(|d| Planar::new(c, h, w, d.to_vec()))
            .collect()
    }
}

macro_rules! planar_newtype {
    ($name:ident, $channels:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Planar);

        impl std::ops::Deref for $name {
            type Target = Planar;
            fn deref(&self) -> &Planar {
                &self.0
            }
        }

        impl $name {
            pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
                Planar::new($channels, height, width, data).map(Self)
            }

            pub fn from_planar(p: Planar) -> Result<Self> {
                if p.channels() != $channels {
                    return Err(ScsError::Argument(format!(
                        "{} needs {} channels, got {}",
                        stringify!($name),
                        $channels,
                        p.channels()
                    )));
                }
                Ok(Self(p))
            }

            pub fn planar(&self) -> &Planar {
                &self.0
            }

            pub fn into_planar(self) -> Planar {
                self.0
            }
        }
    };
}

planar_newtype!(RgbImage, 3);
planar_newtype!(LabImage, 3);

impl RgbImage {
    /// Builds an image from `[0, 1]` values, clamping outliers.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Self(Planar {
            channels: 3,
            height,
            width,
            data,
        })
    }

    pub fn clamped(p: Planar) -> Result<Self> {
        let mut img = Self::from_planar(p)?;
        for v in &mut img.0.data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(img)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self(self.0.flip_horizontal())
    }

    pub fn to_lab(&self) -> LabImage {
        rgb_to_lab(self)
    }
}

impl LabImage {
    /// `[1, H, W]` lightness plane.
    pub fn l_channel(&self) -> Planar {
        Planar::new(1, self.height(), self.width(), self.plane(0).to_vec()).expect("plane size")
    }

    pub fn flip_horizontal(&self) -> Self {
        Self(self.0.flip_horizontal())
    }

    pub fn to_rgb(&self) -> RgbImage {
        lab_to_rgb(self)
    }

    pub(crate) fn from_planar_unchecked(p: Planar) -> Self {
        debug_assert_eq!(p.channels(), 3);
        Self(p)
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// One sRGB triple in `[0, 1]` to CIE `(L, a, b)` in standard units.
pub fn srgb_to_cielab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let xyz: [f64; 3] = std::array::from_fn(|r| (0..3).map(|k| RGB_TO_XYZ[r][k] * lin[k]).sum());
    let [fx, fy, fz]: [f64; 3] = std::array::from_fn(|i| lab_f(xyz[i] / WHITE[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIE `(L, a, b)` to sRGB, clamped to the gamut.
pub fn cielab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let l = lab[0].clamp(0.0, 100.0);
    let fy = (l + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let yr = if l > KAPPA * EPSILON {
        fy * fy * fy
    } else {
        l / KAPPA
    };
    let xyz = [
        lab_f_inv(fx) * WHITE[0],
        yr * WHITE[1],
        lab_f_inv(fz) * WHITE[2],
    ];
    std::array::from_fn(|r| {
        let lin: f64 = (0..3).map(|k| XYZ_TO_RGB[r][k] * xyz[k]).sum();
        linear_to_srgb(lin.max(0.0)).clamp(0.0, 1.0)
    })
}

/// Normalized network Lab triple from CIE units.
pub fn normalize_lab(lab: [f64; 3]) -> [f64; 3] {
    [
        lab[0] / LAB_L_SCALE,
        (lab[1] / LAB_AB_SCALE).clamp(-1.0, 1.0),
        (lab[2] / LAB_AB_SCALE).clamp(-1.0, 1.0),
    ]
}

pub fn denormalize_lab(lab: [f64; 3]) -> [f64; 3] {
    [
        lab[0] * LAB_L_SCALE,
        lab[1] * LAB_AB_SCALE,
        lab[2] * LAB_AB_SCALE,
    ]
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let n = img.height() * img.width();
    let mut out = Planar::filled(3, img.height(), img.width(), 0.0);
    let src = img.data();
    for i in 0..n {
        let rgb = [src[i] as f64, src[n + i] as f64, src[2 * n + i] as f64];
        let lab = normalize_lab(srgb_to_cielab(rgb));
        for (c, v) in lab.iter().enumerate() {
            out.data_mut()[c * n + i] = *v as f32;
        }
    }
    LabImage(out)
}

pub fn lab_to_rgb(img: &LabImage) -> RgbImage {
    let n = img.height() * img.width();
    let mut out = Planar::filled(3, img.height(), img.width(), 0.0);
    let src = img.data();
    for i in 0..n {
        let lab = denormalize_lab([src[i] as f64, src[n + i] as f64, src[2 * n + i] as f64]);
        let rgb = cielab_to_srgb(lab);
        for (c, v) in rgb.iter().enumerate() {
            out.data_mut()[c * n + i] = *v as f32;
        }
    }
    RgbImage(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_maps_to_origin() {
        let lab = normalize_lab(srgb_to_cielab([0.0; 3]));
        assert!(lab.iter().all(|v| v.abs() < 1e-9), "{lab:?}");
    }

    #[test]
    fn white_maps_to_full_lightness() {
        let lab = normalize_lab(srgb_to_cielab([1.0; 3]));
        assert!(
            (lab[0] - 1.0).abs() < 1e-3 && lab[1].abs() < 1e-3 && lab[2].abs() < 1e-3,
            "{lab:?}"
        );
    }

    #[test]
    fn known_primary() {
        // sRGB red: L 53.24, a 80.09, b 67.20
        let lab = srgb_to_cielab([1.0, 0.0, 0.0]);
        assert!(
            (lab[0] - 53.24).abs() < 0.01
                && (lab[1] - 80.09).abs() < 0.01
                && (lab[2] - 67.20).abs() < 0.01
        );
    }

    #[test]
    fn l_channel_view_shape() {
        let img = RgbImage::from_fn(4, 5, |_, _, _| 0.5).to_lab();
        let l = img.l_channel();
        assert_eq!((l.channels(), l.height(), l.width()), (1, 4, 5));
    }

    #[test]
    fn out_of_gamut_lab_is_clamped() {
        let rgb = cielab_to_srgb([120.0, 300.0, -300.0]);
        assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
