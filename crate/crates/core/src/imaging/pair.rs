use scs_tensor::Tensor;

use crate::error::{Result, ScsError};
use crate::imaging::augment::{augment_reference, ElasticParams};
use crate::imaging::color::{LabImage, Planar, RgbImage};
use crate::imaging::resample::{downscaled_dim, resize_bicubic};

/// `floor(n * p)`, tolerant of representation error in `p`.
pub fn scaled_dim(n: usize, p: f64) -> usize {
    (n as f64 * p + 1e-9).floor() as usize
}

/// One low-resolution / high-resolution training or evaluation example.
#[derive(Debug, Clone)]
pub struct TrainPair {
    /// `[1, Hs, Ws]` lightness of the downsampled image.
    pub source: Planar,
    /// Lab of the downsampled image, before any augmentation.
    pub source_lab: LabImage,
    /// `[3, floor(Hs p), floor(Ws p)]`.
    pub target: LabImage,
    pub target_rgb: RgbImage,
    pub scale: f64,
}

impl TrainPair {
    /// Self-reference: the augmented low-resolution colour image.
    pub fn reference(&self, seed: u64, params: &ElasticParams) -> LabImage {
        augment_reference(&self.source_lab, seed, params)
    }
}

/// Builds the pair for magnification `p > 1`.
///
/// The source is `floor(H / p) x floor(W / p)`; `hr` is center-cropped to
/// `floor(Hs p) x floor(Ws p)` first so the target matches the shape the
/// network produces.
pub fn make_pair(hr: &RgbImage, p: f64) -> Result<TrainPair> {
    if !(p.is_finite() && p > 1.0) {
        return Err(ScsError::Argument(format!("scale {p} must be > 1")));
    }
    let (hs, ws) = (
        downscaled_dim(hr.height(), p),
        downscaled_dim(hr.width(), p),
    );
    if hs == 0 || ws == 0 {
        return Err(ScsError::Argument(format!(
            "{}x{} image is too small for scale {p}",
            hr.height(),
            hr.width()
        )));
    }
    let (ho, wo) = (scaled_dim(hs, p), scaled_dim(ws, p));
    let cropped =
        RgbImage::from_planar(hr.crop((hr.height() - ho) / 2, (hr.width() - wo) / 2, ho, wo)?)?;
    let lr = RgbImage::clamped(resize_bicubic(cropped.planar(), hs, ws)?)?;
    let source_lab = lr.to_lab();
    Ok(TrainPair {
        source: source_lab.l_channel(),
        source_lab,
        target: cropped.to_lab(),
        target_rgb: cropped,
        scale: p,
    })
}

/// A stacked minibatch of pairs sharing one scale.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub source: Tensor<f32>,
    pub reference: Option<Tensor<f32>>,
    pub target: Tensor<f32>,
    pub scale: f64,
}

pub fn stack(images: &[&Planar]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| ScsError::Argument("empty batch".into()))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.channels(), img.height(), img.width()) != (c, h, w) {
            return Err(ScsError::Argument("batch images differ in shape".into()));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::new(vec![images.len(), c, h, w], data)?)
}

impl TrainBatch {
    pub fn new(pairs: &[&TrainPair], references: Option<&[LabImage]>) -> Result<Self> {
        let scale = pairs
            .first()
            .ok_or_else(|| ScsError::Argument("empty batch".into()))?
            .scale;
        if pairs.iter().any(|p| p.scale != scale) {
            return Err(ScsError::Argument("batch mixes scales".into()));
        }
        let source = stack(&pairs.iter().map(|p| &p.source).collect::<Vec<_>>())?;
        let target = stack(&pairs.iter().map(|p| p.target.planar()).collect::<Vec<_>>())?;
        let reference = match references {
            Some(r) => {
                if r.len() != pairs.len() {
                    return Err(ScsError::Argument("one reference per pair required".into()));
                }
                Some(stack(&r.iter().map(LabImage::planar).collect::<Vec<_>>())?)
            }
            None => None,
        };
        Ok(Self {
            source,
            reference,
            target,
            scale,
        })
    }
}
