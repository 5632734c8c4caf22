//! Dataset evaluation: build each LR/HR pair, predict, score.

use std::fmt::Write as _;

use crate::error::{Result, ScsError};
use crate::imaging::{make_pair, ElasticParams, LabImage, Planar, RgbImage, TrainPair};
use crate::metrics::MetricReport;
use crate::model::{Generator, Mode, ParamSet};
use crate::training::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: Mode,
    pub scale: f64,
    pub rows: Vec<EvalRow>,
    pub mean: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub scale: f64,
    pub mode: Mode,
    /// Seeds the self-reference augmentation of each image.
    pub seed: u64,
    pub elastic: ElasticParams,
}

/// Scores `predict` on every image. In referential mode each image's
/// reference is its own augmented low-resolution colour version.
///
/// The ground truth is scored after the same Lab round trip the prediction
/// goes through, so a perfect prediction has infinite PSNR.
pub fn evaluate(
    images: &[(String, RgbImage)],
    opts: &EvalOptions,
    mut predict: impl FnMut(&TrainPair, Option<&LabImage>) -> Result<LabImage>,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(ScsError::Data("evaluation dataset is empty".into()));
    }
    let mut rows = Vec::with_capacity(images.len());
    for (i, (name, img)) in images.iter().enumerate() {
        let pair = make_pair(img, opts.scale)?;
        let reference = (opts.mode == Mode::Ref).then(|| {
            pair.reference(
                derive_seed(opts.seed, Stream::Reference, i as u64),
                &opts.elastic,
            )
        });
        let pred = predict(&pair, reference.as_ref())?;
        let report = MetricReport::compute(&pred.to_rgb(), &pair.target.to_rgb())?;
        rows.push(EvalRow {
            name: name.clone(),
            report,
        });
    }
    let mean =
        MetricReport::mean(&rows.iter().map(|r| r.report).collect::<Vec<_>>()).expect("non-empty");
    Ok(EvalReport {
        mode: opts.mode,
        scale: opts.scale,
        rows,
        mean,
    })
}

/// Runs the generator on one pair.
pub fn predict_pair(
    gen: &Generator,
    params: &ParamSet<f32>,
    pair: &TrainPair,
    reference: Option<&LabImage>,
    mode: Mode,
) -> Result<LabImage> {
    let source = pair.source.to_tensor();
    let reference = reference.map(|r| r.to_tensor());
    let out = gen.predict(params, &source, reference.as_ref(), mode, pair.scale)?;
    let planar = Planar::from_batch(&out)?.remove(0);
    LabImage::from_planar(planar)
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    /// Aligned table, one row per image plus the mean.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {} scale {}", self.mode, self.scale);
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>8} {:>8}",
            "image", "PSNR", "SSIM", "CN"
        );
        let line = |s: &mut String, name: &str, r: &MetricReport| {
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>8.4} {:>8.4}",
                name,
                fmt_psnr(r.psnr),
                r.ssim,
                r.cn
            );
        };
        for row in &self.rows {
            line(&mut s, &row.name, &row.report);
        }
        line(&mut s, "mean", &self.mean);
        s
    }

    /// `image,psnr,ssim,cn` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,psnr,ssim,cn\n");
        for (name, r) in self
            .rows
            .iter()
            .map(|r| (r.name.as_str(), &r.report))
            .chain([("mean", &self.mean)])
        {
            let _ = writeln!(s, "{name},{},{},{}", fmt_psnr(r.psnr), r.ssim, r.cn);
        }
        s
    }
}
