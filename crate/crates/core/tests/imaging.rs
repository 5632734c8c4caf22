use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scsnet::imaging::augment::displacement_field;
use scsnet::imaging::color::{cielab_to_srgb, normalize_lab, srgb_to_cielab};
use scsnet::imaging::io::{load_dataset, load_rgb, save_rgb, write_manifest};
use scsnet::imaging::resample::{bicubic_downsample, resize_bicubic};
use scsnet::imaging::synth::{channel_stds, MIN_CHANNEL_STD};
use scsnet::imaging::{
    augment_reference, make_pair, synth_dataset, ElasticParams, LabImage, Planar, RgbImage,
};

fn random_planar(c: usize, h: usize, w: usize, seed: u64) -> Planar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Planar::new(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.random::<f32>()).collect(),
    )
    .unwrap()
}

fn keys(x: f64) -> f64 {
    let x = x.abs();
    let a = -0.5;
    if x < 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Direct 2-D bicubic: every output pixel sums the full tensor-product kernel.
fn bicubic_oracle(img: &Planar, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let sy = (h as f64 / oh as f64).max(1.0);
    let sx = (w as f64 / ow as f64).max(1.0);
    let mut out = Vec::new();
    for c in 0..img.channels() {
        for i in 0..oh {
            let cy = (i as f64 + 0.5) * h as f64 / oh as f64 - 0.5;
            for j in 0..ow {
                let cx = (j as f64 + 0.5) * w as f64 / ow as f64 - 0.5;
                let (mut acc, mut norm) = (0.0, 0.0);
                for yy in -3 * h..4 * h {
                    let wy = keys((cy - yy as f64) / sy);
                    if wy == 0.0 {
                        continue;
                    }
                    for xx in -3 * w..4 * w {
                        let wx = keys((cx - xx as f64) / sx);
                        if wx == 0.0 {
                            continue;
                        }
                        let v = img.get(c, yy.clamp(0, h - 1) as usize, xx.clamp(0, w - 1) as usize)
                            as f64;
                        acc += wy * wx * v;
                        norm += wy * wx;
                    }
                }
                out.push(acc / norm);
            }
        }
    }
    out
}

#[test]
fn bicubic_matches_direct_convolution() {
    for (seed, (oh, ow)) in [(6, 6), (4, 4), (7, 5), (11, 13), (24, 40)]
        .into_iter()
        .enumerate()
    {
        let img = random_planar(2, 16, 16, seed as u64);
        let fast = resize_bicubic(&img, oh, ow).unwrap();
        let slow = bicubic_oracle(&img, oh, ow);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((*a as f64 - b).abs() < 1e-5, "{oh}x{ow}: {a} vs {b}");
        }
    }
}

#[test]
fn bicubic_downsample_factor_four_matches_oracle() {
    let img = random_planar(3, 16, 16, 42);
    let small = bicubic_downsample(&img, 4.0).unwrap();
    assert_eq!((small.height(), small.width()), (4, 4));
    let slow = bicubic_oracle(&img, 4, 4);
    for (a, b) in small.data().iter().zip(&slow) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

#[test]
fn constant_survives_down_and_up() {
    let img = Planar::filled(3, 64, 64, 0.3);
    let small = bicubic_downsample(&img, 4.0).unwrap();
    assert_eq!((small.height(), small.width()), (16, 16));
    let back = resize_bicubic(&small, 64, 64).unwrap();
    assert!(back.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
}

/// CIE Lab of D65 white and black from the textbook definitions.
#[test]
fn white_and_black_points() {
    let white = normalize_lab(srgb_to_cielab([1.0, 1.0, 1.0]));
    assert!((white[0] - 1.0).abs() < 1e-3);
    assert!(white[1].abs() < 1e-3 && white[2].abs() < 1e-3);
    assert_eq!(
        normalize_lab(srgb_to_cielab([0.0, 0.0, 0.0])),
        [0.0, 0.0, 0.0]
    );
}

/// Textbook sRGB -> Lab for a mid gray: L* = 116 f(Y) - 16 with Y from the
/// sRGB transfer curve. The conversion matrix is tabulated to four decimals,
/// so agreement is to that precision.
#[test]
fn mid_gray_lightness() {
    let v: f64 = 0.5;
    let y = ((v + 0.055) / 1.055).powf(2.4);
    let l = 116.0 * y.cbrt() - 16.0;
    let lab = srgb_to_cielab([v, v, v]);
    assert!((lab[0] - l).abs() < 1e-4, "{} vs {l}", lab[0]);
    assert!(lab[1].abs() < 1e-3 && lab[2].abs() < 1e-3);
}

#[test]
fn lab_round_trip_on_random_colors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let rgb = [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ];
        let back = cielab_to_srgb(srgb_to_cielab(rgb));
        for c in 0..3 {
            worst = worst.max((back[c] - rgb[c]).abs());
        }
    }
    assert!(worst < 1e-3, "max error {worst}");
}

#[test]
fn image_round_trip_through_normalized_lab() {
    let img = RgbImage::from_planar(random_planar(3, 10, 12, 3)).unwrap();
    let back = img.to_lab().to_rgb();
    for (a, b) in img.data().iter().zip(back.data()) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn lab_channel_ranges() {
    let lab = RgbImage::from_planar(random_planar(3, 20, 20, 4))
        .unwrap()
        .to_lab();
    assert!(lab.plane(0).iter().all(|v| (0.0..=1.0).contains(v)));
    for c in 1..3 {
        assert!(lab.plane(c).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    let l = lab.l_channel();
    assert_eq!((l.channels(), l.height(), l.width()), (1, 20, 20));
}

#[test]
fn synthetic_dataset_is_deterministic() {
    let a = synth_dataset(11, 5, 32).unwrap();
    let b = synth_dataset(11, 5, 32).unwrap();
    let c = synth_dataset(12, 5, 32).unwrap();
    let bits = |v: &[RgbImage]| {
        v.iter()
            .flat_map(|i| i.data().iter().map(|x| x.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn synthetic_dataset_shape_and_color_spread() {
    let data = synth_dataset(0, 100, 64).unwrap();
    assert_eq!(data.len(), 100);
    for img in &data {
        assert_eq!((img.channels(), img.height(), img.width()), (3, 64, 64));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // independent scan of the per-channel standard deviation
        for c in 0..3 {
            let p = img.plane(c);
            let m = p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
            let var = p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / p.len() as f64;
            assert!(var.sqrt() >= MIN_CHANNEL_STD);
        }
        assert!(channel_stds(img).iter().all(|&s| s >= MIN_CHANNEL_STD));
    }
}

#[test]
fn empty_dataset_rejected() {
    assert!(synth_dataset(0, 0, 32).is_err());
}

fn lab_sample(seed: u64) -> LabImage {
    RgbImage::from_planar(random_planar(3, 32, 32, seed))
        .unwrap()
        .to_lab()
}

#[test]
fn zero_alpha_is_identity_up_to_flip() {
    let img = lab_sample(1);
    let params = ElasticParams {
        alpha: 0.0,
        ..ElasticParams::default()
    };
    let mut flips = 0;
    for seed in 0..20 {
        let out = augment_reference(&img, seed, &params);
        if out == img {
            continue;
        }
        assert_eq!(out, img.flip_horizontal());
        flips += 1;
    }
    assert!(flips > 0 && flips < 20);
}

#[test]
fn augmentation_is_seeded() {
    let img = lab_sample(2);
    let p = ElasticParams::default();
    assert_eq!(
        augment_reference(&img, 5, &p),
        augment_reference(&img, 5, &p)
    );
    assert_ne!(
        augment_reference(&img, 5, &p),
        augment_reference(&img, 6, &p)
    );
}

#[test]
fn augmented_values_stay_in_range() {
    let out = augment_reference(&lab_sample(3), 9, &ElasticParams::default());
    assert!(out.plane(0).iter().all(|v| (0.0..=1.0).contains(v)));
}

/// The smoothed field is close to Gaussian, so the displacement magnitude
/// is Rayleigh distributed with mean `s * sqrt(pi / 2)` for component std `s`.
#[test]
fn displacement_magnitude_monte_carlo() {
    let params = ElasticParams::default();
    let (h, w) = (16, 64);
    let s = params.alpha / 4.0;
    let (mut mag, mut sq, mut n) = (0.0, 0.0, 0.0);
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dy, dx) = displacement_field(h, w, &params, &mut rng);
        // one sample per field keeps the draws independent
        let i = (seed as usize * 37) % (h * w);
        mag += (dy[i] * dy[i] + dx[i] * dx[i]).sqrt();
        sq += dx[i] * dx[i] + dy[i] * dy[i];
        n += 1.0;
    }
    let mean = mag / n;
    let expected = s * (std::f64::consts::PI / 2.0).sqrt();
    assert!(
        (mean / expected - 1.0).abs() < 0.1,
        "mean {mean}, expected {expected}"
    );
    let std = (sq / (2.0 * n)).sqrt();
    assert!(
        (std / s - 1.0).abs() < 0.1,
        "component std {std}, expected {s}"
    );
}

#[test]
fn pair_shapes_for_fractional_scales() {
    let hr = synth_dataset(3, 1, 64).unwrap().remove(0);
    for p in [1.5, 2.5, 3.3] {
        let pair = make_pair(&hr, p).unwrap();
        let hs = (64.0 / p).floor() as usize;
        let ho = (hs as f64 * p).floor() as usize;
        assert_eq!(
            (
                pair.source.channels(),
                pair.source.height(),
                pair.source.width()
            ),
            (1, hs, hs)
        );
        assert_eq!(
            (
                pair.target.channels(),
                pair.target.height(),
                pair.target.width()
            ),
            (3, ho, ho)
        );
    }
}

#[test]
fn gray_image_has_neutral_target() {
    let hr = RgbImage::from_fn(64, 64, |_, y, x| ((x + 2 * y) % 17) as f32 / 16.0);
    let pair = make_pair(&hr, 4.0).unwrap();
    for c in 1..3 {
        assert!(pair.target.plane(c).iter().all(|v| v.abs() < 1e-3));
    }
    let lr = RgbImage::clamped(bicubic_downsample(&hr, 4.0).unwrap()).unwrap();
    assert_eq!(pair.source, lr.to_lab().l_channel());
}

#[test]
fn png_and_ppm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = synth_dataset(1, 1, 16).unwrap().remove(0);
    for ext in ["png", "ppm"] {
        let path = dir.path().join(format!("a.{ext}"));
        save_rgb(&img, &path).unwrap();
        let back = load_rgb(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}

#[test]
fn manifest_lists_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = synth_dataset(2, 3, 16).unwrap();
    let mut files = Vec::new();
    for (i, img) in imgs.iter().enumerate() {
        let p = dir.path().join(format!("img{i}.png"));
        save_rgb(img, &p).unwrap();
        files.push(p);
    }
    let manifest = write_manifest(dir.path(), &files).unwrap();
    assert_eq!(load_dataset(&manifest).unwrap().len(), 3);
    assert_eq!(load_dataset(dir.path()).unwrap().len(), 3);
}

#[test]
fn unsupported_extension_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = synth_dataset(1, 1, 8).unwrap().remove(0);
    assert!(save_rgb(&img, &dir.path().join("a.jpg")).is_err());
    assert!(load_rgb(&dir.path().join("missing.png")).is_err());
}
