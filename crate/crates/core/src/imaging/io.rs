//! PNG / PPM (P6) files and line-oriented dataset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage as Rgb8};

use crate::error::{Result, ScsError};
use crate::imaging::color::RgbImage;

pub const MANIFEST_NAME: &str = "manifest.txt";

fn image_err(path: &Path, e: impl std::fmt::Display) -> ScsError {
    ScsError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(image_err(
            path,
            "unsupported extension (expected .png or .ppm)",
        )),
    }
}

pub fn to_rgb8(img: &RgbImage) -> Rgb8 {
    let (h, w) = (img.height(), img.width());
    Rgb8::from_fn(w as u32, h as u32, |x, y| {
        let px = |c| (img.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn from_rgb8(buf: &Rgb8) -> RgbImage {
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    RgbImage::from_fn(h, w, |c, y, x| {
        buf.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Writes 8-bit RGB; the format follows the extension (`.png` or `.ppm`).
pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let format = format_for(path)?;
    to_rgb8(img)
        .save_with_format(path, format)
        .map_err(|e| image_err(path, e))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| ScsError::io(path, e))?;
    let dynamic =
        image::load_from_memory_with_format(&bytes, format).map_err(|e| image_err(path, e))?;
    Ok(from_rgb8(&dynamic.to_rgb8()))
}

/// One path per line, relative to the manifest's directory.
pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    let body: String = files.iter().map(|f| format!("{}\n", f.display())).collect();
    fs::write(&path, body).map_err(|e| ScsError::io(&path, e))?;
    Ok(path)
}

/// Resolved image paths listed in `dir/manifest.txt` (or in `path` itself
/// when it names a file). Blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&manifest).map_err(|e| ScsError::io(&manifest, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn load_dataset(path: &Path) -> Result<Vec<RgbImage>> {
    let files = read_manifest(path)?;
    if files.is_empty() {
        return Err(ScsError::Data(format!(
            "{} lists no images",
            path.display()
        )));
    }
    files.iter().map(|f| load_rgb(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip_is_exact_on_grid_values() {
        let img = RgbImage::from_fn(3, 5, |c, y, x| {
            ((c * 31 + y * 7 + x * 3) % 256) as f32 / 255.0
        });
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            save_rgb(&img, &p).unwrap();
            assert_eq!(load_rgb(&p).unwrap(), img);
        }
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let img = RgbImage::from_fn(2, 2, |_, _, _| 0.0);
        assert!(save_rgb(&img, Path::new("/tmp/x.jpg")).is_err());
    }

    #[test]
    fn manifest_paths_resolve_against_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(
            dir.path(),
            &[PathBuf::from("a.png"), PathBuf::from("b.png")],
        )
        .unwrap();
        let files = read_manifest(dir.path()).unwrap();
        assert_eq!(
            files,
            vec![dir.path().join("a.png"), dir.path().join("b.png")]
        );
    }
}
