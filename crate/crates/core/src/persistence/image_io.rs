use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::image::{Image, ImageBundle};

/// Header of a little-endian PFM file.
pub fn pfm_header(width: usize, height: usize, channels: usize) -> String {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    format!("{tag}\n{width} {height}\n-1.0\n")
}

/// Writes a 1- or 3-channel image as 32-bit PFM (rows stored bottom-up).
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    if img.channels != 1 && img.channels != 3 {
        return Err(Error::InvalidParameter(format!("PFM holds 1 or 3 channels, not {}", img.channels)));
    }
    let mut bytes = pfm_header(img.width, img.height, img.channels).into_bytes();
    bytes.reserve(img.data.len() * 4);
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = read_file(path)?;
    let malformed = |reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    // three newline-terminated header lines
    let mut lines = Vec::new();
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            lines.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| malformed("header is not text"))?);
            start = i + 1;
            if lines.len() == 3 {
                break;
            }
        }
    }
    if lines.len() != 3 {
        return Err(malformed("incomplete header"));
    }
    let channels = match lines[0].trim() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(malformed(&format!("unknown magic `{other}`"))),
    };
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| malformed("bad dimensions")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(malformed("bad dimensions"));
    }
    let scale: f64 = lines[2].trim().parse().map_err(|_| malformed("bad scale"))?;
    let little = scale < 0.0;
    let (width, height) = (dims[0], dims[1]);
    let row = width * channels;
    let payload = &bytes[start..];
    if payload.len() != row * height * 4 {
        return Err(malformed(&format!("expected {} payload bytes, found {}", row * height * 4, payload.len())));
    }
    let mut data = vec![0.0; row * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v as f64;
    }
    Image::from_data(width, height, channels, data)
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb8: &[u8]) -> Result<()> {
    if rgb8.len() != width * height * 3 {
        return Err(Error::shape("png", width * height * 3, rgb8.len()));
    }
    let mut bytes = Vec::new();
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb8.to_vec())
        .ok_or_else(|| Error::shape("png", width * height * 3, rgb8.len()))?;
    let mut cursor = std::io::Cursor::new(&mut bytes);
    buf.write_to(&mut cursor, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    write_file(path, &bytes)
}

/// Writes `{stem}_rgb.pfm`, `_feature.pfm`, `_depth.pfm`, `_alpha.pfm` and an
/// 8-bit `{stem}_rgb.png` preview into `dir`.
pub fn write_bundle(dir: &Path, stem: &str, bundle: &ImageBundle) -> Result<()> {
    for (name, img) in [
        ("rgb", &bundle.rgb),
        ("feature", &bundle.feature),
        ("depth", &bundle.depth),
        ("alpha", &bundle.alpha),
    ] {
        write_pfm(&dir.join(format!("{stem}_{name}.pfm")), img)?;
    }
    write_png(
        &dir.join(format!("{stem}_rgb.png")),
        bundle.width(),
        bundle.height(),
        &bundle.rgb.to_rgb8(),
    )
}

/// Returns `(width, height, rgb8)`.
pub fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    Ok((rgb.width() as usize, rgb.height() as usize, rgb.into_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_format() {
        assert_eq!(pfm_header(64, 64, 1), "Pf\n64 64\n-1.0\n");
        assert_eq!(pfm_header(3, 2, 3), "PF\n3 2\n-1.0\n");
    }

    #[test]
    fn pfm_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for channels in [1, 3] {
            let data = (0..7 * 5 * channels).map(|_| (rng.gen::<f32>() * 100.0 - 50.0) as f64).collect();
            let img = Image::from_data(7, 5, channels, data).unwrap();
            let path = dir.path().join(format!("img{channels}.pfm"));
            write_pfm(&path, &img).unwrap();
            assert_eq!(read_pfm(&path).unwrap(), img);
        }
    }

    #[test]
    fn pfm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"P6\n1 1\n255\n000").unwrap();
        assert!(matches!(read_pfm(&path), Err(Error::Malformed { .. })));
        std::fs::write(&path, b"Pf\n2 2\n-1.0\n0000").unwrap();
        assert!(matches!(read_pfm(&path), Err(Error::Malformed { .. })));
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::filled(4, 3, 3, 0.5);
        write_png(&path, 4, 3, &img.to_rgb8()).unwrap();
        let (w, h, px) = read_png(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert!(px.chunks(3).all(|p| p == [128, 128, 128]));
    }
}
