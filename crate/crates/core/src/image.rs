//! Dense row-major float images.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(
                "image data",
                width * height * channels,
                data.len(),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Image, context: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(context, self.shape_string(), other.shape_string()))
        }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Quantizes to 8-bit RGB for previews. Single-channel images are replicated.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for px in self.pixels() {
            for c in 0..3 {
                let v = px[c.min(self.channels - 1)];
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }
}

/// Everything one render produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBundle {
    pub rgb: Image,
    pub feature: Image,
    pub depth: Image,
    pub alpha: Image,
}

impl ImageBundle {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            rgb: Image::new(width, height, 3),
            feature: Image::new(width, height, 3),
            depth: Image::new(width, height, 1),
            alpha: Image::new(width, height, 1),
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width
    }

    pub fn height(&self) -> usize {
        self.rgb.height
    }

    pub fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        let ok = [(&self.rgb, 3), (&self.feature, 3), (&self.depth, 1), (&self.alpha, 1)]
            .iter()
            .all(|(img, ch)| img.width == width && img.height == height && img.channels == *ch);
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "image bundle",
                format!("{height}x{width}"),
                format!("{}x{}", self.rgb.height, self.rgb.width),
            ))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rgb.is_finite() && self.feature.is_finite() && self.depth.is_finite() && self.alpha.is_finite()
    }
}

/// Peak signal-to-noise ratio for images with unit peak.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
