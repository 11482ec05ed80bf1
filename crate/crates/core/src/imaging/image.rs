use crate::error::{Error, Result};

/// Grayscale image with row-major intensities, nominally in `[0, 1]`.
///
/// Values outside the nominal range are allowed (unclipped noisy images);
/// every value must be finite.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract(format!("image must be non-empty, got {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::dims("pixel count", height * width, pixels.len()));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericFailure(format!(
                "non-finite pixel at row {}, col {}",
                i / width,
                i % width
            )));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        GrayImage::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        GrayImage::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Sub-image of size `height x width` with top-left corner `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Contract(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        GrayImage::from_fn(height, width, |r, c| self.get(row + r, col + c))
    }

    /// Image grown by `pad` pixels on every side, mirroring about the edge
    /// pixels (the edge itself is not repeated).
    pub fn pad_reflect(&self, pad: usize) -> Result<Self> {
        if pad >= self.height || pad >= self.width {
            return Err(Error::Contract(format!(
                "reflect padding {pad} needs an image larger than {}x{}",
                self.height, self.width
            )));
        }
        let mirror = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
            j as usize
        };
        let p = pad as isize;
        GrayImage::from_fn(self.height + 2 * pad, self.width + 2 * pad, |r, c| {
            self.get(mirror(r as isize - p, self.height), mirror(c as isize - p, self.width))
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        GrayImage::new(self.height, self.width, self.pixels.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}
