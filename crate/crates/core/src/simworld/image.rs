use crate::error::{Error, Result};

/// Packed RGB frame as produced by the renderer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    /// First row below the horizon as reported by the renderer.
    pub horizon_row: usize,
    pub rgb: Vec<u8>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, horizon_row: usize, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "empty image {width}x{height}"
            )));
        }
        if rgb.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                3 * width * height,
                rgb.len()
            )));
        }
        if horizon_row >= height {
            return Err(Error::InvalidArgument(format!(
                "horizon row {horizon_row} outside {height} rows"
            )));
        }
        Ok(ImageFrame {
            width,
            height,
            horizon_row,
            rgb,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let rgb = color
            .iter()
            .copied()
            .cycle()
            .take(3 * width * height)
            .collect();
        ImageFrame {
            width,
            height,
            horizon_row: 0,
            rgb,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Columns reversed.
    pub fn mirrored(&self) -> ImageFrame {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(self.width - 1 - x, y, self.pixel(x, y));
            }
        }
        out
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}
