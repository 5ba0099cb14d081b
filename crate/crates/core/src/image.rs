use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::Color;

/// Read access to a raster whose pixels may be only partially known; callers
/// only ask for positions already coded.
pub trait PixelSource {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn pixel(&self, x: u32, y: u32) -> Color;

    /// Pixel at a signed offset from `(x, y)`, or `None` outside the raster.
    fn neighbor(&self, x: u32, y: u32, dx: i32, dy: i32) -> Option<Color> {
        let nx = x as i64 + dx as i64;
        let ny = y as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.width() as i64 || ny >= self.height() as i64 {
            return None;
        }
        Some(self.pixel(nx as u32, ny as u32))
    }
}

/// 8-bit RGB raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<Color>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Color>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty raster {width}x{height}"
            )));
        }
        let expected = width as u64 * height as u64;
        if pixels.len() as u64 != expected {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, color: Color) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    /// Builds an image from interleaved RGB bytes.
    pub fn from_rgb_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(3) {
            return Err(Error::InvalidImage("byte count not a multiple of 3".into()));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| Color::new(c[0], c[1], c[2]))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|c| c.channels()).collect()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> u64 {
        self.pixels.len() as u64
    }

    pub fn pixels(&self) -> &[Color] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Color] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Color {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Color) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = c;
    }

    /// First pixel (raster order) where two same-sized images differ.
    pub fn first_difference(&self, other: &RgbImage) -> Option<(u32, u32)> {
        if self.width != other.width || self.height != other.height {
            return Some((0, 0));
        }
        self.pixels
            .iter()
            .zip(&other.pixels)
            .position(|(a, b)| a != b)
            .map(|i| {
                (
                    (i % self.width as usize) as u32,
                    (i / self.width as usize) as u32,
                )
            })
    }
}

impl PixelSource for RgbImage {
    fn width(&self) -> u32 {
        self.width
    }

    fn height(&self) -> u32 {
        self.height
    }

    fn pixel(&self, x: u32, y: u32) -> Color {
        self.get(x, y)
    }
}

/// Number of distinct colors in the image.
pub fn count_unique_colors(img: &RgbImage) -> u32 {
    img.pixels().iter().collect::<HashSet<_>>().len() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_counts() {
        let gray = Color::new(9, 9, 9);
        assert_eq!(
            count_unique_colors(&RgbImage::filled(5, 3, gray).unwrap()),
            1
        );
        let four = RgbImage::new(
            2,
            2,
            vec![
                Color::new(0, 0, 0),
                Color::new(1, 0, 0),
                Color::new(0, 1, 0),
                Color::new(0, 0, 1),
            ],
        )
        .unwrap();
        assert_eq!(count_unique_colors(&four), 4);
        let ramp =
            RgbImage::new(256, 1, (0..=255u8).map(|r| Color::new(r, 0, 0)).collect()).unwrap();
        assert_eq!(count_unique_colors(&ramp), 256);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(RgbImage::new(0, 4, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![Color::BLACK; 3]).is_err());
    }
}
