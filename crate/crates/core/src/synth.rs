//! Deterministic synthetic screen-content images for tests and benchmarks.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::model::Color;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    /// Glyph rows on a flat background; exactly K colors.
    Text,
    /// Random axis-aligned rectangles; exactly K colors.
    Blocks,
    /// Quantized diagonal ramp; at most K colors.
    Gradient,
    /// Uniform random 24-bit pixels; K is ignored.
    Noise,
}

impl ImageKind {
    pub const ALL: [ImageKind; 4] = [
        ImageKind::Text,
        ImageKind::Blocks,
        ImageKind::Gradient,
        ImageKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Text => "text",
            ImageKind::Blocks => "blocks",
            ImageKind::Gradient => "gradient",
            ImageKind::Noise => "noise",
        }
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImageKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidImage(format!("unknown image kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: ImageKind,
    pub width: u32,
    pub height: u32,
    pub colors: u32,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: ImageKind, width: u32, height: u32, colors: u32, seed: u64) -> Self {
        Self {
            kind,
            width,
            height,
            colors,
            seed,
        }
    }

    /// File-name friendly identifier.
    pub fn name(&self) -> String {
        format!(
            "{}_{}x{}_k{}_s{}",
            self.kind, self.width, self.height, self.colors, self.seed
        )
    }
}

pub fn generate(spec: &SynthSpec) -> Result<RgbImage> {
    let (w, h, k) = (spec.width, spec.height, spec.colors);
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage(format!("empty raster {w}x{h}")));
    }
    let n = u64::from(w) * u64::from(h);
    if spec.kind != ImageKind::Noise && (k == 0 || u64::from(k) > n || k > 1 << 24) {
        return Err(Error::InvalidImage(format!(
            "color count {k} must be between 1 and the pixel count {n} (and at most 2^24)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let img = match spec.kind {
        ImageKind::Noise => noise(&mut rng, w, h),
        ImageKind::Gradient => gradient(&mut rng, w, h, k),
        ImageKind::Blocks => {
            let palette = random_palette(&mut rng, k);
            let img = blocks(&mut rng, w, h, &palette);
            stamp_all(&mut rng, img, &palette)
        }
        ImageKind::Text => {
            let palette = random_palette(&mut rng, k);
            let img = text(&mut rng, w, h, &palette);
            stamp_all(&mut rng, img, &palette)
        }
    };
    Ok(img)
}

fn random_palette(rng: &mut ChaCha8Rng, k: u32) -> Vec<Color> {
    sample(rng, 1 << 24, k as usize)
        .into_iter()
        .map(|v| Color::new((v >> 16) as u8, (v >> 8) as u8, v as u8))
        .collect()
}

/// Writes every palette color onto its own pixel so all of them occur.
fn stamp_all(rng: &mut ChaCha8Rng, mut img: RgbImage, palette: &[Color]) -> RgbImage {
    let n = img.pixels().len();
    let positions = sample(rng, n, palette.len());
    for (pos, &c) in positions.into_iter().zip(palette) {
        img.pixels_mut()[pos] = c;
    }
    img
}

fn noise(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let bytes: Vec<u8> = (0..w as usize * h as usize * 3)
        .map(|_| rng.gen())
        .collect();
    RgbImage::from_rgb_bytes(w, h, &bytes).expect("dimensions checked")
}

fn gradient(rng: &mut ChaCha8Rng, w: u32, h: u32, k: u32) -> RgbImage {
    let from: [u8; 3] = rng.gen();
    let to: [u8; 3] = rng.gen();
    let span = (w + h).saturating_sub(2).max(1) as f64;
    let levels = k.max(1);
    let mut px = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        for x in 0..w {
            let t = f64::from(x + y) / span;
            let q = if levels == 1 {
                0.0
            } else {
                (t * f64::from(levels - 1)).round() / f64::from(levels - 1)
            };
            let ch: [u8; 3] = std::array::from_fn(|i| {
                (f64::from(from[i]) + q * (f64::from(to[i]) - f64::from(from[i]))).round() as u8
            });
            px.push(Color::from_channels(ch));
        }
    }
    RgbImage::new(w, h, px).expect("dimensions checked")
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: Color) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.set(x, y, c);
        }
    }
}

fn blocks(rng: &mut ChaCha8Rng, w: u32, h: u32, palette: &[Color]) -> RgbImage {
    let mut img = RgbImage::filled(w, h, palette[0]).expect("dimensions checked");
    let count = 4 + (u64::from(w) * u64::from(h) / 256).min(2000) as u32;
    for _ in 0..count {
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        let x1 = x0 + rng.gen_range(1..=w.div_ceil(3).max(1));
        let y1 = y0 + rng.gen_range(1..=h.div_ceil(3).max(1));
        let c = palette[rng.gen_range(0..palette.len())];
        fill(&mut img, x0, y0, x1, y1, c);
    }
    img
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

fn text(rng: &mut ChaCha8Rng, w: u32, h: u32, palette: &[Color]) -> RgbImage {
    let mut img = RgbImage::filled(w, h, palette[0]).expect("dimensions checked");
    let glyphs: Vec<u64> = (0..48)
        .map(|_| loop {
            let g = rng.gen::<u64>() & ((1 << (GLYPH_W * GLYPH_H)) - 1);
            if g.count_ones() >= 6 {
                break g;
            }
        })
        .collect();
    let ink = |rng: &mut ChaCha8Rng| palette[rng.gen_range(0..palette.len())];
    let line_h = GLYPH_H + 3;
    let mut y = 1;
    while y + GLYPH_H <= h {
        if rng.gen_bool(0.15) {
            let c = ink(rng);
            fill(&mut img, 0, y - 1, w, y + GLYPH_H + 1, c);
        }
        let mut x = 1 + rng.gen_range(0..4);
        let mut color = ink(rng);
        let mut word_left = rng.gen_range(2..9);
        while x + GLYPH_W <= w {
            let g = glyphs[rng.gen_range(0..glyphs.len())];
            for gy in 0..GLYPH_H {
                for gx in 0..GLYPH_W {
                    if g >> (gy * GLYPH_W + gx) & 1 == 1 {
                        img.set(x + gx, y + gy, color);
                    }
                }
            }
            x += GLYPH_W + 1;
            word_left -= 1;
            if word_left == 0 {
                x += GLYPH_W;
                color = ink(rng);
                word_left = rng.gen_range(2..9);
            }
        }
        y += line_h;
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::count_unique_colors;

    #[test]
    fn exact_color_counts() {
        for kind in [ImageKind::Text, ImageKind::Blocks] {
            for (w, h, k) in [
                (1, 1, 1),
                (16, 16, 2),
                (64, 48, 16),
                (64, 64, 1000),
                (40, 25, 1000),
            ] {
                let img = generate(&SynthSpec::new(kind, w, h, k, 7)).unwrap();
                assert_eq!(count_unique_colors(&img), k, "{kind} {w}x{h} k={k}");
            }
        }
        let g = generate(&SynthSpec::new(ImageKind::Gradient, 64, 64, 16, 3)).unwrap();
        assert!(count_unique_colors(&g) <= 16);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SynthSpec::new(ImageKind::Text, 50, 30, 20, 11);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let t = SynthSpec { seed: 12, ..s };
        assert_ne!(generate(&s).unwrap(), generate(&t).unwrap());
    }

    #[test]
    fn validates_color_count() {
        assert!(generate(&SynthSpec::new(ImageKind::Blocks, 2, 2, 5, 0)).is_err());
        assert!(generate(&SynthSpec::new(ImageKind::Text, 2, 2, 0, 0)).is_err());
        assert!(generate(&SynthSpec::new(ImageKind::Noise, 2, 2, 0, 0)).is_ok());
        assert_eq!(
            "gradient".parse::<ImageKind>().unwrap(),
            ImageKind::Gradient
        );
        assert!("photo".parse::<ImageKind>().is_err());
    }
}
