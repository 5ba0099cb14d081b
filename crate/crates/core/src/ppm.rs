//! Binary PPM (P6) reading and writing, 8 bits per channel only.

use crate::error::{Error, Result};
use crate::image::RgbImage;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidImage(msg.into())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("missing or invalid {what} in PPM header")))
    }
}

pub fn parse_ppm(data: &[u8]) -> Result<RgbImage> {
    if data.len() < 2 || &data[..2] != b"P6" {
        return Err(bad("not a binary PPM (P6) file"));
    }
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(bad(format!(
            "unsupported maxval {maxval}, only 255 is accepted"
        )));
    }
    match data.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(bad("missing whitespace after PPM header")),
    }
    let needed = width as u64 * height as u64 * 3;
    let body = &data[cur.pos..];
    if (body.len() as u64) < needed {
        return Err(bad(format!(
            "PPM raster truncated: {} of {needed} bytes",
            body.len()
        )));
    }
    RgbImage::from_rgb_bytes(width, height, &body[..needed as usize])
}

pub fn write_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_rgb_bytes());
    out
}
