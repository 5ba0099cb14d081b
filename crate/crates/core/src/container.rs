//! Container header: 18 bytes followed by the range-coder payload.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SCF1"
//!      4     1  version (1)
//!      5     1  option flags: bit0 palette reduction, bit1 residual
//!               reduction, bit2 flag elision
//!      6     4  width, little endian
//!     10     4  height, little endian
//!     14     4  number of distinct colors, little endian
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SCF1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
/// Distinct 8-bit RGB colors.
pub const MAX_COLORS: u32 = 1 << 24;

/// Independent switches for the three redundancy-removal options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecOptions {
    /// Mask colors of the context distribution out of the palette.
    pub palette_reduction: bool,
    /// Mask palette-implied residuals out of the final channel.
    pub residual_reduction: bool,
    /// Skip stage flags whose value is implied.
    pub flag_elision: bool,
}

impl Default for CodecOptions {
    fn default() -> Self {
        Self::all()
    }
}

impl CodecOptions {
    pub const fn all() -> Self {
        Self {
            palette_reduction: true,
            residual_reduction: true,
            flag_elision: true,
        }
    }

    pub const fn base() -> Self {
        Self {
            palette_reduction: false,
            residual_reduction: false,
            flag_elision: false,
        }
    }

    pub const fn new(p: bool, r: bool, f: bool) -> Self {
        Self {
            palette_reduction: p,
            residual_reduction: r,
            flag_elision: f,
        }
    }

    pub fn bits(self) -> u8 {
        self.palette_reduction as u8
            | (self.residual_reduction as u8) << 1
            | (self.flag_elision as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & !0b111 != 0 {
            return Err(Error::InvalidHeader(format!(
                "unknown option bits {bits:#04x}"
            )));
        }
        Ok(Self::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0))
    }

    /// All eight combinations, ordered by their flag bits.
    pub fn all_combinations() -> [CodecOptions; 8] {
        std::array::from_fn(|i| Self::new(i & 1 != 0, i & 2 != 0, i & 4 != 0))
    }

    /// Short label: "Base" or the enabled letters, e.g. "PR".
    pub fn label(self) -> String {
        let mut s = String::new();
        if self.palette_reduction {
            s.push('P');
        }
        if self.residual_reduction {
            s.push('R');
        }
        if self.flag_elision {
            s.push('F');
        }
        if s.is_empty() {
            s.push_str("Base");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub options: CodecOptions,
    pub width: u32,
    pub height: u32,
    pub unique_colors: u32,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5] = self.options.bits();
        out[6..10].copy_from_slice(&self.width.to_le_bytes());
        out[10..14].copy_from_slice(&self.height.to_le_bytes());
        out[14..18].copy_from_slice(&self.unique_colors.to_le_bytes());
        out
    }

    /// Parses and validates the header; returns it with the payload slice.
    pub fn parse(data: &[u8]) -> Result<(Header, &[u8])> {
        if data.len() < 4 || data[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if data.len() < HEADER_LEN {
            return Err(Error::Truncated { offset: data.len() });
        }
        if data[4] != VERSION {
            return Err(Error::UnsupportedVersion(data[4]));
        }
        let word = |at: usize| u32::from_le_bytes(data[at..at + 4].try_into().unwrap());
        let header = Header {
            options: CodecOptions::from_bits(data[5])?,
            width: word(6),
            height: word(10),
            unique_colors: word(14),
        };
        header.validate()?;
        Ok((header, &data[HEADER_LEN..]))
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidHeader(format!(
                "empty raster {}x{}",
                self.width, self.height
            )));
        }
        let max = self.pixel_count().min(u64::from(MAX_COLORS));
        if self.unique_colors == 0 || u64::from(self.unique_colors) > max {
            return Err(Error::InvalidHeader(format!(
                "{} distinct colors for {} pixels",
                self.unique_colors,
                self.pixel_count()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = Header {
            options: CodecOptions::new(true, false, true),
            width: 0x0102_0304,
            height: 7,
            unique_colors: 5,
        };
        let bytes = h.to_bytes();
        assert_eq!(&bytes[..4], b"SCF1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 0b101);
        assert_eq!(&bytes[6..10], &[4, 3, 2, 1]);
        assert_eq!(&bytes[10..14], &[7, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &[5, 0, 0, 0]);
        let (parsed, rest) = Header::parse(&bytes).unwrap();
        assert_eq!(parsed, h);
        assert!(rest.is_empty());
    }

    #[test]
    fn rejects_bad_headers() {
        let good = Header {
            options: CodecOptions::all(),
            width: 2,
            height: 2,
            unique_colors: 4,
        }
        .to_bytes();
        let mut b = good;
        b[0] = b'X';
        assert!(matches!(Header::parse(&b), Err(Error::BadMagic)));
        let mut b = good;
        b[4] = 2;
        assert!(matches!(
            Header::parse(&b),
            Err(Error::UnsupportedVersion(2))
        ));
        let mut b = good;
        b[5] = 0x08;
        assert!(matches!(Header::parse(&b), Err(Error::InvalidHeader(_))));
        let mut b = good;
        b[14] = 5;
        assert!(matches!(Header::parse(&b), Err(Error::InvalidHeader(_))));
        let mut b = good;
        b[6] = 0;
        assert!(matches!(Header::parse(&b), Err(Error::InvalidHeader(_))));
        assert!(matches!(
            Header::parse(&good[..10]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn option_bits_round_trip() {
        for o in CodecOptions::all_combinations() {
            assert_eq!(CodecOptions::from_bits(o.bits()).unwrap(), o);
        }
        assert_eq!(CodecOptions::base().label(), "Base");
        assert_eq!(CodecOptions::all().label(), "PRF");
    }
}
