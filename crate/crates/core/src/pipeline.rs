//! Raster-order driver tying the three stages together. Encoder and decoder
//! run the same [`Session::code_pixel`]; only the coder differs.

use serde::{Deserialize, Serialize};

use crate::container::{CodecOptions, Header};
use crate::digest::{entry_hash, mix64, TAG_FLAGS, TAG_SESSION};
use crate::entropy::{BitModel, RangeDecoder, RangeEncoder, SymbolCoder};
use crate::error::{Error, Result};
use crate::image::{count_unique_colors, PixelSource, RgbImage};
use crate::model::{Color, Palette};
use crate::stage1::{extract_pattern, stage1_code, PatternStore, Stage1Outcome};
use crate::stage2::{compute_radius, stage2_code, Stage2Event, Stage2Input, Stage2Models};
use crate::stage3::{predict, stage3_code, ResidualModel, Stage3Event};

/// Margins below this are treated as ties.
const STRICT_EPS: f64 = 1e-12;

/// Per-event comparison of a reduced cost against the unreduced one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionAudit {
    pub events: u64,
    /// Events where the reduced cost was strictly lower.
    pub strict: u64,
    /// Sum of `unreduced - reduced` in bits.
    pub margin_bits: f64,
    /// Smallest single-event margin seen.
    pub worst_margin: Option<f64>,
}

impl ReductionAudit {
    fn record(&mut self, reduced: f64, unreduced: f64) {
        let margin = unreduced - reduced;
        self.events += 1;
        if margin > STRICT_EPS {
            self.strict += 1;
        }
        self.margin_bits += margin;
        self.worst_margin = Some(self.worst_margin.map_or(margin, |w| w.min(margin)));
    }
}

/// Counters and ideal bit costs gathered while coding one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodingStats {
    pub pixels: u64,
    /// Pixels resolved by Stage 1, 2 and 3.
    pub stage_pixels: [u64; 3],
    /// Ideal bits spent in each stage (Stage 1 includes escapes).
    pub stage_bits: [f64; 3],
    pub stage1_escapes: u64,
    pub in_palette_flags_coded: u64,
    pub in_palette_flag_bits: f64,
    pub in_palette_elided_by_f: u64,
    pub in_palette_elided_by_p: u64,
    /// In-palette flag implied because the palette was still empty.
    pub in_palette_implied_empty: u64,
    pub sub_palette_flags_coded: u64,
    pub sub_palette_flag_bits: f64,
    pub sub_palette_elided_by_f: u64,
    pub palette_index_bits: f64,
    /// Bits the elided flags would have cost under their models.
    pub flag_bits_saved_by_f: f64,
    pub residual_bits: f64,
    pub palette_audit: ReductionAudit,
    pub residual_audit: ReductionAudit,
    /// Raster index of the pixel that completed the palette.
    pub palette_completed_at: Option<u64>,
    pub palette_size: u32,
    /// Payload bytes, header excluded.
    pub payload_bytes: u64,
}

impl CodingStats {
    pub fn total_bits(&self) -> f64 {
        self.stage_bits.iter().sum()
    }

    pub fn stage_percentages(&self) -> [f64; 3] {
        let n = self.pixels.max(1) as f64;
        self.stage_pixels.map(|k| 100.0 * k as f64 / n)
    }

    fn record_stage2(&mut self, ev: &Stage2Event) {
        if ev.in_palette_flag_coded {
            self.in_palette_flags_coded += 1;
            self.in_palette_flag_bits += ev.bits_flag;
        } else if ev.in_palette_elided_by_f {
            self.in_palette_elided_by_f += 1;
        } else if ev.in_palette_elided_by_p {
            self.in_palette_elided_by_p += 1;
        } else {
            self.in_palette_implied_empty += 1;
        }
        if ev.sub_flag_coded {
            self.sub_palette_flags_coded += 1;
            self.sub_palette_flag_bits += ev.bits_subflag;
        }
        if ev.sub_flag_elided_by_f {
            self.sub_palette_elided_by_f += 1;
        }
        self.palette_index_bits += ev.bits_index;
        self.flag_bits_saved_by_f += ev.bits_saved_by_f;
        self.stage_bits[1] += ev.bits_flag + ev.bits_subflag + ev.bits_index;
        if let Some(unreduced) = ev.bits_index_unreduced {
            self.palette_audit.record(ev.bits_index, unreduced);
        }
    }

    fn record_stage3(&mut self, ev: &Stage3Event) {
        let bits = ev.total_bits();
        self.residual_bits += bits;
        self.stage_bits[2] += bits;
        if let Some(unreduced) = ev.final_bits_unreduced {
            self.residual_audit.record(ev.bits[2], unreduced);
        }
    }
}

/// What happened at one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRecord {
    /// Stage that produced the color: 1, 2 or 3.
    pub stage: u8,
    pub in_palette_flag_coded: bool,
    pub palette_complete_before: bool,
    /// State checksum after the pixel, when requested.
    pub checksum: Option<u64>,
}

/// Optional per-pixel instrumentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Instrument {
    pub trace: bool,
    pub checksums: bool,
}

impl Instrument {
    pub const NONE: Self = Self {
        trace: false,
        checksums: false,
    };
    pub const FULL: Self = Self {
        trace: true,
        checksums: true,
    };
}

/// Raster filled in coding order.
#[derive(Debug, Clone)]
struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<Color>,
}

impl PixelSource for Canvas {
    fn width(&self) -> u32 {
        self.width
    }

    fn height(&self) -> u32 {
        self.height
    }

    fn pixel(&self, x: u32, y: u32) -> Color {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// Adaptive state shared, step for step, by encoder and decoder.
#[derive(Debug, Clone)]
pub struct Session {
    header: Header,
    canvas: Canvas,
    patterns: PatternStore,
    palette: Palette,
    residuals: ResidualModel,
    flags: Stage2Models,
    error_map: Vec<u8>,
    stats: CodingStats,
}

fn flag_hash(which: u64, model: &BitModel) -> u64 {
    let [a, b] = model.counts();
    entry_hash(TAG_FLAGS, which, u64::from(a) << 32 | u64::from(b))
}

impl Session {
    pub fn new(header: Header) -> Self {
        // Capacity is bounded so a hostile header cannot force a huge
        // allocation before any payload is read.
        let cap = header.pixel_count().min(1 << 22) as usize;
        Self {
            header,
            canvas: Canvas {
                width: header.width,
                height: header.height,
                pixels: Vec::with_capacity(cap),
            },
            patterns: PatternStore::new(),
            palette: Palette::new(),
            residuals: ResidualModel::new(),
            flags: Stage2Models::default(),
            error_map: Vec::with_capacity(cap),
            stats: CodingStats::default(),
        }
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn options(&self) -> CodecOptions {
        self.header.options
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn patterns(&self) -> &PatternStore {
        &self.patterns
    }

    pub fn residuals(&self) -> &ResidualModel {
        &self.residuals
    }

    pub fn stats(&self) -> &CodingStats {
        &self.stats
    }

    pub fn pixels_coded(&self) -> u64 {
        self.canvas.pixels.len() as u64
    }

    pub fn palette_complete(&self) -> bool {
        self.palette.len() as u64 == u64::from(self.header.unique_colors)
    }

    fn combine(&self, palette: u64, patterns: u64, residuals: u64) -> u64 {
        let flags = flag_hash(0, &self.flags.in_palette)
            .wrapping_add(flag_hash(1, &self.flags.sub_palette));
        let position = entry_hash(
            TAG_SESSION,
            self.pixels_coded(),
            self.palette_complete() as u64,
        );
        [palette, patterns, residuals, flags, position]
            .iter()
            .fold(0u64, |acc, &d| mix64(acc ^ d))
    }

    /// Digest of the full adaptive state, maintained incrementally.
    pub fn checksum(&self) -> u64 {
        self.combine(
            self.palette.digest(),
            self.patterns.digest(),
            self.residuals.digest(),
        )
    }

    /// Same digest as [`Session::checksum`], recomputed from scratch.
    pub fn recompute_checksum(&self) -> u64 {
        self.combine(
            self.palette.recompute_digest(),
            self.patterns.recompute_digest(),
            self.residuals.recompute_digest(),
        )
    }

    /// Codes the next pixel in raster order. `target` is the true color when
    /// encoding and `None` when decoding.
    pub fn code_pixel<C: SymbolCoder>(
        &mut self,
        coder: &mut C,
        target: Option<Color>,
    ) -> Result<(Color, PixelRecord)> {
        let idx = self.canvas.pixels.len() as u64;
        if idx >= self.header.pixel_count() {
            return Err(Error::Invariant("all pixels already coded".into()));
        }
        let w = u64::from(self.header.width);
        let (x, y) = ((idx % w) as u32, (idx / w) as u32);
        let decoding = target.is_none();
        let fail = |msg: &str| {
            if decoding {
                Error::Corrupt(format!("{msg} at pixel ({x}, {y})"))
            } else {
                Error::Invariant(format!("{msg} at pixel ({x}, {y})"))
            }
        };

        let key = extract_pattern(&self.canvas, x, y);
        let predicted = predict(&self.canvas, x, y);
        let complete = self.palette_complete();
        let merged = self.patterns.merge(&key);
        let (outcome, bits1) = stage1_code(coder, &merged, target)?;
        self.stats.stage_bits[0] += bits1;

        let mut record = PixelRecord {
            stage: 1,
            in_palette_flag_coded: false,
            palette_complete_before: complete,
            checksum: None,
        };
        let color = match outcome {
            Stage1Outcome::Coded(c) => c,
            Stage1Outcome::Escape => {
                self.stats.stage1_escapes += 1;
                let stage1_colors: Vec<Color> = merged.colors().collect();
                let input = Stage2Input {
                    palette: &self.palette,
                    stage1_colors: &stage1_colors,
                    options: self.header.options,
                    palette_complete: complete,
                    predicted,
                    radius: compute_radius(&self.error_map, self.header.width, x, y),
                };
                let (found, ev) = stage2_code(coder, &input, &mut self.flags, target)?;
                self.stats.record_stage2(&ev);
                record.in_palette_flag_coded = ev.in_palette_flag_coded;
                match found {
                    Some(c) => {
                        record.stage = 2;
                        c
                    }
                    None => {
                        if complete {
                            return Err(fail("new color after palette completion"));
                        }
                        let (c, ev) = stage3_code(
                            coder,
                            &mut self.residuals,
                            &self.palette,
                            self.header.options.residual_reduction,
                            predicted,
                            target,
                        )?;
                        self.stats.record_stage3(&ev);
                        if self.palette.contains(c) {
                            return Err(fail("residual decoded to a palette color"));
                        }
                        record.stage = 3;
                        c
                    }
                }
            }
        };
        if let Some(t) = target {
            if t != color {
                return Err(Error::Invariant(format!(
                    "coded {color:?} instead of {t:?} at ({x}, {y})"
                )));
            }
        }

        self.patterns.update(&key, color);
        self.palette.insert_or_bump(color);
        if self.palette.len() as u64 > u64::from(self.header.unique_colors) {
            return Err(fail("more colors than the header declares"));
        }
        self.canvas.pixels.push(color);
        self.error_map.push(predicted.linf(color));
        self.stats.pixels += 1;
        self.stats.stage_pixels[usize::from(record.stage - 1)] += 1;
        self.stats.palette_size = self.palette.len() as u32;
        if !complete && self.palette_complete() {
            self.stats.palette_completed_at = Some(idx);
        }
        Ok((color, record))
    }

    fn into_image(self) -> Result<RgbImage> {
        RgbImage::new(self.canvas.width, self.canvas.height, self.canvas.pixels)
    }
}

/// Compressed bytes plus what the encoder observed.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub stats: CodingStats,
    /// One record per pixel when tracing was requested.
    pub trace: Vec<PixelRecord>,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub image: RgbImage,
    pub options: CodecOptions,
    pub stats: CodingStats,
    pub trace: Vec<PixelRecord>,
}

fn step<C: SymbolCoder>(
    session: &mut Session,
    coder: &mut C,
    target: Option<Color>,
    instrument: Instrument,
    trace: &mut Vec<PixelRecord>,
) -> Result<()> {
    let (_, mut record) = session.code_pixel(coder, target)?;
    if instrument.trace || instrument.checksums {
        if instrument.checksums {
            record.checksum = Some(session.checksum());
        }
        trace.push(record);
    }
    Ok(())
}

pub fn encode_image(img: &RgbImage, options: CodecOptions) -> Result<Vec<u8>> {
    encode_image_with(img, options, Instrument::NONE).map(|e| e.bytes)
}

pub fn encode_image_with(
    img: &RgbImage,
    options: CodecOptions,
    instrument: Instrument,
) -> Result<Encoded> {
    let header = Header {
        options,
        width: img.width(),
        height: img.height(),
        unique_colors: count_unique_colors(img),
    };
    let mut session = Session::new(header);
    let mut enc = RangeEncoder::new();
    let mut trace = Vec::new();
    for &c in img.pixels() {
        step(&mut session, &mut enc, Some(c), instrument, &mut trace)?;
    }
    if !session.palette_complete() {
        return Err(Error::Invariant(
            "palette incomplete after the last pixel".into(),
        ));
    }
    let payload = enc.finish();
    let mut stats = session.stats;
    stats.payload_bytes = payload.len() as u64;
    let mut bytes = header.to_bytes().to_vec();
    bytes.extend_from_slice(&payload);
    Ok(Encoded {
        bytes,
        stats,
        trace,
    })
}

pub fn decode_image(data: &[u8]) -> Result<RgbImage> {
    decode_image_with(data, Instrument::NONE).map(|d| d.image)
}

pub fn decode_image_with(data: &[u8], instrument: Instrument) -> Result<Decoded> {
    let (header, payload) = Header::parse(data)?;
    let mut session = Session::new(header);
    let mut dec = RangeDecoder::new(payload)?;
    let mut trace = Vec::new();
    for _ in 0..header.pixel_count() {
        step(&mut session, &mut dec, None, instrument, &mut trace)?;
    }
    if !session.palette_complete() {
        return Err(Error::Corrupt(format!(
            "decoded {} distinct colors, header declares {}",
            session.palette.len(),
            header.unique_colors
        )));
    }
    if !dec.is_exhausted() {
        return Err(Error::Corrupt(format!(
            "payload length mismatch: decoder stopped at byte {} of {}",
            dec.position(),
            payload.len()
        )));
    }
    let mut stats = session.stats.clone();
    stats.payload_bytes = payload.len() as u64;
    Ok(Decoded {
        image: session.into_image()?,
        options: header.options,
        stats,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker() -> RgbImage {
        let a = Color::new(255, 0, 0);
        let b = Color::new(0, 0, 255);
        let px = (0..64)
            .map(|i| if (i % 8 + i / 8) % 2 == 0 { a } else { b })
            .collect();
        RgbImage::new(8, 8, px).unwrap()
    }

    #[test]
    fn round_trip_small() {
        let img = checker();
        for o in CodecOptions::all_combinations() {
            let bytes = encode_image(&img, o).unwrap();
            assert_eq!(decode_image(&bytes).unwrap(), img, "{}", o.label());
        }
    }

    #[test]
    fn checksum_routes_agree() {
        let img = checker();
        let mut s = Session::new(Header {
            options: CodecOptions::all(),
            width: 8,
            height: 8,
            unique_colors: 2,
        });
        let mut enc = RangeEncoder::new();
        for &c in img.pixels() {
            s.code_pixel(&mut enc, Some(c)).unwrap();
            assert_eq!(s.checksum(), s.recompute_checksum());
        }
    }

    #[test]
    fn audit_tracks_worst_margin() {
        let mut a = ReductionAudit::default();
        a.record(1.0, 2.0);
        a.record(1.0, 1.0);
        assert_eq!(a.events, 2);
        assert_eq!(a.strict, 1);
        assert_eq!(a.worst_margin, Some(0.0));
        assert_eq!(a.margin_bits, 1.0);
    }
}
