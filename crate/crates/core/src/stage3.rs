//! Residual coding of colors that have not been seen before.

use crate::digest::{entry_hash, TAG_RESIDUAL};
use crate::entropy::{cost_bits, FrequencyTable, SymbolCoder};
use crate::error::{Error, Result};
use crate::image::PixelSource;
use crate::model::{Color, CountTable, ExclusionView, Palette};

/// Residual histograms are halved once a channel total passes this bound.
pub const RESIDUAL_LIMIT: u32 = 1 << 16;

/// Prediction used for the very first pixel.
pub const FIRST_PIXEL_PREDICTION: u8 = 128;

/// Median edge detector on one channel.
pub fn med(left: u8, above: u8, above_left: u8) -> u8 {
    let (lo, hi) = (left.min(above), left.max(above));
    if above_left <= lo {
        hi
    } else if above_left >= hi {
        lo
    } else {
        (i16::from(left) + i16::from(above) - i16::from(above_left)).clamp(0, 255) as u8
    }
}

/// Per-channel prediction from already coded neighbors.
pub fn predict<S: PixelSource + ?Sized>(img: &S, x: u32, y: u32) -> Color {
    match (x, y) {
        (0, 0) => Color::new(
            FIRST_PIXEL_PREDICTION,
            FIRST_PIXEL_PREDICTION,
            FIRST_PIXEL_PREDICTION,
        ),
        (_, 0) => img.pixel(x - 1, 0),
        (0, _) => img.pixel(0, y - 1),
        _ => {
            let a = img.pixel(x - 1, y).channels();
            let b = img.pixel(x, y - 1).channels();
            let c = img.pixel(x - 1, y - 1).channels();
            Color::from_channels(std::array::from_fn(|k| med(a[k], b[k], c[k])))
        }
    }
}

/// Residual symbol `(predicted - value) mod 256`.
pub fn error_symbol(predicted: u8, value: u8) -> u8 {
    predicted.wrapping_sub(value)
}

/// Inverse of [`error_symbol`] for a fixed prediction.
pub fn reconstruct(predicted: u8, symbol: u8) -> u8 {
    predicted.wrapping_sub(symbol)
}

/// Final-channel residual symbols that would reproduce a palette color,
/// given the two channels already coded for this pixel.
pub fn build_exclusion_for_final_channel(
    palette: &Palette,
    prefix: [u8; 2],
    predicted: u8,
) -> Vec<u8> {
    palette
        .blues_with_prefix(prefix[0], prefix[1])
        .iter()
        .map(|&b| error_symbol(predicted, b))
        .collect()
}

/// One channel's residual counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualChannel {
    counts: [u32; 256],
    total: u32,
}

impl Default for ResidualChannel {
    fn default() -> Self {
        Self {
            counts: [1; 256],
            total: 256,
        }
    }
}

impl ResidualChannel {
    pub fn counts(&self) -> &[u32; 256] {
        &self.counts
    }

    pub fn table(&self) -> FrequencyTable {
        FrequencyTable::new(self.counts)
    }
}

impl CountTable for ResidualChannel {
    type Symbol = u8;

    fn count(&self, symbol: u8) -> u32 {
        self.counts[symbol as usize]
    }

    fn total(&self) -> u32 {
        self.total
    }
}

fn masked_table(view: &ExclusionView<'_, ResidualChannel>) -> FrequencyTable {
    FrequencyTable::new((0..=255u8).map(|s| view.freq(s)))
}

/// Residual histograms for the three channels.
#[derive(Debug, Clone, Default)]
pub struct ResidualModel {
    channels: [ResidualChannel; 3],
    digest: u64,
}

impl ResidualModel {
    pub fn new() -> Self {
        let mut m = Self::default();
        m.digest = m.recompute_digest();
        m
    }

    pub fn channel(&self, k: usize) -> &ResidualChannel {
        &self.channels[k]
    }

    fn entry_hash(k: usize, symbol: usize, count: u32) -> u64 {
        entry_hash(TAG_RESIDUAL, (k << 8 | symbol) as u64, u64::from(count))
    }

    pub fn update(&mut self, symbols: [u8; 3]) {
        for (k, &s) in symbols.iter().enumerate() {
            let ch = &mut self.channels[k];
            let s = s as usize;
            self.digest = self
                .digest
                .wrapping_sub(Self::entry_hash(k, s, ch.counts[s]))
                .wrapping_add(Self::entry_hash(k, s, ch.counts[s] + 1));
            ch.counts[s] += 1;
            ch.total += 1;
            if ch.total > RESIDUAL_LIMIT {
                for n in &mut ch.counts {
                    *n = n.div_ceil(2);
                }
                ch.total = ch.counts.iter().sum();
                self.digest = self.recompute_digest();
            }
        }
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn recompute_digest(&self) -> u64 {
        let mut d = 0u64;
        for (k, ch) in self.channels.iter().enumerate() {
            for (s, &n) in ch.counts.iter().enumerate() {
                d = d.wrapping_add(Self::entry_hash(k, s, n));
            }
        }
        d
    }
}

/// Costs of one Stage 3 event.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stage3Event {
    pub bits: [f64; 3],
    /// Final-channel cost without exclusion, when exclusion was applied.
    pub final_bits_unreduced: Option<f64>,
    pub excluded_symbols: u32,
}

impl Stage3Event {
    pub fn total_bits(&self) -> f64 {
        self.bits.iter().sum()
    }
}

/// Codes a new color channel by channel. With `exclude_final` the final
/// channel is coded against its histogram minus the residuals of palette
/// colors sharing the already coded red and green values.
pub fn stage3_code<C: SymbolCoder>(
    coder: &mut C,
    model: &mut ResidualModel,
    palette: &Palette,
    exclude_final: bool,
    predicted: Color,
    target: Option<Color>,
) -> Result<(Color, Stage3Event)> {
    let pred = predicted.channels();
    let known = target.map(|c| c.channels());
    let mut value = [0u8; 3];
    let mut symbols = [0u8; 3];
    let mut ev = Stage3Event::default();

    for k in 0..2 {
        let table = model.channels[k].table();
        let known_sym = known.map(|v| error_symbol(pred[k], v[k]) as usize);
        let (s, cost) = coder.code_symbol(&table, known_sym)?;
        symbols[k] = s as u8;
        value[k] = reconstruct(pred[k], s as u8);
        ev.bits[k] = cost;
    }

    let known_sym = known.map(|v| error_symbol(pred[2], v[2]));
    let last = &model.channels[2];
    if exclude_final {
        let excluded = build_exclusion_for_final_channel(palette, [value[0], value[1]], pred[2]);
        let view = ExclusionView::new(last, excluded);
        if let Some(s) = known_sym {
            if view.is_excluded(s) {
                return Err(Error::Invariant(
                    "true residual is in the exclusion set".into(),
                ));
            }
        }
        let table = masked_table(&view);
        let (s, cost) = coder.code_symbol(&table, known_sym.map(usize::from))?;
        symbols[2] = s as u8;
        ev.bits[2] = cost;
        ev.final_bits_unreduced = Some(cost_bits(last.count(s as u8), last.total()));
        ev.excluded_symbols = view.excluded().len() as u32;
    } else {
        let (s, cost) = coder.code_symbol(&last.table(), known_sym.map(usize::from))?;
        symbols[2] = s as u8;
        ev.bits[2] = cost;
    }
    value[2] = reconstruct(pred[2], symbols[2]);
    model.update(symbols);
    Ok((Color::from_channels(value), ev))
}
