//! Context formation: six-pixel causal template, hierarchical pattern store,
//! merged context distribution with an escape symbol.

use rustc_hash::FxHashMap;
use std::hash::Hash;

use crate::digest::{entry_hash, fnv1a, TAG_PATTERN};
use crate::entropy::{FrequencyTable, SymbolCoder};
use crate::error::Result;
use crate::image::PixelSource;
use crate::model::{Color, ColorHistogram};

/// Template offsets `(dx, dy)` for positions A..F relative to the current pixel:
/// left, above, above-left, above-right, left-left, above-above.
pub const TEMPLATE: [(i32, i32); 6] = [(-1, 0), (0, -1), (-1, -1), (1, -1), (-2, 0), (0, -2)];

/// Neighbors outside the raster read as this color.
pub const BORDER_COLOR: Color = Color::BLACK;

/// Per-histogram rescaling bound in the pattern store.
pub const PATTERN_LIMIT: u32 = 1 << 12;

/// Merge weights for the full, four- and two-neighbor contexts.
pub const MERGE_WEIGHTS: [u32; 3] = [4, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatternKey(pub [Color; 6]);

impl PatternKey {
    fn prefix<const N: usize>(&self) -> [Color; N] {
        std::array::from_fn(|i| self.0[i])
    }
}

pub fn extract_pattern<S: PixelSource + ?Sized>(img: &S, x: u32, y: u32) -> PatternKey {
    PatternKey(TEMPLATE.map(|(dx, dy)| img.neighbor(x, y, dx, dy).unwrap_or(BORDER_COLOR)))
}

fn key_bytes(colors: &[Color]) -> Vec<u8> {
    colors.iter().flat_map(|c| c.channels()).collect()
}

#[derive(Debug, Clone)]
struct Level<K> {
    tag: u64,
    map: FxHashMap<K, ColorHistogram>,
}

impl<K: Copy + Hash + Eq + AsRef<[Color]>> Level<K> {
    fn new(tag: u64) -> Self {
        Self {
            tag,
            map: FxHashMap::default(),
        }
    }

    fn entry_hash(&self, key: &K, total: u32) -> u64 {
        let k = fnv1a(&key_bytes(key.as_ref())) ^ self.tag << 56;
        entry_hash(TAG_PATTERN, k, u64::from(total))
    }

    /// Adds `color` under `key`; returns the digest delta.
    fn update(&mut self, key: K, color: Color) -> u64 {
        let old_total = self.map.get(&key).map(ColorHistogram::total);
        let before = old_total.map_or(0, |t| self.entry_hash(&key, t));
        let hist = self.map.entry(key).or_default();
        hist.add(color, 1);
        hist.rescale_if_above(PATTERN_LIMIT);
        let after_total = hist.total();
        self.entry_hash(&key, after_total).wrapping_sub(before)
    }

    fn digest(&self) -> u64 {
        self.map.iter().fold(0u64, |acc, (k, h)| {
            acc.wrapping_add(self.entry_hash(k, h.total()))
        })
    }
}

/// Color histograms keyed by the full template and by its 4- and 2-neighbor
/// prefixes.
#[derive(Debug, Clone)]
pub struct PatternStore {
    full: Level<[Color; 6]>,
    mid: Level<[Color; 4]>,
    short: Level<[Color; 2]>,
    digest: u64,
}

impl Default for PatternStore {
    fn default() -> Self {
        Self::new()
    }
}

impl PatternStore {
    pub fn new() -> Self {
        Self {
            full: Level::new(6),
            mid: Level::new(4),
            short: Level::new(2),
            digest: 0,
        }
    }

    pub fn histograms(&self, key: &PatternKey) -> [Option<&ColorHistogram>; 3] {
        [
            self.full.map.get(&key.0),
            self.mid.map.get(&key.prefix::<4>()),
            self.short.map.get(&key.prefix::<2>()),
        ]
    }

    /// Weighted merge of the histograms found for `key` at each level.
    pub fn merge(&self, key: &PatternKey) -> ColorHistogram {
        let empty = ColorHistogram::new();
        let hists = self.histograms(key);
        let parts: Vec<(&ColorHistogram, u32)> = hists
            .iter()
            .zip(MERGE_WEIGHTS)
            .map(|(h, w)| (h.unwrap_or(&empty), w))
            .collect();
        ColorHistogram::merge_weighted(&parts)
    }

    pub fn update(&mut self, key: &PatternKey, color: Color) {
        let d = self
            .full
            .update(key.0, color)
            .wrapping_add(self.mid.update(key.prefix::<4>(), color))
            .wrapping_add(self.short.update(key.prefix::<2>(), color));
        self.digest = self.digest.wrapping_add(d);
    }

    /// Digest over `(level, key, total)` of every stored histogram.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn recompute_digest(&self) -> u64 {
        self.full
            .digest()
            .wrapping_add(self.mid.digest())
            .wrapping_add(self.short.digest())
    }

    /// Number of stored contexts per level.
    pub fn context_counts(&self) -> [usize; 3] {
        [
            self.full.map.len(),
            self.mid.map.len(),
            self.short.map.len(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Outcome {
    Coded(Color),
    Escape,
}

/// Frequencies for the merged distribution followed by an escape symbol
/// whose count is the number of distinct colors (PPM method C).
pub fn stage1_table(merged: &ColorHistogram) -> FrequencyTable {
    let escape = merged.len() as u32;
    FrequencyTable::new(merged.entries().iter().map(|e| e.1).chain([escape]))
}

/// Codes the current color against the merged context distribution.
///
/// An empty distribution escapes without coding anything. The returned
/// cost is the ideal bit cost of whatever was coded.
pub fn stage1_code<C: SymbolCoder>(
    coder: &mut C,
    merged: &ColorHistogram,
    target: Option<Color>,
) -> Result<(Stage1Outcome, f64)> {
    if merged.is_empty() {
        return Ok((Stage1Outcome::Escape, 0.0));
    }
    let escape = merged.len();
    let known = target.map(|c| merged.position(c).unwrap_or(escape));
    let (symbol, cost) = coder.code_symbol(&stage1_table(merged), known)?;
    let outcome = if symbol == escape {
        Stage1Outcome::Escape
    } else {
        Stage1Outcome::Coded(merged.entries()[symbol].0)
    };
    Ok((outcome, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{RangeDecoder, RangeEncoder};
    use crate::image::RgbImage;

    fn c(v: u8) -> Color {
        Color::new(v, v, v)
    }

    #[test]
    fn first_pixel_is_all_border() {
        let img = RgbImage::filled(3, 3, c(200)).unwrap();
        assert_eq!(extract_pattern(&img, 0, 0), PatternKey([BORDER_COLOR; 6]));
    }

    #[test]
    fn template_geometry_on_2x2() {
        let img = RgbImage::new(2, 2, vec![c(1), c(2), c(3), c(4)]).unwrap();
        let key = extract_pattern(&img, 1, 1);
        // Independent enumeration of the template offsets.
        let expect = |dx: i32, dy: i32| {
            let (x, y) = (1 + dx, 1 + dy);
            if (0..2).contains(&x) && (0..2).contains(&y) {
                img.get(x as u32, y as u32)
            } else {
                BORDER_COLOR
            }
        };
        assert_eq!(key.0[0], img.get(0, 1));
        assert_eq!(key.0[1], img.get(1, 0));
        assert_eq!(key.0[2], img.get(0, 0));
        assert_eq!(
            key.0,
            [
                expect(-1, 0),
                expect(0, -1),
                expect(-1, -1),
                expect(1, -1),
                expect(-2, 0),
                expect(0, -2)
            ]
        );
        assert_eq!(&key.0[3..], &[BORDER_COLOR; 3]);
    }

    #[test]
    fn uniform_interior() {
        let img = RgbImage::filled(5, 5, c(128)).unwrap();
        assert_eq!(extract_pattern(&img, 2, 2), PatternKey([c(128); 6]));
    }

    #[test]
    fn empty_store_merges_to_empty() {
        let store = PatternStore::new();
        assert!(store.merge(&PatternKey([c(1); 6])).is_empty());
    }

    #[test]
    fn updates_reach_all_levels() {
        let mut store = PatternStore::new();
        let key = PatternKey([c(1), c(2), c(3), c(4), c(5), c(6)]);
        store.update(&key, c(9));
        for h in store.histograms(&key) {
            assert_eq!(h.unwrap().entries(), &[(c(9), 1)]);
        }
        store.update(&key, c(9));
        for h in store.histograms(&key) {
            assert_eq!(h.unwrap().get(c(9)), 2);
        }
        assert_eq!(store.merge(&key).get(c(9)), 2 * 4 + 2 * 2 + 2);
        assert_eq!(store.digest(), store.recompute_digest());
    }

    #[test]
    fn shared_short_prefix() {
        let mut store = PatternStore::new();
        let a = PatternKey([c(1), c(2), c(3), c(4), c(5), c(6)]);
        let b = PatternKey([c(1), c(2), c(7), c(7), c(7), c(7)]);
        store.update(&a, c(10));
        store.update(&b, c(20));
        let short = store.histograms(&a)[2].unwrap();
        assert_eq!(short.entries(), &[(c(10), 1), (c(20), 1)]);
        assert_eq!(store.histograms(&a)[1].unwrap().len(), 1);
        assert_eq!(store.context_counts(), [2, 2, 1]);
    }

    #[test]
    fn empty_merge_escapes_for_free() {
        let mut enc = RangeEncoder::new();
        let (outcome, cost) = stage1_code(&mut enc, &ColorHistogram::new(), Some(c(3))).unwrap();
        assert_eq!(outcome, Stage1Outcome::Escape);
        assert_eq!(cost, 0.0);
        assert_eq!(enc.bytes_written(), 0);
    }

    #[test]
    fn coded_and_escape_costs() {
        let mut merged = ColorHistogram::new();
        merged.add(c(1), 8);
        merged.add(c(2), 4);
        let mut enc = RangeEncoder::new();
        let (outcome, cost) = stage1_code(&mut enc, &merged, Some(c(1))).unwrap();
        assert_eq!(outcome, Stage1Outcome::Coded(c(1)));
        // 8 of 8 + 4 + 2
        assert!((cost - 0.807).abs() < 5e-4, "{cost}");

        // Stage 1 distribution of the worked example: counts 2, 8, 4.
        let mut example = ColorHistogram::new();
        example.add(c(3), 2);
        example.add(c(6), 8);
        example.add(c(7), 4);
        let (outcome, cost) = stage1_code(&mut enc, &example, Some(c(2))).unwrap();
        assert_eq!(outcome, Stage1Outcome::Escape);
        assert!((cost - -(3.0f64 / 17.0).log2()).abs() < 1e-12);
        assert_eq!(example.colors().collect::<Vec<_>>(), vec![c(3), c(6), c(7)]);

        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        assert_eq!(
            stage1_code(&mut dec, &merged, None).unwrap().0,
            Stage1Outcome::Coded(c(1))
        );
        assert_eq!(
            stage1_code(&mut dec, &example, None).unwrap().0,
            Stage1Outcome::Escape
        );
    }
}
