//! Adaptive statistics shared by the coding stages.
//!
//! Exclusion is always expressed as an [`ExclusionView`] over an unchanged
//! base table: a symbol ruled out for the current event stays a valid
//! member of the model for later pixels.

use std::collections::BTreeSet;
use std::ops::Range;

use rustc_hash::FxHashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::digest::{entry_hash, TAG_PALETTE};
use crate::entropy::cost_bits;
use crate::error::{Error, Result};

/// Palette counts are halved once their total passes this bound.
pub const PALETTE_LIMIT: u32 = 1 << 16;

/// 8-bit RGB color. Ordering is lexicographic over `(r, g, b)`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const BLACK: Color = Color::new(0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }

    pub const fn from_channels(c: [u8; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    /// Packs the color into the low 24 bits of a word.
    pub const fn packed(self) -> u32 {
        (self.r as u32) << 16 | (self.g as u32) << 8 | self.b as u32
    }

    /// Chebyshev (L-infinity) distance between two colors.
    pub fn linf(self, other: Color) -> u8 {
        self.r
            .abs_diff(other.r)
            .max(self.g.abs_diff(other.g))
            .max(self.b.abs_diff(other.b))
    }
}

impl fmt::Debug for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.r, self.g, self.b)
    }
}

/// A table of nonnegative counts over some symbol alphabet.
pub trait CountTable {
    type Symbol: Copy + Ord + Hash;

    fn count(&self, symbol: Self::Symbol) -> u32;
    fn total(&self) -> u32;
}

/// Halves counts (rounding up) when the total exceeds `limit`.
///
/// Once every count is one, halving cannot shrink the table any further, so
/// rescaling additionally requires the total to exceed twice the number of
/// entries. That keeps the amortized update cost constant for tables with
/// more distinct symbols than `limit`.
fn needs_rescale(total: u32, entries: usize, limit: u32) -> bool {
    total > limit && u64::from(total) > 2 * entries as u64
}

fn halve(count: u32) -> u32 {
    count.div_ceil(2)
}

/// Sparse color histogram, kept sorted by color.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColorHistogram {
    entries: Vec<(Color, u32)>,
    total: u32,
}

impl ColorHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn entries(&self) -> &[(Color, u32)] {
        &self.entries
    }

    pub fn colors(&self) -> impl Iterator<Item = Color> + '_ {
        self.entries.iter().map(|&(c, _)| c)
    }

    pub fn get(&self, color: Color) -> u32 {
        self.position(color).map_or(0, |i| self.entries[i].1)
    }

    pub fn position(&self, color: Color) -> Option<usize> {
        self.entries.binary_search_by(|(c, _)| c.cmp(&color)).ok()
    }

    pub fn add(&mut self, color: Color, amount: u32) {
        if amount == 0 {
            return;
        }
        match self.entries.binary_search_by(|(c, _)| c.cmp(&color)) {
            Ok(i) => self.entries[i].1 += amount,
            Err(i) => self.entries.insert(i, (color, amount)),
        }
        self.total += amount;
    }

    /// Halves all counts if the total exceeds `limit`; returns whether it did.
    pub fn rescale_if_above(&mut self, limit: u32) -> bool {
        if !needs_rescale(self.total, self.entries.len(), limit) {
            return false;
        }
        self.total = 0;
        for (_, n) in &mut self.entries {
            *n = halve(*n);
            self.total += *n;
        }
        true
    }

    /// Weighted sum of several histograms. Inputs are sorted, so this is a
    /// k-way merge rather than a sequence of inserts.
    pub fn merge_weighted(parts: &[(&ColorHistogram, u32)]) -> ColorHistogram {
        let mut out: Vec<(Color, u32)> = Vec::new();
        let mut cursors = vec![0usize; parts.len()];
        loop {
            let next = parts
                .iter()
                .zip(&cursors)
                .filter_map(|((h, _), &i)| h.entries.get(i).map(|e| e.0))
                .min();
            let Some(color) = next else { break };
            let mut sum = 0;
            for ((h, w), i) in parts.iter().zip(cursors.iter_mut()) {
                if let Some(&(c, n)) = h.entries.get(*i) {
                    if c == color {
                        sum += n * w;
                        *i += 1;
                    }
                }
            }
            if sum > 0 {
                out.push((color, sum));
            }
        }
        let total = out.iter().map(|e| e.1).sum();
        ColorHistogram {
            entries: out,
            total,
        }
    }

    /// Canonical byte encoding: count of entries then `(r, g, b, count_le)`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.entries.len() * 7);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.total.to_le_bytes());
        for (c, n) in &self.entries {
            out.extend_from_slice(&c.channels());
            out.extend_from_slice(&n.to_le_bytes());
        }
        out
    }
}

impl CountTable for ColorHistogram {
    type Symbol = Color;

    fn count(&self, symbol: Color) -> u32 {
        self.get(symbol)
    }

    fn total(&self) -> u32 {
        self.total
    }
}

/// Binary indexed tree over palette positions.
#[derive(Debug, Clone, Default)]
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn from_counts(counts: &[u32]) -> Self {
        let mut tree = counts.to_vec();
        for i in 0..tree.len() {
            let parent = i | (i + 1);
            if parent < tree.len() {
                tree[parent] += tree[i];
            }
        }
        Self { tree }
    }

    fn push(&mut self, value: u32) {
        // New node i covers (i & (i + 1))..=i.
        let i = self.tree.len();
        let lo = i & (i + 1);
        let sum = self.prefix(i) - self.prefix(lo);
        self.tree.push(sum + value);
    }

    fn add(&mut self, mut i: usize, value: u32) {
        while i < self.tree.len() {
            self.tree[i] += value;
            i |= i + 1;
        }
    }

    /// Sum of positions `0..end`.
    fn prefix(&self, end: usize) -> u32 {
        let mut sum = 0;
        let mut i = end;
        while i > 0 {
            sum += self.tree[i - 1];
            i &= i - 1;
        }
        sum
    }

    /// Smallest position `p` with `prefix(p + 1) > target`.
    fn search(&self, mut target: u32) -> usize {
        let mut pos = 0;
        let mut step = self.tree.len().next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.tree.len() && self.tree[next - 1] <= target {
                target -= self.tree[next - 1];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }
}

/// Global color palette in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct Palette {
    colors: Vec<Color>,
    // The same colors split by channel, for vectorized distance scans.
    planes: [Vec<u8>; 3],
    counts: Vec<u32>,
    index: FxHashMap<Color, usize>,
    // Blue values of palette colors keyed by their (red, green) prefix.
    by_prefix: FxHashMap<[u8; 2], Vec<u8>>,
    sums: Fenwick,
    total: u32,
    digest: u64,
}

impl Palette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Sum of all counts.
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn lookup(&self, color: Color) -> Option<usize> {
        self.index.get(&color).copied()
    }

    pub fn contains(&self, color: Color) -> bool {
        self.index.contains_key(&color)
    }

    pub fn color(&self, pos: usize) -> Color {
        self.colors[pos]
    }

    pub fn count_at(&self, pos: usize) -> u32 {
        self.counts[pos]
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Blue channels of all palette colors whose red and green equal `prefix`.
    pub fn blues_with_prefix(&self, r: u8, g: u8) -> &[u8] {
        self.by_prefix.get(&[r, g]).map_or(&[], Vec::as_slice)
    }

    /// Sum of counts at positions `0..pos`.
    pub fn prefix_sum(&self, pos: usize) -> u32 {
        self.sums.prefix(pos)
    }

    /// Total count of the positions in `range` whose L-infinity distance to
    /// `center` is at most `radius` (`inside`) or greater (`!inside`).
    pub fn mass_by_distance(
        &self,
        range: Range<usize>,
        center: Color,
        radius: u8,
        inside: bool,
    ) -> u32 {
        let [r, g, b] = &self.planes;
        let (r, g, b) = (&r[range.clone()], &g[range.clone()], &b[range.clone()]);
        r.iter()
            .zip(g)
            .zip(b)
            .zip(&self.counts[range])
            .map(|(((&r, &g), &b), &n)| {
                let d = r
                    .abs_diff(center.r)
                    .max(g.abs_diff(center.g))
                    .max(b.abs_diff(center.b));
                if (d <= radius) == inside {
                    n
                } else {
                    0
                }
            })
            .sum()
    }

    /// Smallest position whose cumulative interval contains `target`.
    pub fn search(&self, target: u32) -> usize {
        self.sums.search(target)
    }

    fn entry_hash(&self, pos: usize) -> u64 {
        let key = (pos as u64) << 24 | u64::from(self.colors[pos].packed());
        entry_hash(TAG_PALETTE, key, u64::from(self.counts[pos]))
    }

    /// Adds one occurrence of `color`; returns its position.
    pub fn insert_or_bump(&mut self, color: Color) -> usize {
        let pos = match self.index.get(&color) {
            Some(&pos) => {
                self.digest = self.digest.wrapping_sub(self.entry_hash(pos));
                self.counts[pos] += 1;
                self.sums.add(pos, 1);
                pos
            }
            None => {
                let pos = self.colors.len();
                self.colors.push(color);
                for (plane, v) in self.planes.iter_mut().zip(color.channels()) {
                    plane.push(v);
                }
                self.counts.push(1);
                self.index.insert(color, pos);
                self.by_prefix
                    .entry([color.r, color.g])
                    .or_default()
                    .push(color.b);
                self.sums.push(1);
                pos
            }
        };
        self.digest = self.digest.wrapping_add(self.entry_hash(pos));
        self.total += 1;
        if needs_rescale(self.total, self.colors.len(), PALETTE_LIMIT) {
            self.rescale();
        }
        pos
    }

    fn rescale(&mut self) {
        for n in &mut self.counts {
            *n = halve(*n);
        }
        self.total = self.counts.iter().sum();
        self.sums = Fenwick::from_counts(&self.counts);
        self.digest = self.recompute_digest();
    }

    /// Incrementally maintained digest of `(position, color, count)` entries.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn recompute_digest(&self) -> u64 {
        (0..self.len()).fold(0u64, |acc, pos| acc.wrapping_add(self.entry_hash(pos)))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len() * 7);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.total.to_le_bytes());
        for (c, n) in self.colors.iter().zip(&self.counts) {
            out.extend_from_slice(&c.channels());
            out.extend_from_slice(&n.to_le_bytes());
        }
        out
    }
}

impl CountTable for Palette {
    type Symbol = Color;

    fn count(&self, symbol: Color) -> u32 {
        self.lookup(symbol).map_or(0, |pos| self.counts[pos])
    }

    fn total(&self) -> u32 {
        self.total
    }
}

/// A base table with a set of symbols masked out for one coding event.
#[derive(Debug, Clone)]
pub struct ExclusionView<'a, T: CountTable> {
    base: &'a T,
    excluded: BTreeSet<T::Symbol>,
    excluded_mass: u32,
}

impl<'a, T: CountTable> ExclusionView<'a, T> {
    /// Masks `excluded` out of `base`. Symbols absent from the base are kept
    /// in the set but contribute no mass.
    pub fn new<I: IntoIterator<Item = T::Symbol>>(base: &'a T, excluded: I) -> Self {
        let excluded: BTreeSet<T::Symbol> = excluded.into_iter().collect();
        let excluded_mass = excluded.iter().map(|&s| base.count(s)).sum();
        Self {
            base,
            excluded,
            excluded_mass,
        }
    }

    pub fn base(&self) -> &'a T {
        self.base
    }

    pub fn excluded(&self) -> &BTreeSet<T::Symbol> {
        &self.excluded
    }

    pub fn is_excluded(&self, symbol: T::Symbol) -> bool {
        self.excluded.contains(&symbol)
    }

    /// Total count mass removed from the base.
    pub fn excluded_mass(&self) -> u32 {
        self.excluded_mass
    }

    pub fn freq(&self, symbol: T::Symbol) -> u32 {
        if self.is_excluded(symbol) {
            0
        } else {
            self.base.count(symbol)
        }
    }

    /// Reduced total: base total minus the excluded mass.
    pub fn total(&self) -> u32 {
        self.base.total() - self.excluded_mass
    }

    /// Probability of `symbol` as an exact ratio `(freq, total)`.
    pub fn probability(&self, symbol: T::Symbol) -> (u32, u32) {
        (self.freq(symbol), self.total())
    }

    /// Ideal coding cost `-log2(freq / total)` in bits.
    pub fn self_information(&self, symbol: T::Symbol) -> Result<f64> {
        self_information(self.freq(symbol), self.total())
    }
}

/// `-log2(freq / total)`, rejecting zero-probability events.
pub fn self_information(freq: u32, total: u32) -> Result<f64> {
    if freq == 0 || freq > total {
        return Err(Error::ZeroFrequency);
    }
    Ok(cost_bits(freq, total))
}
