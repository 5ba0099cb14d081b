//! Palette coding: an in-palette flag, a radius-based split of the palette
//! into a near and a far sub-palette, a sub-palette flag, and the color index
//! within the chosen sub-palette.
//!
//! Colors ruled out by the context stage can be masked from the palette
//! (reduction), and flags whose value both sides can infer can be skipped
//! (elision). Flag models are updated with the known value even when a flag
//! is skipped, so toggling either option never changes the adaptive state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::entropy::{cost_bits, BitModel, Frequencies, FrequencyTable, SymbolCoder};
use crate::error::{Error, Result};
use crate::model::{Color, CountTable, ExclusionView, Palette};
use crate::CodecOptions;

pub const MIN_RADIUS: u8 = 1;
pub const MAX_RADIUS: u8 = 255;

/// Sub-palette radius from the L-infinity prediction errors of the left and
/// upper neighbors: `ceil((left + above) / 2) + 1`, clamped to `[1, 255]`.
pub fn compute_radius(error_map: &[u8], width: u32, x: u32, y: u32) -> u8 {
    let w = width as usize;
    let idx = y as usize * w + x as usize;
    let left = if x > 0 {
        u32::from(error_map[idx - 1])
    } else {
        0
    };
    let above = if y > 0 {
        u32::from(error_map[idx - w])
    } else {
        0
    };
    let r = (left + above).div_ceil(2) + 1;
    r.clamp(u32::from(MIN_RADIUS), u32::from(MAX_RADIUS)) as u8
}

/// Surviving palette positions partitioned by distance to the prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubPaletteSplit {
    pub near: Vec<usize>,
    pub far: Vec<usize>,
    pub radius: u8,
}

/// Reference split by a full palette scan, in palette order.
pub fn split_palette(
    view: &ExclusionView<'_, Palette>,
    predicted: Color,
    radius: u8,
) -> SubPaletteSplit {
    let palette = view.base();
    let (near, far) = (0..palette.len())
        .filter(|&pos| !view.is_excluded(palette.color(pos)))
        .partition(|&pos| palette.color(pos).linf(predicted) <= radius);
    SubPaletteSplit { near, far, radius }
}

/// Near sub-palette: an explicit list of `(position, count)` in palette order.
/// Symbols are palette positions.
#[derive(Debug, Clone)]
pub struct NearTable {
    positions: Vec<usize>,
    freqs: FrequencyTable,
}

impl NearTable {
    fn new(entries: &[(usize, u32)]) -> Self {
        Self {
            positions: entries.iter().map(|e| e.0).collect(),
            freqs: FrequencyTable::new(entries.iter().map(|e| e.1)),
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }
}

impl Frequencies for NearTable {
    fn total(&self) -> u32 {
        self.freqs.total()
    }

    fn lookup(&self, symbol: usize) -> Option<(u32, u32)> {
        let i = self.positions.binary_search(&symbol).ok()?;
        self.freqs.lookup(i)
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        let (i, cum, freq) = self.freqs.find(target);
        (self.positions[i], cum, freq)
    }
}

/// Far sub-palette: the whole palette minus a sorted list of holes (near
/// survivors and excluded colors), resolved through the palette's prefix
/// sums so that it never materializes the full list.
#[derive(Debug, Clone)]
pub struct FarTable<'a> {
    palette: &'a Palette,
    holes: Vec<usize>,
    // hole_mass[j] = sum of counts of holes[..j]
    hole_mass: Vec<u32>,
    // hole_starts[j] = reduced cumulative count at holes[j]
    hole_starts: Vec<u32>,
    total: u32,
}

impl<'a> FarTable<'a> {
    fn new(palette: &'a Palette, mut holes: Vec<usize>) -> Self {
        holes.sort_unstable();
        holes.dedup();
        let mut hole_mass = Vec::with_capacity(holes.len() + 1);
        let mut acc = 0;
        hole_mass.push(0);
        for &h in &holes {
            acc += palette.count_at(h);
            hole_mass.push(acc);
        }
        let hole_starts = holes
            .iter()
            .zip(&hole_mass)
            .map(|(&h, &m)| palette.prefix_sum(h) - m)
            .collect();
        Self {
            palette,
            total: palette.total() - acc,
            holes,
            hole_mass,
            hole_starts,
        }
    }

    /// Reduced cumulative count at the start of `pos`.
    fn cum_at(&self, pos: usize) -> u32 {
        let before = self.holes.partition_point(|&h| h < pos);
        self.palette.prefix_sum(pos) - self.hole_mass[before]
    }
}

impl Frequencies for FarTable<'_> {
    fn total(&self) -> u32 {
        self.total
    }

    fn lookup(&self, symbol: usize) -> Option<(u32, u32)> {
        if symbol >= self.palette.len() || self.holes.binary_search(&symbol).is_ok() {
            return None;
        }
        Some((self.cum_at(symbol), self.palette.count_at(symbol)))
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        // First hole whose reduced start lies beyond the target; the symbol
        // sits in the run of non-holes just before it.
        let j = self.hole_starts.partition_point(|&s| s <= target);
        let pos = self.palette.search(target + self.hole_mass[j]);
        (pos, self.cum_at(pos), self.palette.count_at(pos))
    }
}

/// One sub-palette resolved by walking the palette in order. Used when the
/// radius is too large for probing; no per-event lists are built.
#[derive(Debug, Clone, Copy)]
pub struct ScanTable<'a> {
    palette: &'a Palette,
    // sorted palette positions of excluded colors
    excluded: &'a [usize],
    predicted: Color,
    radius: u8,
    near: bool,
    total: u32,
}

impl ScanTable<'_> {
    fn on_side(&self, pos: usize) -> bool {
        (self.palette.color(pos).linf(self.predicted) <= self.radius) == self.near
    }
}

const SCAN_BLOCK: usize = 256;

impl ScanTable<'_> {
    fn mass(&self, range: Range<usize>) -> u32 {
        self.palette
            .mass_by_distance(range, self.predicted, self.radius, self.near)
    }

    /// Mass of excluded same-side colors with positions in `range`.
    fn excluded_mass(&self, range: Range<usize>) -> u32 {
        let lo = self.excluded.partition_point(|&e| e < range.start);
        let hi = self.excluded.partition_point(|&e| e < range.end);
        self.excluded[lo..hi]
            .iter()
            .filter(|&&e| self.on_side(e))
            .map(|&e| self.palette.count_at(e))
            .sum()
    }
}

impl Frequencies for ScanTable<'_> {
    fn total(&self) -> u32 {
        self.total
    }

    fn lookup(&self, symbol: usize) -> Option<(u32, u32)> {
        if symbol >= self.palette.len()
            || !self.on_side(symbol)
            || self.excluded.binary_search(&symbol).is_ok()
        {
            return None;
        }
        let cum = self.mass(0..symbol) - self.excluded_mass(0..symbol);
        Some((cum, self.palette.count_at(symbol)))
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        let len = self.palette.len();
        let mut cum = 0u32;
        let mut start = 0;
        while start < len {
            let end = (start + SCAN_BLOCK).min(len);
            let block = self.mass(start..end) - self.excluded_mass(start..end);
            if target < cum + block {
                for pos in start..end {
                    if !self.on_side(pos) || self.excluded.binary_search(&pos).is_ok() {
                        continue;
                    }
                    let n = self.palette.count_at(pos);
                    if target < cum + n {
                        return (pos, cum, n);
                    }
                    cum += n;
                }
            }
            cum += block;
            start = end;
        }
        unreachable!("target {target} beyond sub-palette total {}", self.total)
    }
}

/// Frequencies of one sub-palette, whichever way it was built.
#[derive(Debug, Clone, Copy)]
pub enum SideTable<'s> {
    Listed(&'s NearTable),
    Holes(&'s FarTable<'s>),
    Scan(ScanTable<'s>),
}

impl Frequencies for SideTable<'_> {
    fn total(&self) -> u32 {
        match self {
            SideTable::Listed(t) => t.total(),
            SideTable::Holes(t) => t.total(),
            SideTable::Scan(t) => t.total(),
        }
    }

    fn lookup(&self, symbol: usize) -> Option<(u32, u32)> {
        match self {
            SideTable::Listed(t) => t.lookup(symbol),
            SideTable::Holes(t) => t.lookup(symbol),
            SideTable::Scan(t) => t.lookup(symbol),
        }
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        match self {
            SideTable::Listed(t) => t.find(target),
            SideTable::Holes(t) => t.find(target),
            SideTable::Scan(t) => t.find(target),
        }
    }
}

/// How [`SubPalettes::build_with`] locates the near colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Probe when the radius cube is small relative to the palette, else scan.
    Auto,
    /// Probe every color of the radius cube.
    Probe,
    /// Walk the palette.
    Scan,
}

#[derive(Debug, Clone)]
enum Tables<'a> {
    Probed {
        near: NearTable,
        far: FarTable<'a>,
    },
    Scanned {
        palette: &'a Palette,
        excluded: Vec<usize>,
    },
}

/// Coding tables for the two sub-palettes of one Stage 2 event.
#[derive(Debug, Clone)]
pub struct SubPalettes<'a> {
    pub predicted: Color,
    pub radius: u8,
    near_total: u32,
    far_total: u32,
    tables: Tables<'a>,
}

impl<'a> SubPalettes<'a> {
    pub fn build(view: &ExclusionView<'a, Palette>, predicted: Color, radius: u8) -> Self {
        Self::build_with(view, predicted, radius, SplitStrategy::Auto)
    }

    pub fn build_with(
        view: &ExclusionView<'a, Palette>,
        predicted: Color,
        radius: u8,
        strategy: SplitStrategy,
    ) -> Self {
        let palette = view.base();
        let spans = predicted
            .channels()
            .map(|v| (v.saturating_sub(radius), v.saturating_add(radius)));
        let volume: u64 = spans
            .iter()
            .map(|(lo, hi)| u64::from(hi - lo) + 1)
            .product();
        let probe = match strategy {
            SplitStrategy::Auto => volume.saturating_mul(4) < palette.len() as u64,
            SplitStrategy::Probe => true,
            SplitStrategy::Scan => false,
        };

        if probe {
            let mut near: Vec<(usize, u32)> = Vec::new();
            let [(r0, r1), (g0, g1), (b0, b1)] = spans;
            for r in r0..=r1 {
                for g in g0..=g1 {
                    for &b in palette.blues_with_prefix(r, g) {
                        let c = Color::new(r, g, b);
                        if (b0..=b1).contains(&b) && !view.is_excluded(c) {
                            let pos = palette.lookup(c).expect("indexed color is in the palette");
                            near.push((pos, palette.count_at(pos)));
                        }
                    }
                }
            }
            near.sort_unstable_by_key(|e| e.0);
            let mut holes: Vec<usize> = near.iter().map(|e| e.0).collect();
            holes.extend(view.excluded().iter().filter_map(|&c| palette.lookup(c)));
            let near = NearTable::new(&near);
            let far = FarTable::new(palette, holes);
            return Self {
                predicted,
                radius,
                near_total: near.total(),
                far_total: far.total(),
                tables: Tables::Probed { near, far },
            };
        }

        let near_all = palette.mass_by_distance(0..palette.len(), predicted, radius, true);
        let mut excluded: Vec<usize> = view
            .excluded()
            .iter()
            .filter_map(|&c| palette.lookup(c))
            .collect();
        excluded.sort_unstable();
        let near_excluded: u32 = excluded
            .iter()
            .filter(|&&pos| palette.color(pos).linf(predicted) <= radius)
            .map(|&pos| palette.count_at(pos))
            .sum();
        let near_total = near_all - near_excluded;
        Self {
            predicted,
            radius,
            near_total,
            far_total: view.total() - near_total,
            tables: Tables::Scanned { palette, excluded },
        }
    }

    pub fn total(&self, near: bool) -> u32 {
        if near {
            self.near_total
        } else {
            self.far_total
        }
    }

    /// Coding table for the near (`true`) or far sub-palette.
    pub fn table(&self, near: bool) -> SideTable<'_> {
        match &self.tables {
            Tables::Probed { near: t, .. } if near => SideTable::Listed(t),
            Tables::Probed { far: t, .. } => SideTable::Holes(t),
            Tables::Scanned { palette, excluded } => SideTable::Scan(ScanTable {
                palette,
                excluded,
                predicted: self.predicted,
                radius: self.radius,
                near,
                total: self.total(near),
            }),
        }
    }

    pub fn is_near(&self, color: Color) -> bool {
        color.linf(self.predicted) <= self.radius
    }
}

/// Adaptive models for the two Stage 2 flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stage2Models {
    pub in_palette: BitModel,
    pub sub_palette: BitModel,
}

/// Per-event record of a Stage 2 attempt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage2Event {
    pub used_reduction: bool,
    pub in_palette: bool,
    pub in_palette_flag_coded: bool,
    pub in_palette_elided_by_p: bool,
    pub in_palette_elided_by_f: bool,
    pub sub_flag_coded: bool,
    pub sub_flag_elided_by_f: bool,
    pub bits_flag: f64,
    pub bits_subflag: f64,
    pub bits_index: f64,
    /// Cost of the index under the unreduced sub-palette (only with reduction).
    pub bits_index_unreduced: Option<f64>,
    /// Cost the skipped flags would have had.
    pub bits_saved_by_f: f64,
    pub excluded_mass: u32,
}

/// Inputs shared by encoder and decoder for one Stage 2 event.
pub struct Stage2Input<'a> {
    pub palette: &'a Palette,
    /// Colors of the merged Stage 1 distribution.
    pub stage1_colors: &'a [Color],
    pub options: CodecOptions,
    pub palette_complete: bool,
    pub predicted: Color,
    pub radius: u8,
}

/// Codes the current color with the palette, or signals that it is new.
/// Returns `None` for a color outside the palette.
pub fn stage2_code<C: SymbolCoder>(
    coder: &mut C,
    input: &Stage2Input<'_>,
    models: &mut Stage2Models,
    target: Option<Color>,
) -> Result<(Option<Color>, Stage2Event)> {
    let palette = input.palette;
    let opts = input.options;
    if let Some(c) = target {
        if input.stage1_colors.binary_search(&c).is_ok() {
            return Err(Error::Invariant(format!(
                "{c:?} escaped Stage 1 while present in it"
            )));
        }
    }
    let excluded: &[Color] = if opts.palette_reduction {
        input.stage1_colors
    } else {
        &[]
    };
    let view = ExclusionView::new(palette, excluded.iter().copied());
    let mut ev = Stage2Event {
        used_reduction: opts.palette_reduction,
        excluded_mass: view.excluded_mass(),
        ..Default::default()
    };

    let known = target.map(|c| palette.contains(c));
    let in_palette = if opts.flag_elision && input.palette_complete {
        if known == Some(false) {
            return Err(Error::Invariant(
                "new color after palette completion".into(),
            ));
        }
        ev.in_palette_elided_by_f = true;
        ev.bits_saved_by_f += models.in_palette.cost(true);
        models.in_palette.update(true);
        true
    } else if view.total() == 0 {
        if known == Some(true) {
            return Err(Error::Invariant(
                "palette color with empty reduced view".into(),
            ));
        }
        ev.in_palette_elided_by_p = !palette.is_empty();
        models.in_palette.update(false);
        false
    } else {
        let (bit, cost) = coder.code_bit(&mut models.in_palette, known)?;
        ev.in_palette_flag_coded = true;
        ev.bits_flag = cost;
        bit
    };
    ev.in_palette = in_palette;
    if !in_palette {
        return Ok((None, ev));
    }
    if view.total() == 0 {
        return Err(Error::Corrupt(
            "palette flag set with nothing to code".into(),
        ));
    }

    let subs = SubPalettes::build(&view, input.predicted, input.radius);
    let near_total = subs.total(true);
    let far_total = subs.total(false);
    let known_near = target.map(|c| subs.is_near(c));
    let near = if opts.flag_elision && (near_total == 0 || far_total == 0) {
        ev.sub_flag_elided_by_f = true;
        let side = near_total > 0;
        ev.bits_saved_by_f += models.sub_palette.cost(side);
        models.sub_palette.update(side);
        side
    } else {
        let (bit, cost) = coder.code_bit(&mut models.sub_palette, known_near)?;
        ev.sub_flag_coded = true;
        ev.bits_subflag = cost;
        bit
    };

    let known_pos = target.and_then(|c| palette.lookup(c));
    let side_total = if near { near_total } else { far_total };
    if side_total == 0 {
        return Err(Error::Corrupt("empty sub-palette selected".into()));
    }
    let (pos, cost) = coder.code_symbol(&subs.table(near), known_pos)?;
    ev.bits_index = cost;

    if opts.palette_reduction {
        let side_excluded: u32 = view
            .excluded()
            .iter()
            .filter(|&&c| subs.is_near(c) == near)
            .map(|&c| palette.count(c))
            .sum();
        ev.bits_index_unreduced =
            Some(cost_bits(palette.count_at(pos), side_total + side_excluded));
    }
    Ok((Some(palette.color(pos)), ev))
}
