//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scf_core::entropy::{FrequencyTable, RangeEncoder};
use scf_core::model::{ExclusionView, Palette};
use scf_core::{
    decode_image_with, encode_image_with, generate, CodecOptions, CodingStats, Color, ImageKind,
    Instrument, SynthSpec,
};

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn report(&mut self, n: u32, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n}: {detail}");
        if !pass {
            self.failed += 1;
        }
    }
}

fn corpus() -> Vec<SynthSpec> {
    use ImageKind::*;
    let list: &[(ImageKind, u32, u32, u32)] = &[
        (Text, 1, 1, 1),
        (Text, 8, 8, 2),
        (Text, 3, 7, 2),
        (Text, 40, 12, 16),
        (Text, 64, 48, 16),
        (Text, 96, 64, 16),
        (Text, 160, 100, 16),
        (Text, 120, 80, 2),
        (Text, 128, 128, 1000),
        (Text, 200, 120, 1000),
        (Text, 160, 160, 1000),
        (Text, 256, 256, 1000),
        (Text, 256, 160, 1000),
        (Text, 256, 256, 50000),
        (Text, 512, 512, 16),
        (Text, 33, 1, 16),
        (Blocks, 1, 1, 1),
        (Blocks, 16, 16, 1),
        (Blocks, 10, 10, 2),
        (Blocks, 64, 64, 2),
        (Blocks, 1, 40, 2),
        (Blocks, 100, 80, 16),
        (Blocks, 128, 128, 16),
        (Blocks, 37, 23, 16),
        (Blocks, 128, 128, 1000),
        (Blocks, 200, 150, 1000),
        (Blocks, 256, 256, 1000),
        (Blocks, 256, 200, 50000),
        (Blocks, 512, 512, 2),
        (Blocks, 300, 2, 16),
        (Gradient, 32, 8, 1),
        (Gradient, 5, 3, 2),
        (Gradient, 64, 64, 2),
        (Gradient, 64, 64, 16),
        (Gradient, 256, 1, 16),
        (Gradient, 1, 256, 16),
        (Gradient, 120, 90, 16),
        (Gradient, 200, 100, 1000),
        (Gradient, 256, 256, 1000),
        (Gradient, 512, 512, 1000),
        (Gradient, 256, 256, 50000),
        (Gradient, 2, 2, 1),
        (Noise, 1, 1, 1),
        (Noise, 2, 2, 2),
        (Noise, 16, 16, 16),
        (Noise, 64, 64, 1000),
        (Noise, 128, 128, 50000),
        (Noise, 256, 256, 50000),
        (Noise, 7, 5, 16),
        (Noise, 1, 9, 2),
    ];
    let mut specs: Vec<SynthSpec> = list
        .iter()
        .enumerate()
        .map(|(i, &(kind, w, h, k))| SynthSpec::new(kind, w, h, k, 1000 + i as u64))
        .collect();
    // Second seeds for the screen-like kinds at moderate sizes.
    for (i, &(kind, w, h, k)) in [
        (Text, 96, 96, 16),
        (Text, 180, 120, 1000),
        (Text, 128, 96, 1000),
        (Text, 64, 64, 2),
        (Blocks, 96, 96, 16),
        (Blocks, 150, 100, 1000),
        (Blocks, 48, 48, 2),
        (Gradient, 96, 96, 16),
        (Gradient, 128, 64, 1000),
        (Noise, 32, 32, 1),
        (Text, 100, 100, 16),
        (Blocks, 80, 60, 16),
    ]
    .iter()
    .enumerate()
    {
        specs.push(SynthSpec::new(kind, w, h, k, 5000 + i as u64));
    }
    specs
}

struct ImageResult {
    spec: SynthSpec,
    sizes: [usize; 8],
    stats: Vec<CodingStats>,
    lossless: bool,
    checksums_agree: bool,
    extinction_ok: bool,
}

fn run_image(spec: SynthSpec) -> ImageResult {
    let img = generate(&spec).expect("corpus spec is valid");
    let mut sizes = [0usize; 8];
    let mut stats = Vec::with_capacity(8);
    let mut lossless = true;
    let mut checksums_agree = true;
    let mut extinction_ok = true;
    for (i, o) in CodecOptions::all_combinations().into_iter().enumerate() {
        let enc = encode_image_with(&img, o, Instrument::FULL).expect("encode");
        let dec = decode_image_with(&enc.bytes, Instrument::FULL);
        match dec {
            Ok(d) => {
                lossless &= d.image == img;
                checksums_agree &= d.trace.len() == enc.trace.len()
                    && enc
                        .trace
                        .iter()
                        .zip(&d.trace)
                        .all(|(a, b)| a.checksum.is_some() && a.checksum == b.checksum);
            }
            Err(_) => {
                lossless = false;
                checksums_agree = false;
            }
        }
        if let Some(done) = enc.stats.palette_completed_at {
            extinction_ok &= enc.trace[done as usize + 1..].iter().all(|r| r.stage != 3);
        } else {
            extinction_ok = false;
        }
        sizes[i] = enc.bytes.len();
        stats.push(enc.stats);
    }
    ImageResult {
        spec,
        sizes,
        stats,
        lossless,
        checksums_agree,
        extinction_ok,
    }
}

fn index_of(o: CodecOptions) -> usize {
    o.bits() as usize
}

fn worked_example(out: &mut Outcome) {
    // Palette x1..x7 with counts 1, 10, 2, 5, 2, 1, 3; Stage 1 holds x3, x6, x7.
    let counts = [1u32, 10, 2, 5, 2, 1, 3];
    let colors: Vec<Color> = (0..7u8).map(|i| Color::new(i, 0, 0)).collect();
    let mut palette = Palette::new();
    for (c, &n) in colors.iter().zip(&counts) {
        for _ in 0..n {
            palette.insert_or_bump(*c);
        }
    }
    let excluded = [2usize, 5, 6];
    let view = ExclusionView::new(&palette, excluded.iter().map(|&i| colors[i]));

    // Oracle: plain integer arithmetic on the count list.
    let expect_total: u32 = counts
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.contains(i))
        .map(|e| e.1)
        .sum();
    let mut ok = view.total() == expect_total && expect_total == 18;
    let mut shown = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        let (f, t) = view.probability(colors[i]);
        if excluded.contains(&i) {
            ok &= f == 0;
            continue;
        }
        ok &= (f, t) == (n, expect_total);
        shown.push(format!(
            "x{}={}/{}={:.1}%",
            i + 1,
            f,
            t,
            100.0 * f64::from(f) / f64::from(t)
        ));
    }
    let pct: Vec<String> = [1, 10, 5, 2]
        .iter()
        .map(|&n| format!("{:.1}", 100.0 * n as f64 / 18.0))
        .collect();
    ok &= pct == ["5.6", "55.6", "27.8", "11.1"];
    ok &= shown
        .iter()
        .zip(&pct)
        .all(|(s, p)| s.ends_with(&format!("={p}%")));
    out.report(
        2,
        ok,
        format!("reduced total {} ; {}", view.total(), shown.join(", ")),
    );
}

fn entropy_coder(out: &mut Outcome) {
    const N: usize = 1_000_000;
    let weights = [400u32, 200, 100, 100, 80, 60, 40, 20];
    let total: u32 = weights.iter().sum();
    let table = FrequencyTable::new(weights);
    let dist = WeightedIndex::new(weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut enc = RangeEncoder::new();
    let mut info_bits = 0.0f64;
    for _ in 0..N {
        let s = dist.sample(&mut rng);
        info_bits -= (f64::from(weights[s]) / f64::from(total)).log2();
        enc.encode(&table, s).unwrap();
    }
    let bytes = enc.finish().len() as f64;
    let shannon_bytes = info_bits / 8.0;
    let entropy_per_symbol: f64 = weights
        .iter()
        .map(|&w| {
            let p = f64::from(w) / f64::from(total);
            -p * p.log2()
        })
        .sum();
    let bound = shannon_bytes * 1.001 + 64.0;
    out.report(
        6,
        bytes <= bound,
        format!(
            "{N} symbols -> {bytes} bytes; self-information {shannon_bytes:.1} bytes (H = {entropy_per_symbol:.4} bit/symbol); bound {bound:.1}; overhead {:.4}%",
            100.0 * (bytes - shannon_bytes) / shannon_bytes
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut out = Outcome { failed: 0 };

    let specs = corpus();
    let results: Vec<ImageResult> = specs.iter().map(|&s| run_image(s)).collect();

    // 1. Losslessness.
    let lossy: Vec<String> = results
        .iter()
        .filter(|r| !r.lossless)
        .map(|r| r.spec.name())
        .collect();
    let kinds = ImageKind::ALL
        .iter()
        .filter(|k| specs.iter().any(|s| s.kind == **k))
        .count();
    let biggest = specs.iter().map(|s| s.width * s.height).max().unwrap_or(0);
    let smallest = specs.iter().map(|s| s.width * s.height).min().unwrap_or(0);
    let ks: Vec<u32> = [1, 2, 16, 1000, 50000]
        .into_iter()
        .filter(|k| specs.iter().any(|s| s.colors == *k))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    out.report(
        1,
        lossy.is_empty() && specs.len() >= 60 && kinds == 4 && smallest == 1 && biggest == 512 * 512 && ks.len() == 5,
        format!(
            "{} images x 8 option sets, {kinds} kinds, {smallest}..{biggest} pixels, K in {ks:?}, {} mismatches, {elapsed:.1}s",
            specs.len(),
            lossy.len()
        ),
    );

    worked_example(&mut out);

    // 3. Per-event audit of reduced against unreduced information.
    let mut events = (0u64, 0u64);
    let mut strict = (0u64, 0u64);
    let mut worst = f64::INFINITY;
    let mut heavy_strict = 0u64;
    for r in &results {
        for o in [CodecOptions::new(true, true, false), CodecOptions::all()] {
            let s = &r.stats[index_of(o)];
            events.0 += s.palette_audit.events;
            events.1 += s.residual_audit.events;
            strict.0 += s.palette_audit.strict;
            strict.1 += s.residual_audit.strict;
            for w in [s.palette_audit.worst_margin, s.residual_audit.worst_margin]
                .into_iter()
                .flatten()
            {
                worst = worst.min(w);
            }
            if r.spec.kind != ImageKind::Noise && r.spec.colors >= 16 {
                heavy_strict += s.palette_audit.strict + s.residual_audit.strict;
            }
        }
    }
    out.report(
        3,
        worst >= -1e-12 && heavy_strict > 0,
        format!(
            "palette events {} ({} strict), residual events {} ({} strict), worst margin {worst:.3e} bits, strict on palette-heavy images {heavy_strict}",
            events.0, strict.0, events.1, strict.1
        ),
    );

    // 4. Monotonicity.
    let mut violations = Vec::new();
    for r in &results {
        let size = |p, rr, f| r.sizes[index_of(CodecOptions::new(p, rr, f))];
        let chain = [
            size(false, false, false),
            size(true, false, false),
            size(true, true, false),
            size(true, true, true),
        ];
        if chain.windows(2).any(|w| w[1] > w[0]) {
            violations.push(format!("{} chain {chain:?}", r.spec.name()));
        }
        for p in [false, true] {
            for rr in [false, true] {
                if size(p, rr, true) > size(p, rr, false) {
                    violations.push(format!("{} F at P={p} R={rr}", r.spec.name()));
                }
            }
        }
    }
    out.report(
        4,
        violations.is_empty(),
        format!(
            "{} images, {} violations {:?}",
            results.len(),
            violations.len(),
            violations
        ),
    );

    // 5. Direction of gains on the text corpus with K >= 1000.
    let text: Vec<&ImageResult> = results
        .iter()
        .filter(|r| r.spec.kind == ImageKind::Text && r.spec.colors >= 1000)
        .collect();
    let bpp = |r: &ImageResult, o: CodecOptions| {
        8.0 * r.sizes[index_of(o)] as f64 / f64::from(r.spec.width * r.spec.height)
    };
    let n = text.len().max(1) as f64;
    let avg_base = text
        .iter()
        .map(|r| bpp(r, CodecOptions::base()))
        .sum::<f64>()
        / n;
    let avg_prf = text
        .iter()
        .map(|r| bpp(r, CodecOptions::all()))
        .sum::<f64>()
        / n;
    let ratio = 100.0 * avg_prf / avg_base;
    out.report(
        5,
        !text.is_empty() && ratio < 100.0,
        format!(
            "{} text images: Base {avg_base:.4} bpp, PRF {avg_prf:.4} bpp, PRF/Base = {ratio:.3}%",
            text.len()
        ),
    );

    entropy_coder(&mut out);

    // 7. Encoder/decoder symmetry.
    let symmetric = results.iter().filter(|r| r.checksums_agree).count();
    out.report(
        7,
        symmetric == results.len() && symmetric >= 10,
        format!(
            "per-pixel checksums equal on {symmetric} of {} images, 8 option sets each",
            results.len()
        ),
    );

    // 8. No Stage 3 after palette completion.
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !r.extinction_ok)
        .map(|r| r.spec.name())
        .collect();
    out.report(
        8,
        bad.is_empty(),
        format!(
            "{} images, {} with Stage 3 after completion {:?}",
            results.len(),
            bad.len(),
            bad
        ),
    );

    println!(
        "acceptance: {} of 8 criteria passed in {:.1}s",
        8 - out.failed,
        start.elapsed().as_secs_f64()
    );
    if out.failed > 0 {
        std::process::exit(1);
    }
}
