//! Corpus benchmark: bits per pixel under several option sets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use scf_core::ppm::parse_ppm;
use scf_core::{count_unique_colors, encode_image, CodecOptions, RgbImage};

pub const THREADS_ENV: &str = "SCF_THREADS";

/// Container bits per pixel, header included.
pub fn bpp(container_bytes: u64, img: &RgbImage) -> f64 {
    8.0 * container_bytes as f64 / img.pixel_count() as f64
}

fn option_sets(matrix: bool) -> Vec<CodecOptions> {
    if matrix {
        CodecOptions::all_combinations().to_vec()
    } else {
        vec![
            CodecOptions::base(),
            CodecOptions::new(true, false, false),
            CodecOptions::new(true, true, false),
            CodecOptions::all(),
        ]
    }
}

struct Row {
    file: String,
    result: Result<Measured, String>,
}

struct Measured {
    width: u32,
    height: u32,
    unique_colors: u32,
    bpp: Vec<f64>,
}

fn measure(path: &Path, sets: &[CodecOptions]) -> Result<Measured, String> {
    let data = fs::read(path).map_err(|e| e.to_string())?;
    let img = parse_ppm(&data).map_err(|e| e.to_string())?;
    let bpp = sets
        .iter()
        .map(|&o| encode_image(&img, o).map(|b| bpp(b.len() as u64, &img)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(Measured {
        width: img.width(),
        height: img.height(),
        unique_colors: count_unique_colors(&img),
        bpp,
    })
}

fn list_ppms(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
        {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn thread_cap() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

fn write_table<W: Write>(out: W, sets: &[CodecOptions], rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> = sets.iter().map(|o| o.label()).collect();
    let mut header = vec![
        "file".to_string(),
        "width".into(),
        "height".into(),
        "unique_colors".into(),
        "status".into(),
    ];
    header.extend(labels.iter().map(|l| format!("bpp_{l}")));
    header.extend(labels.iter().skip(1).map(|l| format!("pct_{l}")));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.file.clone()];
        match &row.result {
            Ok(m) => {
                rec.extend([
                    m.width.to_string(),
                    m.height.to_string(),
                    m.unique_colors.to_string(),
                    "ok".into(),
                ]);
                rec.extend(m.bpp.iter().map(|b| format!("{b:.6}")));
                let base = m.bpp[0];
                rec.extend(
                    m.bpp
                        .iter()
                        .skip(1)
                        .map(|b| format!("{:.3}", 100.0 * b / base)),
                );
            }
            Err(e) => {
                rec.extend([
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {e}"),
                ]);
                rec.extend(std::iter::repeat_n(String::new(), 2 * labels.len() - 1));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(dir: &Path, csv_path: Option<&Path>, matrix: bool) -> anyhow::Result<()> {
    let files = list_ppms(dir)?;
    let sets = option_sets(matrix);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    let rows: Vec<Row> = pool.install(|| {
        files
            .par_iter()
            .map(|p| Row {
                file: p
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                result: measure(p, &sets),
            })
            .collect()
    });

    match csv_path {
        Some(path) => {
            let f =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_table(f, &sets, &rows)?;
        }
        None => write_table(std::io::stdout().lock(), &sets, &rows)?,
    }

    let ok: Vec<&Measured> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    if !ok.is_empty() && csv_path.is_some() {
        let n = ok.len() as f64;
        let avg: Vec<f64> = (0..sets.len())
            .map(|i| ok.iter().map(|m| m.bpp[i]).sum::<f64>() / n)
            .collect();
        for (o, a) in sets.iter().zip(&avg) {
            println!("{:>5}  {a:.4} bpp  {:.2}%", o.label(), 100.0 * a / avg[0]);
        }
    }
    let failed = rows.len() - ok.len();
    if failed > 0 {
        eprintln!("{failed} of {} images failed", rows.len());
    }
    Ok(())
}
