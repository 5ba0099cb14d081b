use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scf_core::ppm::{parse_ppm, write_ppm};
use scf_core::{
    decode_image_with, encode_image, encode_image_with, generate, CodecOptions, CodingStats,
    ImageKind, Instrument, RgbImage, SynthSpec,
};

mod bench;

#[derive(Parser, Debug)]
#[command(name = "scf", version, about = "Lossless screen-content image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct OptionFlags {
    /// Disable palette reduction
    #[arg(long)]
    no_p: bool,
    /// Disable residual reduction
    #[arg(long)]
    no_r: bool,
    /// Disable flag elision
    #[arg(long)]
    no_f: bool,
}

impl OptionFlags {
    fn options(self) -> CodecOptions {
        CodecOptions::new(!self.no_p, !self.no_r, !self.no_f)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a binary PPM (P6) file
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        flags: OptionFlags,
        /// Write coding statistics as JSON ("-" for stdout)
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Decompress a container back to PPM
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Encode, decode and compare
    Roundtrip {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        flags: OptionFlags,
        /// Compare encoder and decoder state checksums after every pixel
        #[arg(long)]
        verify_state: bool,
        /// Flip this bit of the container before decoding
        #[arg(long, value_name = "BIT")]
        flip_bit: Option<u64>,
    },
    /// Measure bits per pixel over a directory of PPM files
    Bench {
        #[arg(long)]
        dir: PathBuf,
        /// Write the table here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Run all eight option combinations
        #[arg(long)]
        matrix: bool,
    },
    /// Generate a synthetic screen-content image
    Gen {
        #[arg(long, value_parser = parse_kind)]
        kind: ImageKind,
        #[arg(long = "w")]
        width: u32,
        #[arg(long = "h")]
        height: u32,
        #[arg(long)]
        colors: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out")]
        output: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<ImageKind, String> {
    s.parse()
        .map_err(|_| "expected one of: text, blocks, gradient, noise".to_string())
}

enum Failure {
    Usage(String),
    Io(anyhow::Error),
    Verify(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

type CmdResult = Result<(), Failure>;

fn read_ppm(path: &Path) -> anyhow::Result<RgbImage> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_ppm(&data).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct StatsReport<'a> {
    file: String,
    options: String,
    width: u32,
    height: u32,
    unique_colors: u32,
    container_bytes: u64,
    bpp: f64,
    #[serde(flatten)]
    stats: &'a CodingStats,
}

fn cmd_encode(
    input: &Path,
    output: &Path,
    options: CodecOptions,
    stats: Option<&Path>,
) -> CmdResult {
    let img = read_ppm(input)?;
    let enc = encode_image_with(&img, options, Instrument::NONE).context("encoding")?;
    write_file(output, &enc.bytes)?;
    if let Some(path) = stats {
        let report = StatsReport {
            file: input.display().to_string(),
            options: options.label(),
            width: img.width(),
            height: img.height(),
            unique_colors: enc.stats.palette_size,
            container_bytes: enc.bytes.len() as u64,
            bpp: bench::bpp(enc.bytes.len() as u64, &img),
            stats: &enc.stats,
        };
        let json = serde_json::to_string_pretty(&report).context("serializing stats")?;
        if path == Path::new("-") {
            writeln!(std::io::stdout().lock(), "{json}").context("writing stats")?;
        } else {
            write_file(path, json.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path) -> CmdResult {
    let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let decoded = decode_image_with(&data, Instrument::NONE)
        .with_context(|| format!("decoding {}", input.display()))?;
    write_file(output, &write_ppm(&decoded.image))?;
    Ok(())
}

fn cmd_roundtrip(
    input: &Path,
    options: CodecOptions,
    verify_state: bool,
    flip_bit: Option<u64>,
) -> CmdResult {
    let img = read_ppm(input)?;
    let instrument = if verify_state {
        Instrument::FULL
    } else {
        Instrument::NONE
    };
    let enc = encode_image_with(&img, options, instrument).context("encoding")?;
    let mut container = enc.bytes.clone();
    if let Some(bit) = flip_bit {
        let byte = usize::try_from(bit / 8)
            .ok()
            .filter(|&b| b < container.len())
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "--flip-bit {bit} is past the end of a {}-byte container",
                    container.len()
                ))
            })?;
        container[byte] ^= 1 << (bit % 8);
    }

    let decoded = decode_image_with(&container, instrument)
        .map_err(|e| Failure::Verify(format!("decode failed: {e}")))?;
    if decoded.options != options {
        return Err(Failure::Verify(format!(
            "container declares options {} but {} were used",
            decoded.options.label(),
            options.label()
        )));
    }
    if let Some((x, y)) = img.first_difference(&decoded.image) {
        return Err(Failure::Verify(format!(
            "rasters differ, first at pixel ({x}, {y})"
        )));
    }
    if verify_state {
        let w = img.width() as usize;
        let diverged = enc
            .trace
            .iter()
            .zip(&decoded.trace)
            .position(|(a, b)| a.checksum != b.checksum);
        if let Some(i) = diverged {
            return Err(Failure::Verify(format!(
                "state checksums diverge after pixel ({}, {})",
                i % w,
                i / w
            )));
        }
        if enc.trace.len() != decoded.trace.len() {
            return Err(Failure::Verify("checksum traces differ in length".into()));
        }
    }
    // A container that decodes to the right raster must also be the one the
    // encoder produces for it; anything else was altered in transit.
    let reencoded = encode_image(&decoded.image, decoded.options).context("re-encoding")?;
    if reencoded != container {
        let at = reencoded
            .iter()
            .zip(&container)
            .position(|(a, b)| a != b)
            .unwrap_or(reencoded.len().min(container.len()));
        return Err(Failure::Verify(format!(
            "container is not canonical, first differing byte {at}"
        )));
    }
    println!(
        "PASS {} ({}x{}, {} bytes, {})",
        input.display(),
        img.width(),
        img.height(),
        container.len(),
        if verify_state {
            "state verified"
        } else {
            "raster verified"
        }
    );
    Ok(())
}

fn cmd_gen(spec: SynthSpec, output: &Path) -> CmdResult {
    let img = generate(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    write_file(output, &write_ppm(&img))?;
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Encode {
            input,
            output,
            flags,
            stats,
        } => cmd_encode(&input, &output, flags.options(), stats.as_deref()),
        Command::Decode { input, output } => cmd_decode(&input, &output),
        Command::Roundtrip {
            input,
            flags,
            verify_state,
            flip_bit,
        } => cmd_roundtrip(&input, flags.options(), verify_state, flip_bit),
        Command::Bench { dir, csv, matrix } => {
            bench::run(&dir, csv.as_deref(), matrix).map_err(Failure::from)
        }
        Command::Gen {
            kind,
            width,
            height,
            colors,
            seed,
            output,
        } => cmd_gen(SynthSpec::new(kind, width, height, colors, seed), &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(3)
        }
    }
}
