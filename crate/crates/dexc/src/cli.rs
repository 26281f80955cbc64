//! The `dexc` command-line entry point: thin subcommands over the library
//! covering the attacker workflow (corpus/carrier generation, encode,
//! embed/extract, noise sweeps) and the defender workflow (scan, audit,
//! size-check), plus the report renderer.
//!
//! Reproducibility contract: every run writes a JSON manifest recording the
//! subcommand, its arguments, the seed, format versions, and SHA-256 hashes
//! of all data inputs and outputs. Manifests contain no timestamps or
//! absolute paths, so re-running the same command line reproduces them
//! byte-identically. Output files are written atomically (temp + rename).
//!
//! Exit codes: `0` success/clean, `2` defender alert, `64` usage error,
//! `65` data error.

use crate::codec::{
    decoded_to_values, encode_image, entropy_decode, lossless_baseline, read_decoded,
    read_latent_code, synthesize, synthesize_with, values_to_decoded, write_decoded,
    write_latent_code, CodecProfile,
};
use crate::container::{checkpoint_to_bytes, read_checkpoint, Checkpoint};
use crate::corpus::{
    gen_clean_checkpoint, gen_phantom, read_pgm, write_pgm, CarrierStructure, DynamicRange,
    PhantomKind, PhantomSpec,
};
use crate::defender::{
    finetune_audit, full_scan, render_audit_text, render_scan_text, size_filter, write_lsb_csv,
    AuditVerdict, ScanVerdict,
};
use crate::metrics;
use crate::privacy::{
    add_noise, resilience_sweep, write_sweep_csv, NoiseScope, NoiseSpec, Scenario, SweepConfig,
};
use crate::stego::{
    embed_dict, embed_lsb, embed_values, extract_dict, extract_lsb, extract_values, Channel,
    EmbedPlan,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ALERT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

// ----------------------------------------------------------------- errors

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+ $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )+};
}

data_error_from!(
    crate::codec::CodecError,
    crate::container::ContainerError,
    crate::corpus::CorpusError,
    crate::defender::DefenderError,
    crate::metrics::MetricsError,
    crate::privacy::PrivacyError,
    crate::stego::StegoError,
    std::io::Error,
    serde_json::Error,
    toml::de::Error,
);

// ----------------------------------------------------------------- parser

#[derive(Parser)]
#[command(
    name = "dexc",
    version,
    about = "Red-team/blue-team toolkit: payload exfiltration through model \
             checkpoints via compressed codes, and the defender audits against it",
    after_help = "Profile names like `50x80-analog` select 50 retained transform \
                  coefficients and 80 hyper scale classes, by loose analogy to \
                  learned-codec channel configurations; `near-lossless` selects \
                  the full-coefficient fine-quantizer setting."
)]
struct Cli {
    /// Base seed for anything stochastic in the subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path: a directory for multi-file subcommands, a directory or
    /// explicit file path for single-file ones.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress informational output (errors still go to stderr).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ChannelArgs {
    /// Hiding channel: lsb | dict | value.
    #[arg(long)]
    channel: String,
    /// LSB channel: low mantissa bits per parameter (1..=23).
    #[arg(long, default_value_t = 16)]
    bits: u8,
    /// DICT channel: extras key to use.
    #[arg(long, default_value = "opt.state")]
    key: String,
    /// VALUE channel: power-of-two scale applied to stored floats.
    #[arg(long, default_value_t = 1.0)]
    scale: f32,
    /// Carrier tensor names (comma separated); defaults to all tensors.
    #[arg(long, value_delimiter = ',')]
    tensors: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic phantom-image corpus as PGM files.
    GenCorpus {
        /// Number of images (image i uses seed `seed + i`).
        #[arg(long, default_value_t = 4)]
        count: u32,
        /// Phantom kind: ellipses | gradient | texture | noise | composite.
        #[arg(long, default_value = "composite")]
        kind: String,
        #[arg(long, default_value_t = 256)]
        width: u32,
        #[arg(long, default_value_t = 256)]
        height: u32,
        /// Dynamic range: ct | mr.
        #[arg(long, default_value = "ct")]
        range: String,
    },
    /// Generate a clean carrier checkpoint.
    GenCkpt {
        /// Total parameter count.
        #[arg(long)]
        params: u64,
        /// Carrier structure: uniform-mantissa | grid-rounded.
        #[arg(long, default_value = "grid-rounded")]
        structure: String,
    },
    /// Compress a PGM image into an entropy-coded latent file (.decz).
    Encode {
        #[arg(long = "in", value_name = "PGM")]
        input: PathBuf,
        /// Codec profile name (NxM-analog or near-lossless).
        #[arg(long, default_value = "50x80-analog")]
        profile: String,
        /// Override the profile's quantizer step.
        #[arg(long)]
        q_step: Option<f32>,
        /// Override the profile's synthesis stage count.
        #[arg(long)]
        stages: Option<u16>,
    },
    /// Decompress a .decz file back to a PGM image.
    Decode {
        #[arg(long = "in", value_name = "DECZ")]
        input: PathBuf,
        /// Reconstruct through synthesis tensors stored in this checkpoint
        /// instead of the builtin filters.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Reference PGM to score the reconstruction against.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
    /// Compress a PGM image with the lossless DEFLATE baseline.
    Lossless {
        #[arg(long = "in", value_name = "PGM")]
        input: PathBuf,
    },
    /// Hide a payload inside a checkpoint through one of the channels.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Payload bytes (lsb/dict channels).
        #[arg(long)]
        payload: Option<PathBuf>,
        /// Decoded-latent file .decy (value channel).
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Recover a hidden payload from a checkpoint.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Add zero-mean Gaussian noise to checkpoint parameters.
    Noise {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sigma: f64,
        /// Restrict noise to these tensors (comma separated); default all.
        #[arg(long, value_delimiter = ',')]
        tensors: Vec<String>,
    },
    /// Run a noise-resilience sweep described by a TOML config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run all defender detectors against an exported checkpoint.
    Scan {
        #[arg(long)]
        ckpt: PathBuf,
        /// Size limit in bytes for the size filter.
        #[arg(long, default_value_t = 1 << 30)]
        limit: u64,
        /// Allow-listed extras keys (comma separated).
        #[arg(long, value_delimiter = ',')]
        allow: Vec<String>,
        #[arg(long, default_value_t = 16)]
        bits: u8,
    },
    /// Fine-tuning parameter-change audit between two checkpoints.
    Audit {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
    },
    /// Check an exported checkpoint against a size limit.
    SizeCheck {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        limit: u64,
    },
    /// Summarize sweep CSVs into a per-profile table.
    Report {
        /// Sweep CSV files (each with its sibling manifest); empty list
        /// renders a header-only table.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sweeps: Vec<PathBuf>,
    },
}

// ----------------------------------------------------------------- entry

/// Parses `args` (argv[0] included) and runs the tool, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("dexc: {e}");
            EXIT_USAGE
        }
        Err(e @ CliError::Data(_)) => {
            eprintln!("dexc: {e}");
            EXIT_DATA
        }
    }
}

/// [`run`] over the real process arguments.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

// ----------------------------------------------------------------- plumbing

fn say(cli: &Cli, msg: String) {
    if !cli.quiet {
        println!("{msg}");
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Atomic write: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("output path {} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Resolves the primary output file for single-file subcommands: if `--out`
/// is an existing directory (or `.`), the default name lands inside it;
/// otherwise `--out` itself is the file path.
fn out_file(cli: &Cli, default_name: &str) -> PathBuf {
    if cli.out.is_dir() {
        cli.out.join(default_name)
    } else {
        cli.out.clone()
    }
}

/// Output directory for multi-file subcommands.
fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(cli.out.clone())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

/// Reproducibility record written next to every subcommand's outputs.
#[derive(serde::Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    seed: u64,
    format_versions: BTreeMap<&'static str, u16>,
    args: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<String>,
}

impl Manifest {
    fn new(subcommand: &'static str, seed: u64) -> Manifest {
        Manifest {
            tool: "dexc",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            format_versions: BTreeMap::from([("mtc", 1), ("decz", 1), ("decy", 1)]),
            args: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: None,
        }
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Manifest {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    fn input(mut self, name: impl ToString, bytes: &[u8]) -> Manifest {
        self.inputs.insert(name.to_string(), sha256_hex(bytes));
        self
    }

    fn output(mut self, name: impl ToString, bytes: &[u8]) -> Manifest {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        self
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}

/// Manifest path for a primary output file: `<file>.manifest.json` with the
/// original extension folded into the name (`sweep.csv` →
/// `sweep.manifest.json`).
fn manifest_path_for(primary: &Path) -> PathBuf {
    primary.with_extension("manifest.json")
}

fn name_of(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn parse_channel(args: &ChannelArgs) -> Result<Channel, CliError> {
    Channel::parse(&args.channel).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let ckpt = read_checkpoint(&bytes)?;
    Ok((ckpt, bytes))
}

fn carrier_names(ckpt: &Checkpoint, requested: &[String]) -> Vec<String> {
    if requested.is_empty() {
        ckpt.tensors.iter().map(|t| t.name.clone()).collect()
    } else {
        requested.to_vec()
    }
}

fn resolve_profile(
    name: &str,
    q_step: Option<f32>,
    stages: Option<u16>,
) -> Result<CodecProfile, CliError> {
    let mut profile = CodecProfile::named(name)?;
    if let Some(q) = q_step {
        profile = profile.with_q_step(q)?;
    }
    if let Some(s) = stages {
        profile = profile.with_decoder_stages(s)?;
    }
    Ok(profile)
}

// ----------------------------------------------------------------- sweep config

/// Flat TOML schema for sweep configs (strings, numbers, arrays only).
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    scenario: String,
    profile: String,
    channel: String,
    sigmas: Vec<f64>,
    trials: u64,
    /// Image specs `kind:WxH:range:seed`, e.g. `composite:256x256:ct:1`.
    images: Vec<String>,
    carrier_params: u64,
    carrier_structure: String,
    #[serde(default)]
    q_step: Option<f32>,
    #[serde(default)]
    decoder_stages: Option<u16>,
    #[serde(default = "default_bits")]
    bits_per_param: u8,
    #[serde(default = "default_scale")]
    value_scale: f32,
    #[serde(default = "default_key")]
    dict_key: String,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_bits() -> u8 {
    16
}
fn default_scale() -> f32 {
    1.0
}
fn default_key() -> String {
    "opt.state".into()
}

/// Parses `kind:WxH:range:seed` into a phantom spec.
fn parse_image_spec(s: &str) -> Result<PhantomSpec, CliError> {
    let err = || {
        CliError::Data(format!(
            "bad image spec '{s}': expected kind:WxH:range:seed, e.g. composite:256x256:ct:1"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let [kind, dims, range, seed] = parts.as_slice() else {
        return Err(err());
    };
    let kind = PhantomKind::parse(kind)?;
    let (w, h) = dims.split_once('x').ok_or_else(err)?;
    let width: u32 = w.parse().map_err(|_| err())?;
    let height: u32 = h.parse().map_err(|_| err())?;
    let range = DynamicRange::parse(range)?;
    let seed: u64 = seed.parse().map_err(|_| err())?;
    Ok(PhantomSpec::new(kind, width, height, seed, range))
}

fn sweep_config_from_toml(text: &str, default_seed: u64) -> Result<SweepConfig, CliError> {
    let file: SweepFile = toml::from_str(text)?;
    let images = file
        .images
        .iter()
        .map(|s| parse_image_spec(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SweepConfig {
        scenario: Scenario::parse(&file.scenario)?,
        profile: resolve_profile(&file.profile, file.q_step, file.decoder_stages)?,
        channel: Channel::parse(&file.channel)?,
        sigmas: file.sigmas,
        trials: file.trials,
        images,
        carrier_params: file.carrier_params,
        carrier_structure: CarrierStructure::parse(&file.carrier_structure)?,
        bits_per_param: file.bits_per_param,
        value_scale: file.value_scale,
        dict_key: file.dict_key,
        seed: file.seed.unwrap_or(default_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

// ----------------------------------------------------------------- dispatch

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::GenCorpus {
            count,
            kind,
            width,
            height,
            range,
        } => cmd_gen_corpus(cli, *count, kind, *width, *height, range),
        Command::GenCkpt { params, structure } => cmd_gen_ckpt(cli, *params, structure),
        Command::Encode {
            input,
            profile,
            q_step,
            stages,
        } => cmd_encode(cli, input, profile, *q_step, *stages),
        Command::Decode {
            input,
            ckpt,
            reference,
        } => cmd_decode(cli, input, ckpt.as_deref(), reference.as_deref()),
        Command::Lossless { input } => cmd_lossless(cli, input),
        Command::Embed {
            ckpt,
            channel,
            payload,
            values,
        } => cmd_embed(cli, ckpt, channel, payload.as_deref(), values.as_deref()),
        Command::Extract { ckpt, channel } => cmd_extract(cli, ckpt, channel),
        Command::Noise {
            ckpt,
            sigma,
            tensors,
        } => cmd_noise(cli, ckpt, *sigma, tensors),
        Command::Sweep { config } => cmd_sweep(cli, config),
        Command::Scan {
            ckpt,
            limit,
            allow,
            bits,
        } => cmd_scan(cli, ckpt, *limit, allow, *bits),
        Command::Audit {
            before,
            after,
            epsilon,
        } => cmd_audit(cli, before, after, *epsilon),
        Command::SizeCheck { ckpt, limit } => cmd_size_check(cli, ckpt, *limit),
        Command::Report { sweeps } => cmd_report(cli, sweeps),
    }
}

// ----------------------------------------------------------------- commands

fn cmd_gen_corpus(
    cli: &Cli,
    count: u32,
    kind: &str,
    width: u32,
    height: u32,
    range: &str,
) -> Result<i32, CliError> {
    let kind_parsed = PhantomKind::parse(kind)?;
    let range_parsed = DynamicRange::parse(range)?;
    let dir = out_dir(cli)?;
    let mut manifest = Manifest::new("gen-corpus", cli.seed)
        .arg("count", count)
        .arg("kind", kind)
        .arg("width", width)
        .arg("height", height)
        .arg("range", range);
    for i in 0..count {
        let spec = PhantomSpec::new(
            kind_parsed,
            width,
            height,
            cli.seed + i as u64,
            range_parsed,
        );
        let img = gen_phantom(&spec)?;
        let mut bytes = Vec::new();
        write_pgm(&img, &mut bytes)?;
        let name = format!("phantom_{i:03}.pgm");
        write_atomic(&dir.join(&name), &bytes)?;
        manifest = manifest.output(&name, &bytes);
    }
    manifest.write(&dir.join("gen-corpus.manifest.json"))?;
    say(
        cli,
        format!("wrote {count} {kind} phantom(s) to {}", dir.display()),
    );
    Ok(EXIT_OK)
}

fn cmd_gen_ckpt(cli: &Cli, params: u64, structure: &str) -> Result<i32, CliError> {
    let ckpt = gen_clean_checkpoint(params, CarrierStructure::parse(structure)?, cli.seed)?;
    let bytes = checkpoint_to_bytes(&ckpt)?;
    let path = out_file(cli, "carrier.mtc");
    write_atomic(&path, &bytes)?;
    Manifest::new("gen-ckpt", cli.seed)
        .arg("params", params)
        .arg("structure", structure)
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    say(
        cli,
        format!(
            "wrote {} ({} tensors, {} params, {} bytes)",
            path.display(),
            ckpt.tensors.len(),
            ckpt.parameter_count(),
            bytes.len()
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_encode(
    cli: &Cli,
    input: &Path,
    profile_name: &str,
    q_step: Option<f32>,
    stages: Option<u16>,
) -> Result<i32, CliError> {
    let profile = resolve_profile(profile_name, q_step, stages)?;
    let pgm = read_file(input)?;
    let img = read_pgm(&pgm)?;
    let code = encode_image(&img, &profile)?;
    let bytes = write_latent_code(&code)?;
    let path = out_file(cli, &format!("{}.decz", file_stem(input)));
    write_atomic(&path, &bytes)?;
    Manifest::new("encode", cli.seed)
        .arg("in", input.display())
        .arg("profile", profile.label())
        .input(name_of(input), &pgm)
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    let bpp = metrics::bpp(bytes.len() as u64, img.width, img.height)?;
    say(
        cli,
        format!(
            "encoded {}x{} with {} -> {} ({} bytes, {bpp:.4} bpp)",
            img.width,
            img.height,
            profile.label(),
            path.display(),
            bytes.len()
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_decode(
    cli: &Cli,
    input: &Path,
    ckpt: Option<&Path>,
    reference: Option<&Path>,
) -> Result<i32, CliError> {
    let decz = read_file(input)?;
    let code = read_latent_code(&decz)?;
    let dec = entropy_decode(&code)?;
    let mut manifest = Manifest::new("decode", cli.seed)
        .arg("in", input.display())
        .input(name_of(input), &decz);
    let img = match ckpt {
        Some(ckpt_path) => {
            let (carrier, carrier_bytes) = load_checkpoint(ckpt_path)?;
            manifest = manifest
                .arg("ckpt", ckpt_path.display())
                .input(name_of(ckpt_path), &carrier_bytes);
            synthesize_with(&dec, &carrier)?
        }
        None => synthesize(&dec)?,
    };
    let mut bytes = Vec::new();
    write_pgm(&img, &mut bytes)?;
    let path = out_file(cli, &format!("{}.pgm", file_stem(input)));
    write_atomic(&path, &bytes)?;
    manifest
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    let mut line = format!(
        "decoded {} -> {} ({}x{})",
        input.display(),
        path.display(),
        img.width,
        img.height
    );
    if let Some(ref_path) = reference {
        let reference_img = read_pgm(&read_file(ref_path)?)?;
        let psnr = metrics::psnr(&reference_img, &img)?;
        let ms_ssim = metrics::ms_ssim(&reference_img, &img)?;
        let _ = write!(
            line,
            "; vs {}: psnr {psnr:.2} dB, ms-ssim {ms_ssim:.5}",
            ref_path.display()
        );
    }
    say(cli, line);
    Ok(EXIT_OK)
}

fn cmd_lossless(cli: &Cli, input: &Path) -> Result<i32, CliError> {
    let pgm = read_file(input)?;
    let img = read_pgm(&pgm)?;
    let bytes = lossless_baseline(&img)?;
    let raw = 2 * img.values.len() as u64;
    let path = out_file(cli, &format!("{}.deflate", file_stem(input)));
    write_atomic(&path, &bytes)?;
    Manifest::new("lossless", cli.seed)
        .arg("in", input.display())
        .input(name_of(input), &pgm)
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    say(
        cli,
        format!(
            "lossless baseline {} -> {}: {} of {raw} raw bytes ({:.3}x)",
            input.display(),
            path.display(),
            bytes.len(),
            bytes.len() as f64 / raw as f64
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_embed(
    cli: &Cli,
    ckpt_path: &Path,
    channel_args: &ChannelArgs,
    payload: Option<&Path>,
    values: Option<&Path>,
) -> Result<i32, CliError> {
    let channel = parse_channel(channel_args)?;
    let (carrier, carrier_bytes) = load_checkpoint(ckpt_path)?;
    let names = carrier_names(&carrier, &channel_args.tensors);

    let mut manifest = Manifest::new("embed", cli.seed)
        .arg("ckpt", ckpt_path.display())
        .arg("channel", channel.name())
        .input(name_of(ckpt_path), &carrier_bytes);

    let need = |opt: Option<&Path>, flag: &str| {
        opt.map(Path::to_path_buf).ok_or_else(|| {
            CliError::Usage(format!(
                "--{flag} is required for the {} channel",
                channel.name()
            ))
        })
    };

    let (stego, payload_len) = match channel {
        Channel::Lsb => {
            let payload_path = need(payload, "payload")?;
            let data = read_file(&payload_path)?;
            let plan = EmbedPlan::lsb_bits(names, channel_args.bits)?;
            manifest = manifest
                .arg("bits", channel_args.bits)
                .arg("payload", payload_path.display())
                .input(name_of(&payload_path), &data);
            (embed_lsb(&carrier, &plan, &data)?, data.len())
        }
        Channel::Dict => {
            let payload_path = need(payload, "payload")?;
            let data = read_file(&payload_path)?;
            manifest = manifest
                .arg("key", &channel_args.key)
                .arg("payload", payload_path.display())
                .input(name_of(&payload_path), &data);
            (embed_dict(&carrier, &channel_args.key, &data)?, data.len())
        }
        Channel::Value => {
            let values_path = need(values, "values")?;
            let decy = read_file(&values_path)?;
            // Accept either a raw decoded-coefficient file or an
            // entropy-coded latent file (decoded here before planting).
            let dec = if decy.starts_with(crate::codec::DECY_MAGIC) {
                read_decoded(&decy)?
            } else {
                entropy_decode(&read_latent_code(&decy)?)?
            };
            let floats = decoded_to_values(&dec)?;
            let plan = EmbedPlan::values(names, channel_args.scale)?;
            manifest = manifest
                .arg("scale", channel_args.scale)
                .arg("values", values_path.display())
                .input(name_of(&values_path), &decy);
            (embed_values(&carrier, &plan, &floats)?, 4 * floats.len())
        }
    };

    let bytes = checkpoint_to_bytes(&stego)?;
    let path = out_file(cli, "stego.mtc");
    write_atomic(&path, &bytes)?;
    manifest
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    say(
        cli,
        format!(
            "embedded {payload_len} payload bytes via {} -> {} ({} bytes, carrier was {})",
            channel.name(),
            path.display(),
            bytes.len(),
            carrier_bytes.len()
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_extract(cli: &Cli, ckpt_path: &Path, channel_args: &ChannelArgs) -> Result<i32, CliError> {
    let channel = parse_channel(channel_args)?;
    let (stego, stego_bytes) = load_checkpoint(ckpt_path)?;
    let manifest = Manifest::new("extract", cli.seed)
        .arg("ckpt", ckpt_path.display())
        .arg("channel", channel.name())
        .input(name_of(ckpt_path), &stego_bytes);

    let (default_name, bytes) = match channel {
        Channel::Lsb => {
            let names = carrier_names(&stego, &channel_args.tensors);
            let plan = EmbedPlan::lsb_bits(names, channel_args.bits)?;
            ("payload.bin", extract_lsb(&stego, &plan)?)
        }
        Channel::Dict => ("payload.bin", extract_dict(&stego, &channel_args.key)?),
        Channel::Value => {
            // Default carrier list: every tensor that has a paired value
            // tensor, in storage order.
            let names = if channel_args.tensors.is_empty() {
                stego
                    .tensors
                    .iter()
                    .filter(|t| stego.find_tensor(&format!("{}.moment1", t.name)).is_some())
                    .map(|t| t.name.clone())
                    .collect()
            } else {
                channel_args.tensors.clone()
            };
            let plan = EmbedPlan::values(names, channel_args.scale)?;
            let floats = extract_values(&stego, &plan)?;
            let dec = values_to_decoded(&floats)?;
            ("values.decy", write_decoded(&dec)?)
        }
    };

    let path = out_file(cli, default_name);
    write_atomic(&path, &bytes)?;
    manifest
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    say(
        cli,
        format!(
            "extracted {} bytes via {} -> {}",
            bytes.len(),
            channel.name(),
            path.display()
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_noise(cli: &Cli, ckpt_path: &Path, sigma: f64, tensors: &[String]) -> Result<i32, CliError> {
    let (ckpt, ckpt_bytes) = load_checkpoint(ckpt_path)?;
    let scope = if tensors.is_empty() {
        NoiseScope::AllTensors
    } else {
        NoiseScope::Named(tensors.to_vec())
    };
    let spec = NoiseSpec::new(sigma, cli.seed, scope)?;
    let noised = add_noise(&ckpt, &spec)?;
    let bytes = checkpoint_to_bytes(&noised)?;
    let path = out_file(cli, "noised.mtc");
    write_atomic(&path, &bytes)?;
    Manifest::new("noise", cli.seed)
        .arg("ckpt", ckpt_path.display())
        .arg("sigma", sigma)
        .input(name_of(ckpt_path), &ckpt_bytes)
        .output(name_of(&path), &bytes)
        .write(&manifest_path_for(&path))?;
    say(
        cli,
        format!("added sigma={sigma} noise -> {}", path.display()),
    );
    Ok(EXIT_OK)
}

fn cmd_sweep(cli: &Cli, config_path: &Path) -> Result<i32, CliError> {
    let config_text = String::from_utf8(read_file(config_path)?)
        .map_err(|e| CliError::Data(format!("config is not UTF-8: {e}")))?;
    let cfg = sweep_config_from_toml(&config_text, cli.seed)?;
    let result = resilience_sweep(&cfg)?;

    let mut csv = Vec::new();
    write_sweep_csv(&result.rows, &mut csv)
        .map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))?;
    let dir = out_dir(cli)?;
    let csv_path = dir.join("sweep.csv");
    write_atomic(&csv_path, &csv)?;

    let mut manifest = Manifest::new("sweep", cfg.seed)
        .arg("config", config_path.display())
        .arg("scenario", cfg.scenario.name())
        .arg("profile", cfg.profile.label())
        .arg("channel", cfg.channel.name())
        .input(name_of(config_path), config_text.as_bytes())
        .output("sweep.csv", &csv);
    manifest.config = Some(config_text);
    manifest.write(&dir.join("sweep.manifest.json"))?;

    let recovered = result.rows.iter().filter(|r| r.crc_ok).count();
    say(
        cli,
        format!(
            "sweep {} cells ({} recovered) -> {}; payload {} B, export {} B, carrier {} B",
            result.rows.len(),
            recovered,
            csv_path.display(),
            result.payload_bytes,
            result.export_bytes,
            result.carrier_bytes
        ),
    );
    Ok(EXIT_OK)
}

fn cmd_scan(
    cli: &Cli,
    ckpt_path: &Path,
    limit: u64,
    allow: &[String],
    bits: u8,
) -> Result<i32, CliError> {
    let (ckpt, ckpt_bytes) = load_checkpoint(ckpt_path)?;
    let report = full_scan(&ckpt, &name_of(ckpt_path), limit, allow, bits)?;
    let text = render_scan_text(&report);
    let mut csv = Vec::new();
    write_lsb_csv(&report.lsb_findings, &mut csv)
        .map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))?;
    let dir = out_dir(cli)?;
    write_atomic(&dir.join("scan.txt"), text.as_bytes())?;
    write_atomic(&dir.join("scan.csv"), &csv)?;
    Manifest::new("scan", cli.seed)
        .arg("ckpt", ckpt_path.display())
        .arg("limit", limit)
        .arg("allow", allow.join(","))
        .arg("bits", bits)
        .input(name_of(ckpt_path), &ckpt_bytes)
        .output("scan.txt", text.as_bytes())
        .output("scan.csv", &csv)
        .write(&dir.join("scan.manifest.json"))?;
    if !cli.quiet {
        print!("{text}");
    }
    Ok(if report.verdict() == ScanVerdict::Flagged {
        EXIT_ALERT
    } else {
        EXIT_OK
    })
}

fn cmd_audit(
    cli: &Cli,
    before_path: &Path,
    after_path: &Path,
    epsilon: f64,
) -> Result<i32, CliError> {
    let (before, before_bytes) = load_checkpoint(before_path)?;
    let (after, after_bytes) = load_checkpoint(after_path)?;
    let report = finetune_audit(&before, &after, epsilon)?;
    let text = render_audit_text(&report);
    let dir = out_dir(cli)?;
    write_atomic(&dir.join("audit.txt"), text.as_bytes())?;
    Manifest::new("audit", cli.seed)
        .arg("before", before_path.display())
        .arg("after", after_path.display())
        .arg("epsilon", epsilon)
        .input(format!("before:{}", name_of(before_path)), &before_bytes)
        .input(format!("after:{}", name_of(after_path)), &after_bytes)
        .output("audit.txt", text.as_bytes())
        .write(&dir.join("audit.manifest.json"))?;
    if !cli.quiet {
        print!("{text}");
    }
    Ok(if report.verdict() == AuditVerdict::Alert {
        EXIT_ALERT
    } else {
        EXIT_OK
    })
}

fn cmd_size_check(cli: &Cli, ckpt_path: &Path, limit: u64) -> Result<i32, CliError> {
    let (ckpt, ckpt_bytes) = load_checkpoint(ckpt_path)?;
    let flagged = size_filter(&ckpt, limit)?;
    let dir = out_dir(cli)?;
    Manifest::new("size-check", cli.seed)
        .arg("ckpt", ckpt_path.display())
        .arg("limit", limit)
        .input(name_of(ckpt_path), &ckpt_bytes)
        .write(&dir.join("size-check.manifest.json"))?;
    say(
        cli,
        format!(
            "size {} bytes, limit {limit} -> {}",
            ckpt.total_size(),
            if flagged { "FLAG" } else { "ok" }
        ),
    );
    Ok(if flagged { EXIT_ALERT } else { EXIT_OK })
}

// ----------------------------------------------------------------- report

struct CsvRow {
    sigma: f64,
    extract_ok: bool,
    crc_ok: bool,
    psnr_db: Option<f64>,
    ms_ssim: Option<f64>,
}

struct ParsedSweep {
    rows: Vec<CsvRow>,
}

/// Strict parser for the CSVs this tool writes.
fn parse_sweep_csv(text: &str) -> Result<ParsedSweep, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data("empty sweep CSV".into()))?;
    if header != "sigma,channel,trial,extract_ok,crc_ok,psnr_db,ms_ssim" {
        return Err(CliError::Data(format!(
            "unexpected sweep CSV header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [sigma, _channel, _trial, extract_ok, crc_ok, psnr, ms_ssim] = fields.as_slice() else {
            return Err(CliError::Data(format!(
                "sweep CSV row {} malformed: {line}",
                idx + 2
            )));
        };
        let parse_f = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Data(format!("bad {what} '{s}' in row {}", idx + 2)))
        };
        let parse_b = |s: &str, what: &str| -> Result<bool, CliError> {
            s.parse()
                .map_err(|_| CliError::Data(format!("bad {what} '{s}' in row {}", idx + 2)))
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>, CliError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(s, what).map(Some)
            }
        };
        rows.push(CsvRow {
            sigma: parse_f(sigma, "sigma")?,
            extract_ok: parse_b(extract_ok, "extract_ok")?,
            crc_ok: parse_b(crc_ok, "crc_ok")?,
            psnr_db: opt(psnr, "psnr_db")?,
            ms_ssim: opt(ms_ssim, "ms_ssim")?,
        });
    }
    Ok(ParsedSweep { rows })
}

struct ReportRow {
    profile: String,
    scenario: String,
    channel: String,
    c_latent: u16,
    c_hyper: u16,
    q_step: f32,
    bpp: f64,
    p_ratio: f64,
    psnr_db: Option<f64>,
    ms_ssim: Option<f64>,
    y_over_z: f64,
    extract_rate: f64,
    crc_rate: f64,
}

/// Recomputes profile-level size metrics from a sweep's recorded config and
/// merges them with the measured success/fidelity rates from its CSV.
fn report_row(csv_path: &Path, default_seed: u64) -> Result<ReportRow, CliError> {
    let csv_text = String::from_utf8(read_file(csv_path)?)
        .map_err(|e| CliError::Data(format!("sweep CSV is not UTF-8: {e}")))?;
    let parsed = parse_sweep_csv(&csv_text)?;

    let manifest_path = manifest_path_for(csv_path);
    let manifest_bytes = read_file(&manifest_path)?;
    let manifest: serde_json::Value = serde_json::from_slice(&manifest_bytes)?;
    let config_text = manifest
        .get("config")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            CliError::Data(format!(
                "{} carries no sweep config",
                manifest_path.display()
            ))
        })?;
    let seed = manifest
        .get("seed")
        .and_then(|v| v.as_u64())
        .unwrap_or(default_seed);
    let cfg = sweep_config_from_toml(config_text, seed)?;

    // Size accounting recomputed deterministically from the config.
    let mut z_bytes = 0u64;
    let mut y_bytes = 0u64;
    let mut baseline_bytes = 0u64;
    let mut pixels = 0u64;
    for spec in &cfg.images {
        let img = gen_phantom(spec)?;
        let code = encode_image(&img, &cfg.profile)?;
        z_bytes += write_latent_code(&code)?.len() as u64;
        y_bytes += 4 * decoded_to_values(&entropy_decode(&code)?)?.len() as u64;
        baseline_bytes += lossless_baseline(&img)?.len() as u64;
        pixels += img.width as u64 * img.height as u64;
    }

    let n = parsed.rows.len() as f64;
    let (extract_rate, crc_rate) = if parsed.rows.is_empty() {
        (0.0, 0.0)
    } else {
        (
            parsed.rows.iter().filter(|r| r.extract_ok).count() as f64 / n,
            parsed.rows.iter().filter(|r| r.crc_ok).count() as f64 / n,
        )
    };
    // Fidelity at the cleanest sweep point (minimum sigma).
    let min_sigma = parsed
        .rows
        .iter()
        .map(|r| r.sigma)
        .fold(f64::INFINITY, f64::min);
    let clean: Vec<&CsvRow> = parsed
        .rows
        .iter()
        .filter(|r| r.sigma == min_sigma)
        .collect();
    let mean_of = |extract: fn(&&CsvRow) -> Option<f64>| {
        let vals: Vec<f64> = clean.iter().filter_map(extract).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    Ok(ReportRow {
        profile: cfg.profile.label(),
        scenario: cfg.scenario.name().into(),
        channel: cfg.channel.name().into(),
        c_latent: cfg.profile.c_latent(),
        c_hyper: cfg.profile.c_hyper(),
        q_step: cfg.profile.q_step(),
        bpp: 8.0 * z_bytes as f64 / pixels as f64,
        p_ratio: z_bytes as f64 / baseline_bytes as f64,
        psnr_db: mean_of(|r| r.psnr_db),
        ms_ssim: mean_of(|r| r.ms_ssim),
        y_over_z: y_bytes as f64 / z_bytes as f64,
        extract_rate,
        crc_rate,
    })
}

fn cmd_report(cli: &Cli, sweeps: &[PathBuf]) -> Result<i32, CliError> {
    let mut rows = Vec::new();
    for path in sweeps.iter().filter(|p| !p.as_os_str().is_empty()) {
        rows.push(report_row(path, cli.seed)?);
    }
    // c_latent descending, then P_ratio ascending, then label for stability.
    rows.sort_by(|a, b| {
        b.c_latent
            .cmp(&a.c_latent)
            .then(
                a.p_ratio
                    .partial_cmp(&b.p_ratio)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.profile.cmp(&b.profile))
    });

    let fmt_opt = |v: Option<f64>, prec: usize| match v {
        Some(x) => format!("{x:.prec$}"),
        None => String::new(),
    };
    let mut csv = String::from(
        "profile,scenario,channel,c_latent,c_hyper,q_step,bpp,p_ratio,psnr_db,ms_ssim,y_over_z,extract_rate,crc_rate\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:.4},{:.4},{},{},{:.3},{:.4},{:.4}",
            r.profile,
            r.scenario,
            r.channel,
            r.c_latent,
            r.c_hyper,
            r.q_step,
            r.bpp,
            r.p_ratio,
            fmt_opt(r.psnr_db, 2),
            fmt_opt(r.ms_ssim, 5),
            r.y_over_z,
            r.extract_rate,
            r.crc_rate
        );
    }

    let dir = out_dir(cli)?;
    let csv_path = dir.join("profiles.csv");
    write_atomic(&csv_path, csv.as_bytes())?;
    let mut manifest = Manifest::new("report", cli.seed).output("profiles.csv", csv.as_bytes());
    for path in sweeps.iter().filter(|p| !p.as_os_str().is_empty()) {
        manifest = manifest.input(name_of(path), &read_file(path)?);
    }
    manifest.write(&dir.join("report.manifest.json"))?;

    if !cli.quiet {
        println!(
            "{:<26} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8}",
            "profile", "bpp", "p_ratio", "psnr", "ms_ssim", "y/z", "extract", "crc"
        );
        for r in &rows {
            println!(
                "{:<26} {:>8.4} {:>8.4} {:>8} {:>9} {:>8.2} {:>8.3} {:>8.3}",
                format!("{}/{}/{}", r.profile, r.scenario, r.channel),
                r.bpp,
                r.p_ratio,
                fmt_opt(r.psnr_db, 2),
                fmt_opt(r.ms_ssim, 5),
                r.y_over_z,
                r.extract_rate,
                r.crc_rate
            );
        }
        println!("-> {}", csv_path.display());
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_spec_parsing() {
        let spec = parse_image_spec("composite:256x192:ct:7").unwrap();
        assert_eq!((spec.width, spec.height, spec.seed), (256, 192, 7));
        assert!(parse_image_spec("composite:256x192:ct").is_err());
        assert!(parse_image_spec("blob:256x192:ct:7").is_err());
        assert!(parse_image_spec("composite:256:ct:7").is_err());
        assert!(parse_image_spec("composite:ax192:ct:7").is_err());
        assert!(parse_image_spec("composite:256x192:pet:7").is_err());
    }

    #[test]
    fn sweep_toml_round_trips_defaults() {
        let cfg = sweep_config_from_toml(
            r#"
scenario = "ep"
profile = "25x20-analog"
channel = "lsb"
sigmas = [0.0, 0.001]
trials = 2
images = ["composite:176x176:ct:1"]
carrier_params = 30000
carrier_structure = "grid-rounded"
"#,
            42,
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.bits_per_param, 16);
        assert_eq!(cfg.dict_key, "opt.state");
        assert_eq!(cfg.profile.c_latent(), 25);

        // Unknown keys are rejected (typo safety).
        assert!(sweep_config_from_toml("scenario = \"ep\"\nbogus = 1", 0).is_err());
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["dexc", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["dexc", "encode"]), EXIT_USAGE); // missing --in
        assert_eq!(run(["dexc"]), EXIT_USAGE);
    }

    #[test]
    fn help_and_version_exit_0() {
        assert_eq!(run(["dexc", "--help"]), EXIT_OK);
        assert_eq!(run(["dexc", "--version"]), EXIT_OK);
        assert_eq!(run(["dexc", "encode", "--help"]), EXIT_OK);
    }

    #[test]
    fn data_errors_exit_65() {
        // Nonexistent input file.
        assert_eq!(
            run(["dexc", "encode", "--in", "/nonexistent/x.pgm"]),
            EXIT_DATA
        );
    }

    #[test]
    fn manifest_paths_fold_extensions() {
        assert_eq!(
            manifest_path_for(Path::new("/tmp/sweep.csv")),
            PathBuf::from("/tmp/sweep.manifest.json")
        );
        assert_eq!(
            manifest_path_for(Path::new("a.decz")),
            PathBuf::from("a.manifest.json")
        );
    }
}
