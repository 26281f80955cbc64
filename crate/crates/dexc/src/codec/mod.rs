//! Hyperprior block-transform image codec.
//!
//! The pipeline mirrors a learned hyperprior codec at desk scale, with every
//! stage deterministic and integer-exact where it matters:
//!
//! * analysis: min-max normalization to `[-1/2, +1/2]`, edge-replicated
//!   padding to 8x8 blocks, orthonormal DCT-II per block, zigzag scan, and
//!   uniform scalar quantization with hard clipping at the symbol bound
//!   (no escape codes; clips are counted in [`EncodeStats`]);
//! * hyperprior side channel: each block's scale — the RMS of its retained
//!   dequantized AC coefficients — is classified onto a log-spaced grid and
//!   the class indices are range-coded under a fixed uniform model;
//! * latent channel: AC symbols are range-coded under the per-class
//!   discretized Gaussian; the DC symbol is coded as a raster-order
//!   difference from the previous block's DC under a widened model whose
//!   class is the maximum of the block's own class, the previous block's
//!   class, and a drift floor (flat regions drift slowly but never for
//!   free). When the widened alphabet would exceed the 16-bit frequency
//!   total (very fine `q_step`), DC falls back to absolute coding;
//! * synthesis: inverse transform, then `decoder_stages` pairs of separable
//!   smooth/sharpen 3x3 stages whose filter taps are also expressible as
//!   checkpoint tensors (see [`synthesis_stage_tensors`]), then
//!   denormalization with clamping.

pub mod gaussian;
pub mod range;

mod dct;

use std::io::Write as _;

use crate::container::{Checkpoint, TensorEntry};
use crate::corpus::ImagePlane;
use gaussian::{SymbolModel, TOTAL_FREQ};
use range::{RangeDecoder, RangeEncoder};
use thiserror::Error;

/// Errors for the codec layer.
#[derive(Debug, Error)]
pub enum CodecError {
    /// Invalid profile parameters, or data inconsistent with its profile.
    #[error("profile error: {0}")]
    Profile(String),
    /// Symbol outside the model alphabet while encoding.
    #[error("encode error: {0}")]
    Encode(String),
    /// Truncated, trailing, or internally inconsistent code streams.
    #[error("decode error: {0}")]
    Decode(String),
    /// Malformed serialized artifacts.
    #[error("format error: {0}")]
    Format(String),
    /// Numeric-domain violations (non-finite values, ranges beyond limits).
    #[error("range error: {0}")]
    Range(String),
}

/// Default quantizer step of the `NxM-analog` named profiles.
pub const DEFAULT_Q_STEP: f32 = 0.004;
/// Quantizer step of the `near-lossless` named profile.
pub const NEAR_LOSSLESS_Q_STEP: f32 = 2.0e-4;
/// Maximum number of synthesis stages a profile may request.
pub const MAX_DECODER_STAGES: u16 = 8;
/// Serialized header size shared by the `DECZ` and `DECY` formats.
pub const CODE_HEADER_BYTES: u64 = 34;
/// Largest width/height accepted by the serialized formats.
pub const MAX_CODED_DIM: u32 = 65_535;

/// Smoothing taps of one synthesis stage.
pub const SMOOTH_FILTER: [f64; 3] = [0.25, 0.5, 0.25];
/// Sharpening taps of one synthesis stage.
pub const SHARP_FILTER: [f64; 3] = [-0.25, 1.5, -0.25];

/// Coding profile: how many zigzag coefficients ride in the latent stream,
/// how many scale classes the hyperprior distinguishes, the quantizer step
/// in the normalized domain, and how many smooth/sharpen stage pairs the
/// synthesis transform applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecProfile {
    c_latent: u16,
    c_hyper: u16,
    q_step: f32,
    decoder_stages: u16,
}

impl CodecProfile {
    pub fn new(
        c_latent: u16,
        c_hyper: u16,
        q_step: f32,
        decoder_stages: u16,
    ) -> Result<CodecProfile, CodecError> {
        if !(1..=64).contains(&c_latent) {
            return Err(CodecError::Profile(format!(
                "c_latent {c_latent} outside [1, 64]"
            )));
        }
        if !(1..=256).contains(&c_hyper) {
            return Err(CodecError::Profile(format!(
                "c_hyper {c_hyper} outside [1, 256]"
            )));
        }
        if !q_step.is_finite() || q_step <= 0.0 || q_step > 1.0 {
            return Err(CodecError::Profile(format!(
                "q_step {q_step} outside (0, 1]"
            )));
        }
        if decoder_stages > MAX_DECODER_STAGES {
            return Err(CodecError::Profile(format!(
                "decoder_stages {decoder_stages} exceeds {MAX_DECODER_STAGES}"
            )));
        }
        Ok(CodecProfile {
            c_latent,
            c_hyper,
            q_step,
            decoder_stages,
        })
    }

    /// Parse a named profile: `"NxM-analog"` (N retained coefficients, M
    /// scale classes, default `q_step`, no synthesis stages) or
    /// `"near-lossless"` (64 coefficients, 16 classes, `q_step` 2e-4).
    pub fn named(name: &str) -> Result<CodecProfile, CodecError> {
        let name = name.trim();
        if name == "near-lossless" {
            return CodecProfile::new(64, 16, NEAR_LOSSLESS_Q_STEP, 0);
        }
        let base = name
            .strip_suffix("-analog")
            .ok_or_else(|| CodecError::Profile(format!("unknown profile name {name:?}")))?;
        let (a, b) = base
            .split_once('x')
            .ok_or_else(|| CodecError::Profile(format!("profile {name:?} is not NxM-analog")))?;
        let c_latent: u16 = a
            .parse()
            .map_err(|_| CodecError::Profile(format!("bad coefficient count in {name:?}")))?;
        let c_hyper: u16 = b
            .parse()
            .map_err(|_| CodecError::Profile(format!("bad class count in {name:?}")))?;
        CodecProfile::new(c_latent, c_hyper, DEFAULT_Q_STEP, 0)
    }

    pub fn c_latent(&self) -> u16 {
        self.c_latent
    }

    pub fn c_hyper(&self) -> u16 {
        self.c_hyper
    }

    pub fn q_step(&self) -> f32 {
        self.q_step
    }

    pub fn decoder_stages(&self) -> u16 {
        self.decoder_stages
    }

    /// Same profile with a different quantizer step.
    pub fn with_q_step(self, q_step: f32) -> Result<CodecProfile, CodecError> {
        CodecProfile::new(self.c_latent, self.c_hyper, q_step, self.decoder_stages)
    }

    /// Same profile with a different synthesis stage count.
    pub fn with_decoder_stages(self, stages: u16) -> Result<CodecProfile, CodecError> {
        CodecProfile::new(self.c_latent, self.c_hyper, self.q_step, stages)
    }

    /// Hard clipping bound K for quantized coefficients: `ceil(4 / q_step)`
    /// (coefficients of a `[-1/2, 1/2]` block cannot exceed 4 in magnitude)
    /// clamped into `[1023, 32767]` so the alphabet always fits the 16-bit
    /// frequency total.
    pub fn symbol_bound(&self) -> u32 {
        let k = (4.0 / self.q_step as f64).ceil();
        (k as i64).clamp(1023, 32767) as u32
    }

    /// Whether DC is coded differentially: the widened residual alphabet
    /// `2*(2K)+1` must fit the 16-bit total, i.e. `K <= 16383`.
    fn dc_differential(&self) -> bool {
        4 * (self.symbol_bound() as u64) < TOTAL_FREQ as u64
    }

    fn dc_bound(&self) -> u32 {
        if self.dc_differential() {
            2 * self.symbol_bound()
        } else {
            self.symbol_bound()
        }
    }

    /// Log-spaced grid of `c_hyper` representative scales spanning
    /// `[q_step/16, 4]` (sub-step scales price silent blocks at the floor;
    /// 4 is the coefficient magnitude bound).
    pub fn scale_grid(&self) -> Vec<f64> {
        let n = self.c_hyper as usize;
        let lo = self.q_step as f64 / 16.0;
        let hi = 4.0;
        if n == 1 {
            return vec![(lo * hi).sqrt()];
        }
        let ratio = hi / lo;
        (0..n)
            .map(|i| lo * ratio.powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    /// Canonical label: named forms where they apply, explicit otherwise.
    pub fn label(&self) -> String {
        let near_lossless = CodecProfile {
            c_latent: 64,
            c_hyper: 16,
            q_step: NEAR_LOSSLESS_Q_STEP,
            decoder_stages: 0,
        };
        if *self == near_lossless {
            return "near-lossless".to_string();
        }
        if self.q_step == DEFAULT_Q_STEP && self.decoder_stages == 0 {
            return format!("{}x{}-analog", self.c_latent, self.c_hyper);
        }
        format!(
            "{}x{}-analog(q={},stages={})",
            self.c_latent, self.c_hyper, self.q_step, self.decoder_stages
        )
    }
}

impl std::fmt::Display for CodecProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Entropy-coded representation of one image: the hyperprior class stream
/// and the latent coefficient stream, plus the header fields needed to
/// invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub width: u32,
    pub height: u32,
    pub min_val: f32,
    pub max_val: f32,
    pub profile: CodecProfile,
    pub hyper: Vec<u8>,
    pub latent: Vec<u8>,
}

impl LatentCode {
    /// Exact serialized size: header, two length prefixes, two streams.
    pub fn code_size(&self) -> u64 {
        CODE_HEADER_BYTES + 8 + self.hyper.len() as u64 + 8 + self.latent.len() as u64
    }
}

/// Dequantized latent coefficients (`c_latent` per block, zigzag order, DC
/// first and absolute): what the synthesis transform consumes, and what the
/// value-channel exfiltration scenario ships instead of the code streams.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedLatent {
    pub width: u32,
    pub height: u32,
    pub min_val: f32,
    pub max_val: f32,
    pub profile: CodecProfile,
    pub coefficients: Vec<f32>,
}

impl DecodedLatent {
    /// Serialized size of the coefficient representation: 4 bytes per
    /// coefficient plus the common header.
    pub fn y_code_size(&self) -> u64 {
        CODE_HEADER_BYTES + 4 * self.coefficients.len() as u64
    }
}

/// Side information from one encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeStats {
    pub blocks: u64,
    pub clipped: u64,
    pub hyper_bytes: u64,
    pub latent_bytes: u64,
}

fn block_grid(width: u32, height: u32) -> (usize, usize) {
    if width == 0 || height == 0 {
        return (0, 0);
    }
    ((width as usize).div_ceil(8), (height as usize).div_ceil(8))
}

/// Log-nearest classification of `rms` onto `grid`.
fn classify(grid: &[f64], rms: f64) -> u16 {
    if !rms.is_finite() || rms <= 0.0 {
        return 0;
    }
    let target = rms.ln();
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (target - g.ln()).abs();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best as u16
}

/// Lazily built per-class symbol models (AC and widened DC variants).
struct ModelCache {
    grid: Vec<f64>,
    q_step: f64,
    ac_bound: u32,
    dc_bound: u32,
    floor_class: u16,
    differential: bool,
    ac: Vec<Option<SymbolModel>>,
    dc: Vec<Option<SymbolModel>>,
}

impl ModelCache {
    fn new(profile: &CodecProfile) -> ModelCache {
        let grid = profile.scale_grid();
        let differential = profile.dc_differential();
        // Differential DC drifts by a few steps per block even in flat
        // regions, so its class never prices below ~4 steps; absolute DC
        // spans the whole block mean and is floored at unit scale.
        let floor_scale = if differential {
            4.0 * profile.q_step as f64
        } else {
            1.0
        };
        let floor_class = classify(&grid, floor_scale);
        let n = grid.len();
        ModelCache {
            grid,
            q_step: profile.q_step as f64,
            ac_bound: profile.symbol_bound(),
            dc_bound: profile.dc_bound(),
            floor_class,
            differential,
            ac: vec![None; n],
            dc: vec![None; n],
        }
    }

    fn ac_model(&mut self, class: u16) -> &SymbolModel {
        let i = class as usize;
        if self.ac[i].is_none() {
            self.ac[i] = Some(gaussian::build_bin_model(
                self.grid[i],
                self.q_step,
                self.ac_bound,
            ));
        }
        self.ac[i].as_ref().unwrap()
    }

    fn dc_model(&mut self, class: u16) -> &SymbolModel {
        let i = class as usize;
        if self.dc[i].is_none() {
            self.dc[i] = Some(gaussian::build_bin_model(
                self.grid[i],
                self.q_step,
                self.dc_bound,
            ));
        }
        self.dc[i].as_ref().unwrap()
    }

    fn dc_class(&self, own: u16, prev: u16) -> u16 {
        own.max(prev).max(self.floor_class)
    }
}

struct BlockAnalysis {
    /// `blocks * c_latent` quantized symbols, zigzag order, DC absolute.
    symbols: Vec<i32>,
    /// Hyperprior class per block.
    classes: Vec<u16>,
    clipped: u64,
}

/// Normalize, pad to 8x8 multiples by edge replication, and return the
/// padded f64 plane with its dimensions.
fn padded_plane(img: &ImagePlane) -> (Vec<f64>, usize, usize) {
    let w = img.width as usize;
    let h = img.height as usize;
    let (bw, bh) = block_grid(img.width, img.height);
    let (pw, ph) = (bw * 8, bh * 8);
    let norm = img.normalized();
    let mut padded = vec![0.0f64; pw * ph];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            padded[y * pw + x] = norm[sy * w + sx] as f64;
        }
    }
    (padded, pw, ph)
}

fn analyze(img: &ImagePlane, profile: &CodecProfile) -> Result<BlockAnalysis, CodecError> {
    // ImagePlane::new guarantees finite values, but the fields are public;
    // stay defensive because quantization of NaN would silently map to 0.
    if img.values.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::Range("image contains non-finite pixels".into()));
    }
    let (bw, bh) = block_grid(img.width, img.height);
    if bw * bh == 0 {
        return Ok(BlockAnalysis {
            symbols: Vec::new(),
            classes: Vec::new(),
            clipped: 0,
        });
    }
    let (padded, pw, _ph) = padded_plane(img);
    let c = profile.c_latent as usize;
    let delta = profile.q_step as f64;
    let k = profile.symbol_bound() as i64;
    let grid = profile.scale_grid();

    let mut symbols = Vec::with_capacity(bw * bh * c);
    let mut classes = Vec::with_capacity(bw * bh);
    let mut clipped = 0u64;
    for by in 0..bh {
        for bx in 0..bw {
            let mut blk = [0.0f64; 64];
            for (i, row) in blk.chunks_exact_mut(8).enumerate() {
                let base = (by * 8 + i) * pw + bx * 8;
                row.copy_from_slice(&padded[base..base + 8]);
            }
            let x = dct::forward_block(&blk);
            let mut ac_energy = 0.0f64;
            for jz in 0..c {
                let mut q = (x[dct::ZIGZAG[jz]] / delta).round() as i64;
                if q > k {
                    q = k;
                    clipped += 1;
                } else if q < -k {
                    q = -k;
                    clipped += 1;
                }
                symbols.push(q as i32);
                if jz >= 1 {
                    let dq = q as f64 * delta;
                    ac_energy += dq * dq;
                }
            }
            // Block scale: RMS of the retained dequantized AC coefficients.
            // DC is excluded — it tracks regional brightness, not texture,
            // and is priced by the differential path instead.
            let rms = if c > 1 {
                (ac_energy / (c - 1) as f64).sqrt()
            } else {
                0.0
            };
            classes.push(classify(&grid, rms));
        }
    }
    Ok(BlockAnalysis {
        symbols,
        classes,
        clipped,
    })
}

/// Encode an image under `profile`.
pub fn encode_image(img: &ImagePlane, profile: &CodecProfile) -> Result<LatentCode, CodecError> {
    encode_image_with_stats(img, profile).map(|(code, _)| code)
}

/// Encode an image and report per-run statistics.
pub fn encode_image_with_stats(
    img: &ImagePlane,
    profile: &CodecProfile,
) -> Result<(LatentCode, EncodeStats), CodecError> {
    let analysis = analyze(img, profile)?;
    let n_blocks = analysis.classes.len();
    let c = profile.c_latent as usize;

    let (hyper, latent) = if n_blocks == 0 {
        (Vec::new(), Vec::new())
    } else {
        let hyper_model = SymbolModel::uniform(profile.c_hyper as u32);
        let mut henc = RangeEncoder::new();
        for &class in &analysis.classes {
            henc.encode(&hyper_model, class as i32)?;
        }
        let hyper = henc.finish();

        let mut cache = ModelCache::new(profile);
        let mut enc = RangeEncoder::new();
        let mut prev_class = cache.floor_class;
        let mut prev_dc = 0i64;
        for (b, &own) in analysis.classes.iter().enumerate() {
            let dc_class = cache.dc_class(own, prev_class);
            let dc = analysis.symbols[b * c] as i64;
            let dc_symbol = if cache.differential {
                let residual = dc - prev_dc;
                prev_dc = dc;
                residual
            } else {
                dc
            };
            enc.encode(cache.dc_model(dc_class), dc_symbol as i32)?;
            prev_class = own;
            if c > 1 {
                let model = cache.ac_model(own);
                for j in 1..c {
                    enc.encode(model, analysis.symbols[b * c + j])?;
                }
            }
        }
        (hyper, enc.finish())
    };

    let stats = EncodeStats {
        blocks: n_blocks as u64,
        clipped: analysis.clipped,
        hyper_bytes: hyper.len() as u64,
        latent_bytes: latent.len() as u64,
    };
    let code = LatentCode {
        width: img.width,
        height: img.height,
        min_val: img.min_val,
        max_val: img.max_val,
        profile: *profile,
        hyper,
        latent,
    };
    Ok((code, stats))
}

/// Invert the entropy coding stage: recover the dequantized coefficients.
/// Both streams must parse to exactly their full length.
pub fn entropy_decode(code: &LatentCode) -> Result<DecodedLatent, CodecError> {
    let profile = code.profile;
    let (bw, bh) = block_grid(code.width, code.height);
    let n_blocks = bw * bh;
    let c = profile.c_latent as usize;

    if n_blocks == 0 {
        if !code.hyper.is_empty() || !code.latent.is_empty() {
            return Err(CodecError::Decode(
                "non-empty streams for an empty image".into(),
            ));
        }
        return Ok(DecodedLatent {
            width: code.width,
            height: code.height,
            min_val: code.min_val,
            max_val: code.max_val,
            profile,
            coefficients: Vec::new(),
        });
    }

    let hyper_model = SymbolModel::uniform(profile.c_hyper as u32);
    let mut hdec = RangeDecoder::new(&code.hyper)?;
    let mut classes = Vec::new();
    for _ in 0..n_blocks {
        classes.push(hdec.decode(&hyper_model)? as u16);
    }
    if !hdec.finished() {
        return Err(CodecError::Decode("trailing bytes in hyper stream".into()));
    }

    let mut cache = ModelCache::new(&profile);
    let mut ldec = RangeDecoder::new(&code.latent)?;
    let delta = profile.q_step as f64;
    let k = profile.symbol_bound() as i64;
    let mut coefficients = Vec::new();
    let mut prev_class = cache.floor_class;
    let mut prev_dc = 0i64;
    for &own in &classes {
        let dc_class = cache.dc_class(own, prev_class);
        let symbol = ldec.decode(cache.dc_model(dc_class))? as i64;
        let dc = if cache.differential {
            prev_dc += symbol;
            prev_dc
        } else {
            symbol
        };
        if dc.abs() > k {
            return Err(CodecError::Decode(format!(
                "DC value {dc} outside symbol bound {k}"
            )));
        }
        coefficients.push((dc as f64 * delta) as f32);
        prev_class = own;
        if c > 1 {
            let model = cache.ac_model(own);
            for _ in 1..c {
                coefficients.push((ldec.decode(model)? as f64 * delta) as f32);
            }
        }
    }
    if !ldec.finished() {
        return Err(CodecError::Decode("trailing bytes in latent stream".into()));
    }

    Ok(DecodedLatent {
        width: code.width,
        height: code.height,
        min_val: code.min_val,
        max_val: code.max_val,
        profile,
        coefficients,
    })
}

/// Tensor entries carrying the synthesis stage filters, as they would ride
/// in an image-transport export: `synthesis.stage{i}.smooth.weight` and
/// `synthesis.stage{i}.sharp.weight`, shape `[3]`, for each stage.
pub fn synthesis_stage_tensors(stages: u16) -> Vec<TensorEntry> {
    let mut out = Vec::with_capacity(2 * stages as usize);
    for i in 0..stages {
        out.push(TensorEntry::new(
            format!("synthesis.stage{i}.smooth.weight"),
            vec![3],
            SMOOTH_FILTER.iter().map(|&v| v as f32).collect(),
        ));
        out.push(TensorEntry::new(
            format!("synthesis.stage{i}.sharp.weight"),
            vec![3],
            SHARP_FILTER.iter().map(|&v| v as f32).collect(),
        ));
    }
    out
}

fn stage_filter_from(ckpt: &Checkpoint, stage: u16, kind: &str) -> Result<[f64; 3], CodecError> {
    let name = format!("synthesis.stage{stage}.{kind}.weight");
    let tensor = ckpt
        .find_tensor(&name)
        .ok_or_else(|| CodecError::Profile(format!("checkpoint lacks synthesis tensor {name}")))?;
    if tensor.shape != [3] || tensor.data.len() != 3 {
        return Err(CodecError::Profile(format!(
            "synthesis tensor {name} must have shape [3]"
        )));
    }
    if tensor.data.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::Range(format!(
            "synthesis tensor {name} has non-finite taps"
        )));
    }
    Ok([
        tensor.data[0] as f64,
        tensor.data[1] as f64,
        tensor.data[2] as f64,
    ])
}

/// Apply a separable 3-tap filter (horizontal then vertical) with
/// clamp-to-edge boundary handling.
fn apply_separable(plane: &mut [f64], w: usize, h: usize, taps: &[f64; 3]) {
    let mut tmp = vec![0.0f64; plane.len()];
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            tmp[row + x] =
                taps[0] * plane[row + xm] + taps[1] * plane[row + x] + taps[2] * plane[row + xp];
        }
    }
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            plane[y * w + x] =
                taps[0] * tmp[ym * w + x] + taps[1] * tmp[y * w + x] + taps[2] * tmp[yp * w + x];
        }
    }
}

fn synthesize_core(
    dec: &DecodedLatent,
    filters: &[([f64; 3], [f64; 3])],
) -> Result<ImagePlane, CodecError> {
    let (bw, bh) = block_grid(dec.width, dec.height);
    let n_blocks = bw * bh;
    let c = dec.profile.c_latent as usize;

    if !dec.min_val.is_finite() || !dec.max_val.is_finite() || dec.min_val > dec.max_val {
        return Err(CodecError::Profile(format!(
            "bad value bounds [{}, {}]",
            dec.min_val, dec.max_val
        )));
    }
    if n_blocks == 0 {
        if !dec.coefficients.is_empty() {
            return Err(CodecError::Profile(
                "coefficients present for an empty image".into(),
            ));
        }
        return ImagePlane::new(dec.width, dec.height, Vec::new(), dec.min_val, dec.max_val)
            .map_err(|e| CodecError::Profile(e.to_string()));
    }
    if dec.coefficients.len() != n_blocks * c {
        return Err(CodecError::Profile(format!(
            "coefficient count {} does not match {} blocks x {} per block",
            dec.coefficients.len(),
            n_blocks,
            c
        )));
    }
    if dec.coefficients.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::Range("non-finite latent coefficients".into()));
    }

    let (pw, ph) = (bw * 8, bh * 8);
    let mut plane = vec![0.0f64; pw * ph];
    for by in 0..bh {
        for bx in 0..bw {
            let mut block = [0.0f64; 64];
            let base = (by * bw + bx) * c;
            for (jz, &coeff) in dec.coefficients[base..base + c].iter().enumerate() {
                block[dct::ZIGZAG[jz]] = coeff as f64;
            }
            let pixels = dct::inverse_block(&block);
            for (i, row) in pixels.chunks_exact(8).enumerate() {
                let dst = (by * 8 + i) * pw + bx * 8;
                plane[dst..dst + 8].copy_from_slice(row);
            }
        }
    }

    for (smooth, sharp) in filters {
        apply_separable(&mut plane, pw, ph, smooth);
        apply_separable(&mut plane, pw, ph, sharp);
    }

    let w = dec.width as usize;
    let h = dec.height as usize;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(plane[y * pw + x] as f32);
        }
    }
    ImagePlane::from_normalized(dec.width, dec.height, &values, dec.min_val, dec.max_val)
        .map_err(|e| CodecError::Profile(e.to_string()))
}

/// Synthesis transform with the built-in stage filters.
pub fn synthesize(dec: &DecodedLatent) -> Result<ImagePlane, CodecError> {
    let filters = vec![(SMOOTH_FILTER, SHARP_FILTER); dec.profile.decoder_stages as usize];
    synthesize_core(dec, &filters)
}

/// Synthesis transform reading its stage filters from checkpoint tensors
/// (the image-transport scenario: reconstruction is only possible where the
/// synthesis tensors actually shipped).
pub fn synthesize_with(dec: &DecodedLatent, ckpt: &Checkpoint) -> Result<ImagePlane, CodecError> {
    let mut filters = Vec::with_capacity(dec.profile.decoder_stages as usize);
    for stage in 0..dec.profile.decoder_stages {
        filters.push((
            stage_filter_from(ckpt, stage, "smooth")?,
            stage_filter_from(ckpt, stage, "sharp")?,
        ));
    }
    synthesize_core(dec, &filters)
}

/// Full decode: entropy decoding followed by built-in synthesis.
pub fn decode_image(code: &LatentCode) -> Result<ImagePlane, CodecError> {
    synthesize(&entropy_decode(code)?)
}

/// Lossless reference: RFC 1951 DEFLATE (best setting) of the raw image
/// samples as 16-bit big-endian offsets from `min_val`.
pub fn lossless_baseline(img: &ImagePlane) -> Result<Vec<u8>, CodecError> {
    if img.range() as f64 > 65_535.0 {
        return Err(CodecError::Range(format!(
            "dynamic range {} exceeds 16-bit sample storage",
            img.range()
        )));
    }
    let min = img.min_val as f64;
    let mut raw = Vec::with_capacity(img.values.len() * 2);
    for &v in &img.values {
        let q = ((v as f64 - min).round().clamp(0.0, 65_535.0)) as u16;
        raw.extend_from_slice(&q.to_be_bytes());
    }
    let mut enc = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::best());
    enc.write_all(&raw)
        .map_err(|e| CodecError::Format(format!("deflate: {e}")))?;
    enc.finish()
        .map_err(|e| CodecError::Format(format!("deflate: {e}")))
}

// ---------------------------------------------------------------------------
// Serialization: DECZ (entropy-coded) and DECY (raw coefficients).
// ---------------------------------------------------------------------------

pub(crate) const DECZ_MAGIC: &[u8; 4] = b"DECZ";
pub(crate) const DECY_MAGIC: &[u8; 4] = b"DECY";
const FORMAT_VERSION: u16 = 1;

fn push_header(
    out: &mut Vec<u8>,
    magic: &[u8; 4],
    width: u32,
    height: u32,
    min_val: f32,
    max_val: f32,
    profile: &CodecProfile,
) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&min_val.to_le_bytes());
    out.extend_from_slice(&max_val.to_le_bytes());
    out.extend_from_slice(&profile.c_latent.to_le_bytes());
    out.extend_from_slice(&profile.c_hyper.to_le_bytes());
    out.extend_from_slice(&profile.decoder_stages.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // reserved
    out.extend_from_slice(&profile.q_step.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], pos: usize) -> Reader<'a> {
        Reader { buf, pos }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CodecError::Format("truncated input".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

struct ParsedHeader {
    width: u32,
    height: u32,
    min_val: f32,
    max_val: f32,
    profile: CodecProfile,
}

fn read_header(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<ParsedHeader, CodecError> {
    let got = r.take(4)?;
    if got != magic {
        return Err(CodecError::Format(format!(
            "bad magic {:02x?}, expected {:?}",
            got,
            std::str::from_utf8(magic).unwrap()
        )));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::Format(format!("unsupported version {version}")));
    }
    let width = r.u32()?;
    let height = r.u32()?;
    if width > MAX_CODED_DIM || height > MAX_CODED_DIM {
        return Err(CodecError::Format(format!(
            "dimensions {width}x{height} exceed limit"
        )));
    }
    if (width == 0) != (height == 0) {
        return Err(CodecError::Format(format!(
            "degenerate dimensions {width}x{height}"
        )));
    }
    let min_val = r.f32()?;
    let max_val = r.f32()?;
    if !min_val.is_finite() || !max_val.is_finite() || min_val > max_val {
        return Err(CodecError::Format(format!(
            "bad value bounds [{min_val}, {max_val}]"
        )));
    }
    let c_latent = r.u16()?;
    let c_hyper = r.u16()?;
    let decoder_stages = r.u16()?;
    let _reserved = r.u16()?;
    let q_step = r.f32()?;
    let profile = CodecProfile::new(c_latent, c_hyper, q_step, decoder_stages)
        .map_err(|e| CodecError::Format(e.to_string()))?;
    Ok(ParsedHeader {
        width,
        height,
        min_val,
        max_val,
        profile,
    })
}

/// Serialize a latent code to the `DECZ` byte format.
pub fn write_latent_code(code: &LatentCode) -> Result<Vec<u8>, CodecError> {
    if code.width > MAX_CODED_DIM || code.height > MAX_CODED_DIM {
        return Err(CodecError::Format(format!(
            "dimensions {}x{} exceed serialization limit",
            code.width, code.height
        )));
    }
    let mut out = Vec::with_capacity(code.code_size() as usize);
    push_header(
        &mut out,
        DECZ_MAGIC,
        code.width,
        code.height,
        code.min_val,
        code.max_val,
        &code.profile,
    );
    out.extend_from_slice(&(code.hyper.len() as u64).to_le_bytes());
    out.extend_from_slice(&code.hyper);
    out.extend_from_slice(&(code.latent.len() as u64).to_le_bytes());
    out.extend_from_slice(&code.latent);
    debug_assert_eq!(out.len() as u64, code.code_size());
    Ok(out)
}

/// Parse one `DECZ` record starting at `*pos`, advancing `*pos` past it.
pub(crate) fn read_latent_code_at(bytes: &[u8], pos: &mut usize) -> Result<LatentCode, CodecError> {
    let mut r = Reader::new(bytes, *pos);
    let h = read_header(&mut r, DECZ_MAGIC)?;
    let hyper_len = r.u64()?;
    if hyper_len > (bytes.len() - r.pos) as u64 {
        return Err(CodecError::Format(
            "hyper stream length exceeds buffer".into(),
        ));
    }
    let hyper = r.take(hyper_len as usize)?.to_vec();
    let latent_len = r.u64()?;
    if latent_len > (bytes.len() - r.pos) as u64 {
        return Err(CodecError::Format(
            "latent stream length exceeds buffer".into(),
        ));
    }
    let latent = r.take(latent_len as usize)?.to_vec();
    *pos = r.pos;
    Ok(LatentCode {
        width: h.width,
        height: h.height,
        min_val: h.min_val,
        max_val: h.max_val,
        profile: h.profile,
        hyper,
        latent,
    })
}

/// Parse one `DECZ` record from the front of `bytes`, returning the code and
/// the number of bytes it occupied. Useful for payloads that concatenate
/// several codes back to back.
pub fn read_latent_code_prefix(bytes: &[u8]) -> Result<(LatentCode, usize), CodecError> {
    let mut pos = 0usize;
    let code = read_latent_code_at(bytes, &mut pos)?;
    Ok((code, pos))
}

/// Parse a `DECZ` byte stream; the input must contain exactly one record.
pub fn read_latent_code(bytes: &[u8]) -> Result<LatentCode, CodecError> {
    let mut pos = 0usize;
    let code = read_latent_code_at(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(CodecError::Format(format!(
            "{} trailing bytes",
            bytes.len() - pos
        )));
    }
    Ok(code)
}

/// Serialize decoded coefficients to the `DECY` byte format.
pub fn write_decoded(dec: &DecodedLatent) -> Result<Vec<u8>, CodecError> {
    if dec.width > MAX_CODED_DIM || dec.height > MAX_CODED_DIM {
        return Err(CodecError::Format(format!(
            "dimensions {}x{} exceed serialization limit",
            dec.width, dec.height
        )));
    }
    let (bw, bh) = block_grid(dec.width, dec.height);
    let expected = bw * bh * dec.profile.c_latent as usize;
    if dec.coefficients.len() != expected {
        return Err(CodecError::Format(format!(
            "coefficient count {} does not match dimensions (expected {expected})",
            dec.coefficients.len()
        )));
    }
    let mut out = Vec::with_capacity(dec.y_code_size() as usize);
    push_header(
        &mut out,
        DECY_MAGIC,
        dec.width,
        dec.height,
        dec.min_val,
        dec.max_val,
        &dec.profile,
    );
    for &cf in &dec.coefficients {
        out.extend_from_slice(&cf.to_le_bytes());
    }
    debug_assert_eq!(out.len() as u64, dec.y_code_size());
    Ok(out)
}

/// Parse a `DECY` byte stream (exactly one record).
pub fn read_decoded(bytes: &[u8]) -> Result<DecodedLatent, CodecError> {
    let mut r = Reader::new(bytes, 0);
    let h = read_header(&mut r, DECY_MAGIC)?;
    let (bw, bh) = block_grid(h.width, h.height);
    let expected = bw * bh * h.profile.c_latent as usize;
    let remaining = bytes.len() - r.pos;
    if remaining != expected * 4 {
        return Err(CodecError::Format(format!(
            "coefficient payload {} bytes, expected {}",
            remaining,
            expected * 4
        )));
    }
    let mut coefficients = Vec::with_capacity(expected);
    for _ in 0..expected {
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(CodecError::Format("non-finite coefficient".into()));
        }
        coefficients.push(v);
    }
    Ok(DecodedLatent {
        width: h.width,
        height: h.height,
        min_val: h.min_val,
        max_val: h.max_val,
        profile: h.profile,
        coefficients,
    })
}

// ---------------------------------------------------------------------------
// Value-channel representation: coefficients and metadata as plain floats.
// ---------------------------------------------------------------------------

/// Flatten decoded coefficients into a float stream for the value channel:
/// `[count, width, height, min, max, c_latent, c_hyper, stages, q_step]`
/// followed by the coefficients. All integer metadata is exactly
/// representable (counts are capped at 2^24).
pub fn decoded_to_values(dec: &DecodedLatent) -> Result<Vec<f32>, CodecError> {
    if dec.coefficients.len() as u64 > 1 << 24 {
        return Err(CodecError::Range(
            "coefficient count exceeds exact f32 range".into(),
        ));
    }
    let mut out = Vec::with_capacity(9 + dec.coefficients.len());
    out.push(dec.coefficients.len() as f32);
    out.push(dec.width as f32);
    out.push(dec.height as f32);
    out.push(dec.min_val);
    out.push(dec.max_val);
    out.push(dec.profile.c_latent as f32);
    out.push(dec.profile.c_hyper as f32);
    out.push(dec.profile.decoder_stages as f32);
    out.push(dec.profile.q_step);
    out.extend_from_slice(&dec.coefficients);
    Ok(out)
}

fn round_meta(v: f32, what: &str) -> Result<i64, CodecError> {
    if !v.is_finite() {
        return Err(CodecError::Format(format!("non-finite {what} metadata")));
    }
    Ok(v.round() as i64)
}

/// Parse one value-channel record starting at `*pos`, advancing past it.
///
/// Integer metadata is rounded to the nearest integer (the representation
/// must survive small additive perturbations); structure is still strict:
/// counts must match the dimensions exactly.
pub(crate) fn parse_values_at(
    values: &[f32],
    pos: &mut usize,
) -> Result<DecodedLatent, CodecError> {
    let rest = &values[(*pos).min(values.len())..];
    if rest.len() < 9 {
        return Err(CodecError::Format(format!(
            "value stream too short: {} floats",
            rest.len()
        )));
    }
    let count = round_meta(rest[0], "count")?;
    let width = round_meta(rest[1], "width")?;
    let height = round_meta(rest[2], "height")?;
    let min_val = rest[3];
    let max_val = rest[4];
    let c_latent = round_meta(rest[5], "c_latent")?;
    let c_hyper = round_meta(rest[6], "c_hyper")?;
    let stages = round_meta(rest[7], "decoder_stages")?;
    let q_raw = rest[8];

    if !(0..=MAX_CODED_DIM as i64).contains(&width) || !(0..=MAX_CODED_DIM as i64).contains(&height)
    {
        return Err(CodecError::Format(format!(
            "bad dimensions {width}x{height}"
        )));
    }
    if (width == 0) != (height == 0) {
        return Err(CodecError::Format(format!(
            "degenerate dimensions {width}x{height}"
        )));
    }
    if !(1..=64).contains(&c_latent) || !(1..=256).contains(&c_hyper) {
        return Err(CodecError::Format(format!(
            "bad profile {c_latent}x{c_hyper}"
        )));
    }
    if !(0..=MAX_DECODER_STAGES as i64).contains(&stages) {
        return Err(CodecError::Format(format!("bad stage count {stages}")));
    }
    if !min_val.is_finite() || !max_val.is_finite() || min_val > max_val {
        return Err(CodecError::Format(format!(
            "bad value bounds [{min_val}, {max_val}]"
        )));
    }
    if !q_raw.is_finite() {
        return Err(CodecError::Format("non-finite q_step metadata".into()));
    }
    // q_step is not used by synthesis (coefficients arrive dequantized), so
    // perturbations only need clamping into the structurally valid range.
    let q_step = q_raw.abs().clamp(1e-9, 1.0);

    let (bw, bh) = block_grid(width as u32, height as u32);
    let expected = (bw * bh) as i64 * c_latent;
    if count != expected {
        return Err(CodecError::Format(format!(
            "coefficient count {count} does not match dimensions (expected {expected})"
        )));
    }
    if rest.len() < 9 + expected as usize {
        return Err(CodecError::Format(
            "value stream shorter than its count".into(),
        ));
    }
    let coefficients = rest[9..9 + expected as usize].to_vec();
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::Format("non-finite coefficient".into()));
    }
    let profile = CodecProfile::new(c_latent as u16, c_hyper as u16, q_step, stages as u16)
        .map_err(|e| CodecError::Format(e.to_string()))?;
    *pos += 9 + expected as usize;
    Ok(DecodedLatent {
        width: width as u32,
        height: height as u32,
        min_val,
        max_val,
        profile,
        coefficients,
    })
}

/// Parse a value-channel float stream (exactly one record).
pub fn values_to_decoded(values: &[f32]) -> Result<DecodedLatent, CodecError> {
    let mut pos = 0usize;
    let dec = parse_values_at(values, &mut pos)?;
    if pos != values.len() {
        return Err(CodecError::Format(format!(
            "{} trailing floats",
            values.len() - pos
        )));
    }
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_phantom, DynamicRange, PhantomKind, PhantomSpec};
    use crate::metrics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn composite(width: u32, height: u32, seed: u64, ct: bool) -> ImagePlane {
        let range = if ct {
            DynamicRange::CtLike
        } else {
            DynamicRange::MrLike
        };
        gen_phantom(&PhantomSpec::new(
            PhantomKind::Composite,
            width,
            height,
            seed,
            range,
        ))
        .unwrap()
    }

    #[test]
    fn named_profiles_parse() {
        let p = CodecProfile::named("50x80-analog").unwrap();
        assert_eq!((p.c_latent(), p.c_hyper()), (50, 80));
        assert_eq!(p.q_step(), DEFAULT_Q_STEP);
        assert_eq!(p.decoder_stages(), 0);
        assert_eq!(p.label(), "50x80-analog");

        let nl = CodecProfile::named("near-lossless").unwrap();
        assert_eq!((nl.c_latent(), nl.c_hyper()), (64, 16));
        assert_eq!(nl.q_step(), NEAR_LOSSLESS_Q_STEP);
        assert_eq!(nl.label(), "near-lossless");

        for bad in [
            "100x80-analog",
            "0x5-analog",
            "8x300-analog",
            "foo",
            "8x8",
            "x-analog",
        ] {
            assert!(CodecProfile::named(bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn profile_validation() {
        assert!(CodecProfile::new(64, 80, 0.0, 0).is_err());
        assert!(CodecProfile::new(64, 80, -0.1, 0).is_err());
        assert!(CodecProfile::new(64, 80, f32::NAN, 0).is_err());
        assert!(CodecProfile::new(64, 80, 2.0, 0).is_err());
        assert!(CodecProfile::new(64, 80, 0.004, 9).is_err());
        assert!(CodecProfile::new(64, 80, 0.004, 8).is_ok());
    }

    #[test]
    fn symbol_bound_and_scale_grid() {
        let p = CodecProfile::new(50, 80, 0.004, 0).unwrap();
        assert_eq!(p.symbol_bound(), 1023); // ceil(4/0.004) = 1000, floored at 1023
        assert!(p.dc_differential());

        // ceil(4 / q) with q the f32 nearest to 2e-4 (slightly below it).
        let nl = CodecProfile::named("near-lossless").unwrap();
        assert_eq!(nl.symbol_bound(), 20001);
        assert!(!nl.dc_differential()); // 2*(2*20001)+1 > 65536

        let grid = p.scale_grid();
        assert_eq!(grid.len(), 80);
        assert!((grid[0] - p.q_step() as f64 / 16.0).abs() < 1e-12);
        assert!((grid[79] - 4.0).abs() < 1e-9);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));

        let single = CodecProfile::new(8, 1, 0.004, 0).unwrap();
        let g1 = single.scale_grid();
        assert_eq!(g1.len(), 1);
        let lo = single.q_step() as f64 / 16.0;
        assert!((g1[0] - (lo * 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_image_codes_under_300_bytes() {
        let img = ImagePlane::new(256, 256, vec![700.0; 256 * 256], 700.0, 700.0).unwrap();
        let profile = CodecProfile::new(8, 2, DEFAULT_Q_STEP, 0).unwrap();
        let (code, stats) = encode_image_with_stats(&img, &profile).unwrap();
        assert_eq!(stats.blocks, 1024);
        assert_eq!(stats.clipped, 0);
        let dec = entropy_decode(&code).unwrap();
        assert!(
            dec.coefficients.iter().all(|&c| c == 0.0),
            "constant image has all-zero latent"
        );
        assert!(
            code.code_size() < 300,
            "constant image took {} bytes",
            code.code_size()
        );
        let back = synthesize(&dec).unwrap();
        assert!(back.values.iter().all(|&v| v == 700.0));
    }

    #[test]
    fn empty_image_roundtrips() {
        let img = ImagePlane::new(0, 0, Vec::new(), 0.0, 1.0).unwrap();
        let profile = CodecProfile::named("50x80-analog").unwrap();
        let (code, stats) = encode_image_with_stats(&img, &profile).unwrap();
        assert_eq!(stats.blocks, 0);
        assert!(code.hyper.is_empty() && code.latent.is_empty());
        assert_eq!(code.code_size(), 50);
        let dec = entropy_decode(&code).unwrap();
        assert!(dec.coefficients.is_empty());
        let back = synthesize(&dec).unwrap();
        assert_eq!((back.width, back.height), (0, 0));
        let bytes = write_latent_code(&code).unwrap();
        assert_eq!(read_latent_code(&bytes).unwrap(), code);
    }

    #[test]
    fn entropy_roundtrip_is_symbol_exact() {
        for (profile, img) in [
            (
                CodecProfile::named("50x80-analog").unwrap(),
                composite(192, 192, 3, true),
            ),
            (
                CodecProfile::named("near-lossless").unwrap(),
                composite(184, 176, 4, false),
            ),
            (
                CodecProfile::new(8, 16, 2e-4, 0).unwrap(),
                composite(176, 176, 5, true),
            ),
            (
                CodecProfile::new(1, 1, 0.004, 0).unwrap(),
                composite(176, 176, 6, false),
            ),
        ] {
            let analysis = analyze(&img, &profile).unwrap();
            let code = encode_image(&img, &profile).unwrap();
            let dec = entropy_decode(&code).unwrap();
            assert_eq!(dec.coefficients.len(), analysis.symbols.len());
            for (i, (&sym, &coeff)) in analysis.symbols.iter().zip(&dec.coefficients).enumerate() {
                let expect = (sym as f64 * profile.q_step() as f64) as f32;
                assert_eq!(coeff, expect, "coefficient {i} mismatch ({profile})");
            }
        }
    }

    #[test]
    fn near_lossless_hits_80_db() {
        let img = composite(256, 256, 7, true);
        let profile = CodecProfile::named("near-lossless").unwrap();
        let (code, stats) = encode_image_with_stats(&img, &profile).unwrap();
        assert_eq!(stats.clipped, 0);
        let back = decode_image(&code).unwrap();
        let psnr = metrics::psnr(&img, &back).unwrap();
        assert!(psnr >= 80.0, "near-lossless reached only {psnr:.2} dB");
    }

    #[test]
    fn fewer_coefficients_strictly_costs_quality_and_saves_bits() {
        // A noise phantom has quantization-surviving energy in every
        // coefficient, so each dropped coefficient strictly hurts; smooth
        // phantoms tie at the top of the ladder (tail ACs quantize to 0).
        let img = gen_phantom(&PhantomSpec::new(
            PhantomKind::Noise,
            192,
            192,
            8,
            DynamicRange::MrLike,
        ))
        .unwrap();
        let mut sizes = Vec::new();
        let mut psnrs = Vec::new();
        for c in [64u16, 50, 25, 8] {
            let profile = CodecProfile::new(c, 80, DEFAULT_Q_STEP, 0).unwrap();
            let code = encode_image(&img, &profile).unwrap();
            sizes.push(code.code_size());
            psnrs.push(metrics::psnr(&img, &decode_image(&code).unwrap()).unwrap());
        }
        assert!(
            sizes.windows(2).all(|w| w[0] > w[1]),
            "sizes not strictly decreasing: {sizes:?}"
        );
        assert!(
            psnrs.windows(2).all(|w| w[0] > w[1]),
            "psnr not strictly decreasing: {psnrs:?}"
        );
    }

    #[test]
    fn coarser_quantizer_never_costs_more_bits() {
        let img = composite(192, 192, 9, true);
        let mut sizes = Vec::new();
        for q in [0.002f32, 0.004, 0.008, 0.016] {
            let profile = CodecProfile::new(50, 80, q, 0).unwrap();
            sizes.push(encode_image(&img, &profile).unwrap().code_size());
        }
        assert!(
            sizes.windows(2).all(|w| w[0] >= w[1]),
            "sizes increased with q_step: {sizes:?}"
        );
    }

    #[test]
    fn flipped_bits_do_not_pass_silently() {
        // Deterministic non-trivial 64x64 plane.
        let values: Vec<f32> = (0..64 * 64)
            .map(|i| ((i * 7 + (i / 64) * 13) % 97) as f32)
            .collect();
        let img = ImagePlane::new(64, 64, values, 0.0, 96.0).unwrap();
        let profile = CodecProfile::named("50x80-analog").unwrap();
        let code = encode_image(&img, &profile).unwrap();
        let clean = entropy_decode(&code).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 1000;
        let mut detected = 0;
        for _ in 0..trials {
            let mut corrupt = code.clone();
            let bit = rng.gen_range(0..corrupt.latent.len() * 8);
            corrupt.latent[bit / 8] ^= 1 << (bit % 8);
            match entropy_decode(&corrupt) {
                Err(_) => detected += 1,
                Ok(dec) => {
                    if dec.coefficients != clean.coefficients {
                        detected += 1;
                    }
                }
            }
        }
        assert!(
            detected >= 990,
            "only {detected}/{trials} corruptions surfaced"
        );
    }

    #[test]
    fn white_noise_codes_near_its_empirical_entropy() {
        let img = gen_phantom(&PhantomSpec::new(
            PhantomKind::Noise,
            176,
            176,
            12,
            DynamicRange::MrLike,
        ))
        .unwrap();
        let profile = CodecProfile::new(64, 80, 0.002, 0).unwrap();
        let analysis = analyze(&img, &profile).unwrap();
        let mut hist = std::collections::HashMap::new();
        for &s in &analysis.symbols {
            *hist.entry(s).or_insert(0u64) += 1;
        }
        let n = analysis.symbols.len() as f64;
        let entropy_bits: f64 = hist
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -(p.log2()) * c as f64
            })
            .sum();
        let bound_bytes = entropy_bits / 8.0;
        let code = encode_image(&img, &profile).unwrap();
        let actual = code.code_size() as f64;
        let rel = (actual - bound_bytes).abs() / bound_bytes;
        assert!(
            rel <= 0.15,
            "code {actual:.0} B vs empirical Shannon bound {bound_bytes:.0} B ({:.1}% off)",
            rel * 100.0
        );
    }

    #[test]
    fn coefficient_perturbation_obeys_parseval() {
        // Build a mid-range image (no values near the clamp bounds) by
        // widening the recorded range around an ellipse phantom.
        let base = gen_phantom(&PhantomSpec::new(
            PhantomKind::Ellipses,
            192,
            192,
            13,
            DynamicRange::MrLike,
        ))
        .unwrap();
        let img = ImagePlane::new(192, 192, base.values.clone(), -500.0, 4595.0).unwrap();
        let profile = CodecProfile::new(64, 80, DEFAULT_Q_STEP, 0).unwrap();
        let clean = entropy_decode(&encode_image(&img, &profile).unwrap()).unwrap();

        let sigma_y = 0.003f64;
        let normal = Normal::new(0.0, sigma_y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut perturbed = clean.clone();
        for c in perturbed.coefficients.iter_mut() {
            *c = (*c as f64 + normal.sample(&mut rng)) as f32;
        }

        let a = synthesize(&clean).unwrap();
        let b = synthesize(&perturbed).unwrap();
        let psnr = metrics::psnr(&a, &b).unwrap();
        // All 64 coefficients per block are perturbed, so the image-domain
        // MSE equals sigma_y^2 in the normalized domain (orthonormal
        // synthesis preserves energy): PSNR = -20 log10(sigma_y).
        let predicted = -20.0 * sigma_y.log10();
        assert!(
            (psnr - predicted).abs() <= 1.0,
            "measured {psnr:.2} dB vs Parseval prediction {predicted:.2} dB"
        );
    }

    #[test]
    fn clipping_is_counted_not_hidden() {
        let img = gen_phantom(&PhantomSpec::new(
            PhantomKind::Noise,
            176,
            176,
            15,
            DynamicRange::CtLike,
        ))
        .unwrap();
        // q_step far below the clamp threshold: K saturates at 32767 while
        // coefficients reach ~4/1e-5 = 4e5 steps.
        let profile = CodecProfile::new(8, 4, 1e-5, 0).unwrap();
        assert_eq!(profile.symbol_bound(), 32767);
        let (code, stats) = encode_image_with_stats(&img, &profile).unwrap();
        assert!(stats.clipped > 0, "expected clipping at extreme q_step");
        // Clipped streams still roundtrip (hard clipping, no escape codes).
        let dec = entropy_decode(&code).unwrap();
        assert_eq!(dec.coefficients.len(), (22 * 22) * 8);
    }

    #[test]
    fn serialization_roundtrips_and_rejects_damage() {
        let img = composite(176, 184, 16, true);
        let profile = CodecProfile::named("25x40-analog").unwrap();
        let code = encode_image(&img, &profile).unwrap();
        let bytes = write_latent_code(&code).unwrap();
        assert_eq!(bytes.len() as u64, code.code_size());
        assert_eq!(read_latent_code(&bytes).unwrap(), code);

        let dec = entropy_decode(&code).unwrap();
        let ybytes = write_decoded(&dec).unwrap();
        assert_eq!(ybytes.len() as u64, dec.y_code_size());
        assert_eq!(read_decoded(&ybytes).unwrap(), dec);

        // Truncations at every prefix boundary fail loudly.
        for cut in [0usize, 3, 4, 10, 33, 34, 41, bytes.len() - 1] {
            assert!(read_latent_code(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(read_latent_code(&trailing).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(read_latent_code(&bad_magic).is_err());

        // Arbitrary garbage never panics.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let len = rng.gen_range(0..200);
            let buf: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let _ = read_latent_code(&buf);
            let _ = read_decoded(&buf);
        }
    }

    #[test]
    fn value_stream_roundtrips_bit_exactly() {
        let img = composite(176, 176, 18, false);
        let profile = CodecProfile::new(50, 80, DEFAULT_Q_STEP, 2).unwrap();
        let dec = entropy_decode(&encode_image(&img, &profile).unwrap()).unwrap();
        let values = decoded_to_values(&dec).unwrap();
        assert_eq!(values.len(), 9 + dec.coefficients.len());
        let back = values_to_decoded(&values).unwrap();
        assert_eq!(back, dec);

        // Structural damage is rejected.
        assert!(values_to_decoded(&values[..8]).is_err());
        assert!(values_to_decoded(&values[..values.len() - 1]).is_err());
        let mut wrong_count = values.clone();
        wrong_count[0] += 1.0;
        assert!(values_to_decoded(&wrong_count).is_err());
        let mut bad_dim = values.clone();
        bad_dim[1] = -5.0;
        assert!(values_to_decoded(&bad_dim).is_err());

        // Small additive perturbations of the metadata survive rounding.
        let mut noisy = values.clone();
        for v in noisy.iter_mut().take(9) {
            *v += 0.01;
        }
        let recovered = values_to_decoded(&noisy).unwrap();
        assert_eq!(recovered.width, dec.width);
        assert_eq!(recovered.profile.c_latent(), dec.profile.c_latent());
    }

    #[test]
    fn synthesis_stages_ride_as_tensors() {
        let tensors = synthesis_stage_tensors(2);
        assert_eq!(tensors.len(), 4);
        assert_eq!(tensors[0].name, "synthesis.stage0.smooth.weight");
        assert_eq!(tensors[3].name, "synthesis.stage1.sharp.weight");
        assert!(tensors
            .iter()
            .all(|t| t.shape == [3] && t.serialized_bytes() > 0));

        let img = composite(176, 176, 19, true);
        let profile = CodecProfile::new(25, 40, DEFAULT_Q_STEP, 2).unwrap();
        let dec = entropy_decode(&encode_image(&img, &profile).unwrap()).unwrap();
        let builtin = synthesize(&dec).unwrap();

        let ckpt = Checkpoint::new(synthesis_stage_tensors(2), Vec::new());
        let from_ckpt = synthesize_with(&dec, &ckpt).unwrap();
        assert_eq!(builtin.values, from_ckpt.values);

        // An export without the stage tensors cannot reconstruct.
        let bare = Checkpoint::new(Vec::new(), Vec::new());
        assert!(matches!(
            synthesize_with(&dec, &bare),
            Err(CodecError::Profile(_))
        ));

        // Stages visibly change the output (the pair is not a no-op).
        let stage0 = DecodedLatent {
            profile: profile.with_decoder_stages(0).unwrap(),
            ..dec
        };
        let plain = synthesize(&stage0).unwrap();
        assert_ne!(plain.values, builtin.values);
    }

    #[test]
    fn lossless_baseline_compresses_structure_not_noise() {
        let flat = ImagePlane::new(200, 200, vec![40.0; 40_000], 0.0, 255.0).unwrap();
        let base = lossless_baseline(&flat).unwrap();
        assert!(
            base.len() < 2000,
            "constant image deflated to {} bytes",
            base.len()
        );

        let noise = gen_phantom(&PhantomSpec::new(
            PhantomKind::Noise,
            176,
            176,
            20,
            DynamicRange::MrLike,
        ))
        .unwrap();
        let nbytes = lossless_baseline(&noise).unwrap();
        let raw = 176 * 176 * 2;
        assert!(
            nbytes.len() as f64 > 0.8 * raw as f64,
            "noise should not deflate"
        );

        let wide = ImagePlane::new(8, 8, vec![0.0; 64], 0.0, 100_000.0).unwrap();
        assert!(matches!(
            lossless_baseline(&wide),
            Err(CodecError::Range(_))
        ));
    }

    #[test]
    fn non_finite_pixels_are_a_range_error() {
        let mut img = ImagePlane::new(8, 8, vec![1.0; 64], 0.0, 2.0).unwrap();
        img.values[5] = f32::NAN; // bypasses the constructor on purpose
        let profile = CodecProfile::named("8x8-analog").unwrap();
        assert!(matches!(
            encode_image(&img, &profile),
            Err(CodecError::Range(_))
        ));
    }
}
