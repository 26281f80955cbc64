//! Deterministic test corpus: phantom images, PGM I/O, and clean carrier
//! checkpoints.
//!
//! Phantoms are synthetic single-plane images with medical-like dynamic
//! ranges (a CT-like signed 12-bit range, an MR-like unsigned range with a
//! large zero background). Generation is fully deterministic: a fixed seed
//! produces bit-identical planes, and the arithmetic avoids platform-varying
//! math functions (rotations come from normalized random vectors — divisions
//! and square roots only, which IEEE 754 rounds exactly).
//!
//! PGM files are binary `P5`, 16-bit big-endian samples above maxval 255.
//! Because sample values are unsigned while image intensities may be
//! negative, the writer offsets samples by `min_val` and records the offset
//! in a `# off <min>` comment that the reader honors; integer-valued planes
//! round-trip exactly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::container::{Checkpoint, TensorEntry};

#[derive(Debug, Error)]
pub enum CorpusError {
    /// Invalid generation spec (dimensions, ranges, counts).
    #[error("spec error: {0}")]
    Spec(String),
    /// Malformed PGM input or an image not representable as PGM.
    #[error("format error: {0}")]
    Format(String),
}

/// A single-channel image: row-major f32 intensities plus the recorded
/// dynamic-range bounds used for normalization and for metric peaks.
/// Values must be finite and lie within `[min_val, max_val]`; a constant
/// image may have `min_val == max_val`. Zero-sized planes are legal (the
/// codec treats them as zero blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub min_val: f32,
    pub max_val: f32,
}

impl ImagePlane {
    pub fn new(
        width: u32,
        height: u32,
        values: Vec<f32>,
        min_val: f32,
        max_val: f32,
    ) -> Result<Self, CorpusError> {
        if values.len() as u64 != width as u64 * height as u64 {
            return Err(CorpusError::Spec(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        if !min_val.is_finite() || !max_val.is_finite() || min_val > max_val {
            return Err(CorpusError::Spec(format!(
                "bad bounds [{min_val}, {max_val}]"
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < min_val || **v > max_val)
        {
            return Err(CorpusError::Spec(format!(
                "value {v} outside [{min_val}, {max_val}]"
            )));
        }
        Ok(ImagePlane {
            width,
            height,
            values,
            min_val,
            max_val,
        })
    }

    /// Recorded dynamic range (metric peak); zero for a constant image.
    pub fn range(&self) -> f32 {
        self.max_val - self.min_val
    }

    /// Min-max normalization to the mid-range-centered domain `[-1/2, +1/2]`
    /// (a constant image normalizes to the all-zero plane). Computed through
    /// f64 so that [`ImagePlane::from_normalized`] restores every sample to
    /// within `range * 2^-23` (one f32 ULP of the normalized value, scaled
    /// back).
    pub fn normalized(&self) -> Vec<f32> {
        let (min, max) = (self.min_val as f64, self.max_val as f64);
        if max <= min {
            return vec![0.0; self.values.len()];
        }
        let range = max - min;
        self.values
            .iter()
            .map(|&v| ((v as f64 - min) / range - 0.5) as f32)
            .collect()
    }

    /// Inverse of [`ImagePlane::normalized`]: denormalizes and clamps into
    /// `[min_val, max_val]`. Non-finite inputs clamp to `min_val`.
    pub fn from_normalized(
        width: u32,
        height: u32,
        normalized: &[f32],
        min_val: f32,
        max_val: f32,
    ) -> Result<Self, CorpusError> {
        let (min, max) = (min_val as f64, max_val as f64);
        let range = max - min;
        let values: Vec<f32> = normalized
            .iter()
            .map(|&n| {
                if !n.is_finite() {
                    return min_val;
                }
                (min + (n as f64 + 0.5) * range).clamp(min, max) as f32
            })
            .collect();
        ImagePlane::new(width, height, values, min_val, max_val)
    }
}

/// Phantom families. All are deterministic in the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Up to 12 overlapping antialiased ellipses with organ-like plateaus.
    Ellipses,
    /// Values strictly increasing along x (worst case for plateau coders).
    Gradient,
    /// Mid-range plateau plus band-limited noise.
    Texture,
    /// I.i.d. uniform noise over the full range (incompressible).
    Noise,
    /// The medical-like family: ellipse anatomy plus a smooth intensity
    /// bias field plus low-amplitude band-limited acquisition noise.
    /// Unlike pure plateaus, the noise floor defeats run/LZ compression
    /// (like real scanner output) while staying transform-sparse.
    Composite,
}

impl PhantomKind {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "ellipses" => Ok(PhantomKind::Ellipses),
            "gradient" => Ok(PhantomKind::Gradient),
            "texture" => Ok(PhantomKind::Texture),
            "noise" => Ok(PhantomKind::Noise),
            "composite" => Ok(PhantomKind::Composite),
            other => Err(CorpusError::Spec(format!("unknown phantom kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhantomKind::Ellipses => "ellipses",
            PhantomKind::Gradient => "gradient",
            PhantomKind::Texture => "texture",
            PhantomKind::Noise => "noise",
            PhantomKind::Composite => "composite",
        }
    }
}

/// Intensity range of a phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicRange {
    /// Signed 12-bit CT-like range `[-1024, 3071]`, air-valued background.
    CtLike,
    /// Unsigned MR-like range `[0, 4095]` with a large zero background.
    MrLike,
    Custom {
        lo: f32,
        hi: f32,
    },
}

impl DynamicRange {
    pub fn bounds(&self) -> (f32, f32) {
        match *self {
            DynamicRange::CtLike => (-1024.0, 3071.0),
            DynamicRange::MrLike => (0.0, 4095.0),
            DynamicRange::Custom { lo, hi } => (lo, hi),
        }
    }

    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "ct" => Ok(DynamicRange::CtLike),
            "mr" => Ok(DynamicRange::MrLike),
            other => {
                let (lo, hi) = other.split_once(':').ok_or_else(|| {
                    CorpusError::Spec(format!("unknown range '{other}' (want ct, mr, or LO:HI)"))
                })?;
                let lo = lo
                    .parse()
                    .map_err(|_| CorpusError::Spec(format!("bad range low '{lo}'")))?;
                let hi = hi
                    .parse()
                    .map_err(|_| CorpusError::Spec(format!("bad range high '{hi}'")))?;
                Ok(DynamicRange::Custom { lo, hi })
            }
        }
    }
}

/// Minimum phantom dimension: keeps five-scale MS-SSIM computable.
pub const MIN_PHANTOM_DIM: u32 = 176;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub range: DynamicRange,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, width: u32, height: u32, seed: u64, range: DynamicRange) -> Self {
        PhantomSpec {
            kind,
            width,
            height,
            seed,
            range,
        }
    }

    fn validate(&self) -> Result<(f32, f32), CorpusError> {
        if self.width < MIN_PHANTOM_DIM || self.height < MIN_PHANTOM_DIM {
            return Err(CorpusError::Spec(format!(
                "phantom dims {}x{} below minimum {MIN_PHANTOM_DIM}",
                self.width, self.height
            )));
        }
        let (lo, hi) = self.range.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(CorpusError::Spec(format!("bad dynamic range [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

struct Ellipse {
    cx: f32,
    cy: f32,
    inv_a: f32,
    inv_b: f32,
    cos: f32,
    sin: f32,
    level: f32,
}

impl Ellipse {
    fn coverage(&self, px: u32, py: u32) -> f32 {
        // 3x3 subsample antialiasing; pure mul/div/add keeps this exact
        // across platforms.
        const SUB: [f32; 3] = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
        let mut inside = 0u32;
        for dy in SUB {
            for dx in SUB {
                let x = px as f32 + 0.5 + dx - self.cx;
                let y = py as f32 + 0.5 + dy - self.cy;
                let u = (self.cos * x + self.sin * y) * self.inv_a;
                let v = (-self.sin * x + self.cos * y) * self.inv_b;
                if u * u + v * v <= 1.0 {
                    inside += 1;
                }
            }
        }
        inside as f32 / 9.0
    }
}

/// Draws a random rotation as a normalized vector; `sqrt` and division are
/// correctly rounded by IEEE 754, so this is bit-stable everywhere.
fn random_rotation(rng: &mut ChaCha8Rng) -> (f32, f32) {
    loop {
        let u: f32 = rng.gen_range(-1.0..1.0);
        let v: f32 = rng.gen_range(-1.0..1.0);
        let n2 = u * u + v * v;
        if (0.01..=1.0).contains(&n2) {
            let n = n2.sqrt();
            return (u / n, v / n);
        }
    }
}

fn render_ellipses(spec: &PhantomSpec, rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Vec<f32> {
    let (w, h) = (spec.width, spec.height);
    let span = hi - lo;
    // Background: CT-like uses an air-ish plateau, MR-like stays zero.
    let background = match spec.range {
        DynamicRange::CtLike => (-1000.0f32).max(lo),
        DynamicRange::MrLike => 0.0,
        DynamicRange::Custom { .. } => lo,
    };
    let mut img = vec![background; (w * h) as usize];

    // One large body ellipse, then up to 8 organ-like plateaus inside it.
    let n_organs = rng.gen_range(4..=8usize);
    let mut ellipses = Vec::with_capacity(1 + n_organs);
    let body_level = lo + span * rng.gen_range(0.24..0.3);
    let (bc, bs) = random_rotation(rng);
    ellipses.push(Ellipse {
        cx: w as f32 * 0.5,
        cy: h as f32 * 0.5,
        inv_a: 1.0 / (w as f32 * rng.gen_range(0.32..0.4)),
        inv_b: 1.0 / (h as f32 * rng.gen_range(0.32..0.4)),
        cos: bc,
        sin: bs,
        level: body_level,
    });
    for _ in 0..n_organs {
        let (c, s) = random_rotation(rng);
        ellipses.push(Ellipse {
            cx: w as f32 * rng.gen_range(0.3..0.7),
            cy: h as f32 * rng.gen_range(0.3..0.7),
            inv_a: 1.0 / (w as f32 * rng.gen_range(0.06..0.18)),
            inv_b: 1.0 / (h as f32 * rng.gen_range(0.06..0.18)),
            cos: c,
            sin: s,
            level: lo + span * rng.gen_range(0.1..0.62),
        });
    }

    for e in &ellipses {
        // Paint only the bounding box; coverage blends the plateau in.
        let rx = 1.0 / e.inv_a + 2.0;
        let ry = 1.0 / e.inv_b + 2.0;
        let r = rx.max(ry);
        let x0 = (e.cx - r).floor().max(0.0) as u32;
        let x1 = ((e.cx + r).ceil() as u32).min(w);
        let y0 = (e.cy - r).floor().max(0.0) as u32;
        let y1 = ((e.cy + r).ceil() as u32).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let cov = e.coverage(x, y);
                if cov > 0.0 {
                    let i = (y * w + x) as usize;
                    img[i] = img[i] * (1.0 - cov) + e.level * cov;
                }
            }
        }
    }
    img
}

/// Repeated separable [1,2,1]/4 kernel with clamp-to-edge: imitates a
/// scanner point-spread function (edges span a few pixels).
fn smooth_psf(field: &mut [f32], w: u32, h: u32, passes: u32) {
    let (w, h) = (w as usize, h as usize);
    let clamp_idx = |v: i64, max: usize| v.clamp(0, max as i64 - 1) as usize;
    for _pass in 0..passes {
        let mut tmp = vec![0.0f32; field.len()];
        for y in 0..h {
            for x in 0..w as i64 {
                let row = y * w;
                tmp[row + x as usize] = 0.25 * field[row + clamp_idx(x - 1, w)]
                    + 0.5 * field[row + x as usize]
                    + 0.25 * field[row + clamp_idx(x + 1, w)];
            }
        }
        for y in 0..h as i64 {
            for x in 0..w {
                field[y as usize * w + x] = 0.25 * tmp[clamp_idx(y - 1, h) * w + x]
                    + 0.5 * tmp[y as usize * w + x]
                    + 0.25 * tmp[clamp_idx(y + 1, h) * w + x];
            }
        }
    }
}

/// White noise pushed through two separable 3x3 box blurs: band-limited,
/// zero-mean-ish, unit-std after the fixed gain correction.
fn band_limited_noise(w: u32, h: u32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = (w * h) as usize;
    let mut field: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let clamp_idx = |v: i64, max: i64| v.clamp(0, max - 1) as usize;
    for _pass in 0..2 {
        let mut tmp = vec![0.0f32; n];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for dx in -1..=1 {
                    acc += field[y as usize * w as usize + clamp_idx(x + dx, w as i64)];
                }
                tmp[(y * w as i64 + x) as usize] = acc / 3.0;
            }
        }
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for dy in -1..=1 {
                    acc += tmp[clamp_idx(y + dy, h as i64) * w as usize + x as usize];
                }
                field[(y * w as i64 + x) as usize] = acc / 3.0;
            }
        }
    }
    // Two box-blur passes shrink uniform[-1,1] std (0.577) to about 0.066;
    // rescale to roughly unit std.
    for v in &mut field {
        *v *= 15.0;
    }
    field
}

/// Generates a phantom image. Deterministic: the same spec always yields a
/// bit-identical plane.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<ImagePlane, CorpusError> {
    let (lo, hi) = spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let span = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let raw: Vec<f32> = match spec.kind {
        PhantomKind::Ellipses => render_ellipses(spec, &mut rng, lo, hi),
        PhantomKind::Gradient => {
            let denom = (w - 1).max(1) as f32;
            (0..w * h)
                .map(|i| lo + span * ((i % w) as f32 / denom))
                .collect()
        }
        PhantomKind::Texture => {
            let base = lo + span * 0.45;
            let amp = span * 0.004;
            band_limited_noise(w, h, &mut rng)
                .iter()
                .map(|&n| base + amp * n)
                .collect()
        }
        PhantomKind::Noise => (0..w * h)
            .map(|_| lo + span * rng.gen_range(0.0f32..1.0))
            .collect(),
        PhantomKind::Composite => {
            let mut img = render_ellipses(spec, &mut rng, lo, hi);
            smooth_psf(&mut img, w, h, 3);
            // Smooth biquadratic bias field (shading/inhomogeneity).
            let bias: Vec<f32> = (0..5)
                .map(|_| rng.gen_range(-0.02f32..0.02) * span)
                .collect();
            // White acquisition noise, about a quantization level of sigma:
            // enough to defeat run/LZ coding of the raw samples, while a
            // block transform averages it below a medical-scale quantizer.
            let sigma = span as f64 * 0.0003;
            let noise = Normal::new(0.0f64, sigma).expect("fixed sigma");
            let pedestal = 0.05 * span;
            let mut out = Vec::with_capacity(img.len());
            for y in 0..h {
                for x in 0..w {
                    let i = (y * w + x) as usize;
                    let u = x as f32 / (w - 1).max(1) as f32 - 0.5;
                    let v = y as f32 / (h - 1).max(1) as f32 - 0.5;
                    let b = bias[0] * u
                        + bias[1] * v
                        + bias[2] * u * v
                        + bias[3] * u * u
                        + bias[4] * v * v;
                    out.push(img[i] + pedestal + b + noise.sample(&mut rng) as f32);
                }
            }
            out
        }
    };
    // Medical planes are integer-valued; rounding also makes PGM round-trips
    // exact. The gradient stays monotone because its step exceeds 1.
    let values: Vec<f32> = raw.iter().map(|v| v.round().clamp(lo, hi)).collect();
    ImagePlane::new(w, h, values, lo, hi)
}

// ---------------------------------------------------------------- PGM I/O

/// Writes binary PGM (`P5`); samples are `value - min_val`, big-endian
/// 16-bit when maxval > 255. The `# off` comment preserves the intensity
/// origin so signed planes survive a round trip.
pub fn write_pgm<W: Write>(img: &ImagePlane, sink: &mut W) -> Result<u64, CorpusError> {
    if img.width == 0 || img.height == 0 {
        return Err(CorpusError::Format(
            "cannot write empty image as PGM".into(),
        ));
    }
    let maxval = (img.max_val as f64 - img.min_val as f64).round() as i64;
    if !(1..=65535).contains(&maxval) {
        return Err(CorpusError::Format(format!(
            "dynamic range {} not representable as PGM maxval",
            img.range()
        )));
    }
    let maxval = maxval as u32;
    let header = format!(
        "P5\n# off {}\n{} {}\n{}\n",
        img.min_val, img.width, img.height, maxval
    );
    let mut bytes = Vec::with_capacity(header.len() + img.values.len() * 2);
    bytes.extend_from_slice(header.as_bytes());
    for &v in &img.values {
        let s = ((v as f64 - img.min_val as f64).round() as i64).clamp(0, maxval as i64) as u32;
        if maxval > 255 {
            bytes.extend_from_slice(&(s as u16).to_be_bytes());
        } else {
            bytes.push(s as u8);
        }
    }
    sink.write_all(&bytes)
        .map_err(|e| CorpusError::Format(format!("write failed: {e}")))?;
    Ok(bytes.len() as u64)
}

struct PgmReader<'a> {
    buf: &'a [u8],
    pos: usize,
    offset: Option<f32>,
}

impl<'a> PgmReader<'a> {
    /// Returns the next header token, skipping whitespace and comments;
    /// captures `# off <v>` comments along the way.
    fn token(&mut self) -> Result<&'a str, CorpusError> {
        loop {
            while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.buf.len() {
                return Err(CorpusError::Format("truncated PGM header".into()));
            }
            if self.buf[self.pos] == b'#' {
                let end = self.buf[self.pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map(|e| self.pos + e)
                    .unwrap_or(self.buf.len());
                let comment = std::str::from_utf8(&self.buf[self.pos + 1..end]).unwrap_or("");
                if let Some(v) = comment.trim().strip_prefix("off ") {
                    self.offset = v.trim().parse().ok();
                }
                self.pos = end;
                continue;
            }
            let start = self.pos;
            while self.pos < self.buf.len()
                && !self.buf[self.pos].is_ascii_whitespace()
                && self.buf[self.pos] != b'#'
            {
                self.pos += 1;
            }
            return std::str::from_utf8(&self.buf[start..self.pos])
                .map_err(|_| CorpusError::Format("non-ASCII PGM header".into()));
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, CorpusError> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| CorpusError::Format(format!("bad PGM {what} '{tok}'")))
    }
}

/// Parses binary PGM. Only `P5` is accepted; the raster length must match
/// the header exactly (no trailing bytes).
pub fn read_pgm(bytes: &[u8]) -> Result<ImagePlane, CorpusError> {
    let mut r = PgmReader {
        buf: bytes,
        pos: 0,
        offset: None,
    };
    let magic = r.token()?;
    if magic != "P5" {
        return Err(CorpusError::Format(format!(
            "unsupported PGM magic '{magic}' (only binary P5)"
        )));
    }
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(CorpusError::Format("zero PGM dimension".into()));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(CorpusError::Format(format!(
            "PGM maxval {maxval} out of range"
        )));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(CorpusError::Format("missing raster separator".into()));
    }
    r.pos += 1;
    let raster = &bytes[r.pos..];
    let n = width as usize * height as usize;
    let wide = maxval > 255;
    let expect = n * if wide { 2 } else { 1 };
    if raster.len() != expect {
        return Err(CorpusError::Format(format!(
            "raster holds {} bytes, expected {expect}",
            raster.len()
        )));
    }
    let off = r.offset.unwrap_or(0.0);
    if !off.is_finite() {
        return Err(CorpusError::Format("non-finite sample offset".into()));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let s = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
        } else {
            raster[i] as u32
        };
        if s > maxval {
            return Err(CorpusError::Format(format!(
                "sample {s} exceeds maxval {maxval}"
            )));
        }
        values.push(off + s as f32);
    }
    ImagePlane::new(width, height, values, off, off + maxval as f32)
}

// --------------------------------------------------- carrier checkpoints

/// Weight layout of generated carrier checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarrierStructure {
    /// Sign, a small random exponent, and 23 i.i.d. random mantissa bits:
    /// mantissa LSBs are already uniform (worst case for LSB scanners).
    UniformMantissa,
    /// Gaussian weights rounded to a 1e-3 grid: structured mantissa LSBs,
    /// the detectable case.
    GridRounded,
}

impl CarrierStructure {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "uniform-mantissa" => Ok(CarrierStructure::UniformMantissa),
            "grid-rounded" => Ok(CarrierStructure::GridRounded),
            other => Err(CorpusError::Spec(format!(
                "unknown carrier structure '{other}'"
            ))),
        }
    }
}

/// Generates a clean (payload-free) checkpoint with plausibly named layers
/// totaling exactly `param_count` parameters.
pub fn gen_clean_checkpoint(
    param_count: u64,
    structure: CarrierStructure,
    seed: u64,
) -> Result<Checkpoint, CorpusError> {
    if param_count > (1 << 31) {
        return Err(CorpusError::Spec(format!(
            "param_count {param_count} above desk-scale cap 2^31"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    let mut remaining = param_count;
    let mut block = 0usize;
    let mut in_ch = 3u32;
    loop {
        let out_ch = *[16u32, 32, 48, 64].get(rng.gen_range(0..4usize)).unwrap();
        let conv = out_ch as u64 * in_ch as u64 * 9;
        if remaining < conv + out_ch as u64 + 1 {
            break;
        }
        tensors.push((
            format!("backbone.block{block}.conv.weight"),
            vec![out_ch, in_ch, 3, 3],
            conv,
        ));
        tensors.push((
            format!("backbone.block{block}.conv.bias"),
            vec![out_ch],
            out_ch as u64,
        ));
        remaining -= conv + out_ch as u64;
        in_ch = out_ch;
        block += 1;
    }
    if remaining > 0 {
        tensors.push((
            "head.fc.weight".to_string(),
            vec![remaining as u32],
            remaining,
        ));
    }

    let tensors = tensors
        .into_iter()
        .map(|(name, shape, n)| {
            TensorEntry::new(name, shape, carrier_values(structure, n, &mut rng))
        })
        .collect();
    Ok(Checkpoint::new(tensors, vec![]))
}

/// The raw value recipe behind [`gen_clean_checkpoint`], reusable for
/// single-tensor calibration corpora.
pub(crate) fn carrier_values(
    structure: CarrierStructure,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let grid_normal = Normal::new(0.0f64, 0.05).expect("fixed sigma");
    (0..n)
        .map(|_| match structure {
            CarrierStructure::UniformMantissa => {
                let sign = (rng.gen::<bool>() as u32) << 31;
                let exponent = rng.gen_range(120u32..=126) << 23;
                let mantissa: u32 = rng.gen_range(0..1 << 23);
                f32::from_bits(sign | exponent | mantissa)
            }
            CarrierStructure::GridRounded => {
                ((grid_normal.sample(rng) / 1e-3).round() * 1e-3) as f32
            }
        })
        .collect()
}
