//! Defender-side Gaussian parameter noise (the differential-privacy-style
//! export mitigation) and the attacker-vs-noise resilience sweep.
//!
//! The sweep is the experiment at the heart of the toolkit: embed compressed
//! targets in a clean carrier through one of the hiding channels, add
//! calibrated Gaussian noise to every exported parameter, then measure what
//! survives. Bit channels (LSB, and any other exact-byte representation)
//! collapse at the first flipped mantissa bit; the value channel degrades
//! gracefully because the hidden payload *is* a linear signal in the tensor
//! values — exactly the dichotomy the defense has to reckon with.

use crate::codec::{
    decoded_to_values, encode_image, entropy_decode, parse_values_at, read_latent_code_at,
    synthesis_stage_tensors, synthesize, synthesize_with, write_latent_code, CodecProfile,
    DecodedLatent,
};
use crate::container::Checkpoint;
use crate::corpus::{gen_clean_checkpoint, gen_phantom, CarrierStructure, ImagePlane, PhantomSpec};
use crate::metrics;
use crate::stego::{
    embed_dict, embed_lsb, embed_values, extract_dict, extract_lsb, extract_values, Channel,
    EmbedPlan, StegoError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrivacyError {
    /// Invalid noise or sweep parameters.
    #[error("spec error: {0}")]
    Spec(String),
    /// Scope names that do not exist in the checkpoint.
    #[error("scope error: {0}")]
    Scope(String),
    /// A wrapped failure from the codec/stego pipeline inside a sweep.
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

/// Default noise ladder for sweeps: identity, the graceful-degradation
/// regime, and two clearly destructive levels.
pub const DEFAULT_SIGMAS: [f64; 6] = [0.0, 0.001, 0.002, 0.003, 0.01, 0.03];

/// Which tensors receive noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoiseScope {
    AllTensors,
    /// Only the named tensors (all must exist), still visited in storage
    /// order.
    Named(Vec<String>),
}

/// One noise application: i.i.d. `N(0, sigma^2)` added to every scoped
/// parameter, from a single seeded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
    seed: u64,
    scope: NoiseScope,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64, scope: NoiseScope) -> Result<NoiseSpec, PrivacyError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(PrivacyError::Spec(format!(
                "sigma {sigma} must be finite and >= 0"
            )));
        }
        Ok(NoiseSpec { sigma, seed, scope })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scope(&self) -> &NoiseScope {
        &self.scope
    }
}

/// Adds Gaussian noise to the scoped tensors (in checkpoint storage order,
/// one RNG stream for the whole pass). `sigma == 0` returns a byte-identical
/// copy without consuming any randomness.
pub fn add_noise(ckpt: &Checkpoint, spec: &NoiseSpec) -> Result<Checkpoint, PrivacyError> {
    if let NoiseScope::Named(names) = &spec.scope {
        let missing: Vec<&String> = names
            .iter()
            .filter(|n| ckpt.find_tensor(n).is_none())
            .collect();
        if !missing.is_empty() {
            return Err(PrivacyError::Scope(format!(
                "tensors not in checkpoint: {missing:?}"
            )));
        }
    }
    let mut out = ckpt.clone();
    if spec.sigma == 0.0 {
        return Ok(out);
    }
    let normal =
        Normal::new(0.0, spec.sigma).map_err(|e| PrivacyError::Spec(format!("bad sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for tensor in out.tensors.iter_mut() {
        let in_scope = match &spec.scope {
            NoiseScope::AllTensors => true,
            NoiseScope::Named(names) => names.iter().any(|n| n == &tensor.name),
        };
        if !in_scope {
            continue;
        }
        for v in tensor.data.iter_mut() {
            *v = (*v as f64 + normal.sample(&mut rng)) as f32;
        }
    }
    Ok(out)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-cell seed for a sweep grid: distinct noise draws for
/// every (base seed, sigma, trial) combination, stable across runs.
pub fn cell_seed(seed: u64, sigma: f64, trial: u64) -> u64 {
    splitmix64(
        seed ^ splitmix64(sigma.to_bits()).rotate_left(17) ^ splitmix64(trial).rotate_left(31),
    )
}

/// Export scenario under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Codes-only export: the carrier ships the entropy-coded payload and
    /// nothing else; the decoder lives outside the perimeter.
    Ep,
    /// Image-transport export: the payload rides as coefficient values and
    /// the synthesis stage filters ship as real tensors in the same file,
    /// so reconstruction works only where those tensors survived.
    It,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Scenario, PrivacyError> {
        match s {
            "ep" => Ok(Scenario::Ep),
            "it" => Ok(Scenario::It),
            other => Err(PrivacyError::Spec(format!(
                "unknown scenario '{other}' (ep|it)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Ep => "ep",
            Scenario::It => "it",
        }
    }
}

/// Full description of one resilience sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub profile: CodecProfile,
    pub channel: Channel,
    pub sigmas: Vec<f64>,
    pub trials: u64,
    pub images: Vec<PhantomSpec>,
    pub carrier_params: u64,
    pub carrier_structure: CarrierStructure,
    pub bits_per_param: u8,
    pub value_scale: f32,
    pub dict_key: String,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if self.trials == 0 {
            return Err(PrivacyError::Spec("trials must be >= 1".into()));
        }
        if self.images.is_empty() {
            return Err(PrivacyError::Spec("sweep needs at least one image".into()));
        }
        if self.sigmas.is_empty() {
            return Err(PrivacyError::Spec("sweep needs at least one sigma".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(PrivacyError::Spec(format!("bad sigma {s}")));
        }
        if self.scenario == Scenario::It && self.profile.decoder_stages() == 0 {
            return Err(PrivacyError::Spec(
                "image-transport scenario needs decoder_stages >= 1 (there must be \
                 synthesis tensors to ship)"
                    .into(),
            ));
        }
        if self.dict_key.is_empty() {
            return Err(PrivacyError::Spec("dict key must be non-empty".into()));
        }
        Ok(())
    }
}

/// One grid cell observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceRow {
    pub sigma: f64,
    pub channel: Channel,
    pub trial: u64,
    /// A payload frame (or value-tensor structure) was located at all.
    pub extract_ok: bool,
    /// Integrity held: CRC for byte channels, structural parse for the
    /// value channel.
    pub crc_ok: bool,
    /// Mean reconstruction PSNR across the sweep images (present only when
    /// reconstruction succeeded end to end).
    pub psnr_db: Option<f64>,
    /// Mean reconstruction MS-SSIM, same availability.
    pub ms_ssim: Option<f64>,
}

/// Sweep output: per-cell rows plus size accounting of the export.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<ResilienceRow>,
    pub carrier_bytes: u64,
    pub export_bytes: u64,
    pub payload_bytes: u64,
}

fn pipeline<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> PrivacyError + '_ {
    move |e| PrivacyError::Pipeline(format!("{what}: {e}"))
}

/// The embedded artifacts of one sweep, fixed across all grid cells.
struct SweepSetup {
    images: Vec<ImagePlane>,
    export: Checkpoint,
    plan: EmbedPlan,
    payload_bytes: u64,
    carrier_bytes: u64,
}

fn prepare(cfg: &SweepConfig) -> Result<SweepSetup, PrivacyError> {
    let mut images = Vec::with_capacity(cfg.images.len());
    for spec in &cfg.images {
        images.push(gen_phantom(spec).map_err(pipeline("phantom generation"))?);
    }

    let mut codes = Vec::with_capacity(images.len());
    let mut decoded = Vec::with_capacity(images.len());
    for img in &images {
        let code = encode_image(img, &cfg.profile).map_err(pipeline("encode"))?;
        decoded.push(entropy_decode(&code).map_err(pipeline("entropy decode"))?);
        codes.push(code);
    }

    let carrier = gen_clean_checkpoint(cfg.carrier_params, cfg.carrier_structure, cfg.seed)
        .map_err(pipeline("carrier generation"))?;
    let carrier_bytes = carrier.total_size();
    let names: Vec<String> = carrier.tensors.iter().map(|t| t.name.clone()).collect();

    let (mut export, plan, payload_bytes) = match cfg.channel {
        Channel::Lsb | Channel::Dict => {
            let mut payload = Vec::new();
            for code in &codes {
                payload.extend(write_latent_code(code).map_err(pipeline("serialize code"))?);
            }
            let bytes = payload.len() as u64;
            match cfg.channel {
                Channel::Lsb => {
                    let plan =
                        EmbedPlan::lsb_bits(names, cfg.bits_per_param).map_err(pipeline("plan"))?;
                    let export =
                        embed_lsb(&carrier, &plan, &payload).map_err(pipeline("embed lsb"))?;
                    (export, plan, bytes)
                }
                Channel::Dict => {
                    let plan = EmbedPlan::lsb(names).map_err(pipeline("plan"))?;
                    let export = embed_dict(&carrier, &cfg.dict_key, &payload)
                        .map_err(pipeline("embed dict"))?;
                    (export, plan, bytes)
                }
                Channel::Value => unreachable!(),
            }
        }
        Channel::Value => {
            let mut values = Vec::new();
            for dec in &decoded {
                values.extend(decoded_to_values(dec).map_err(pipeline("values"))?);
            }
            let bytes = 4 * values.len() as u64;
            let plan = EmbedPlan::values(names, cfg.value_scale).map_err(pipeline("plan"))?;
            let export =
                embed_values(&carrier, &plan, &values).map_err(pipeline("embed values"))?;
            (export, plan, bytes)
        }
    };

    if cfg.scenario == Scenario::It {
        export
            .tensors
            .extend(synthesis_stage_tensors(cfg.profile.decoder_stages()));
    }

    Ok(SweepSetup {
        images,
        export,
        plan,
        payload_bytes,
        carrier_bytes,
    })
}

/// Builds the checkpoint the attacker would export under `cfg` — targets
/// encoded and embedded through the configured channel, plus the synthesis
/// stage tensors when the scenario ships the decoder — without running any
/// noise trials. This is the artifact the defender's scans see.
pub fn build_export(cfg: &SweepConfig) -> Result<Checkpoint, PrivacyError> {
    cfg.validate()?;
    Ok(prepare(cfg)?.export)
}

/// Extraction outcome classification shared by the byte channels.
fn classify_extract(result: &Result<Vec<u8>, StegoError>) -> (bool, bool) {
    match result {
        Ok(_) => (true, true),
        Err(StegoError::CorruptPayload(_)) => (true, false),
        Err(_) => (false, false),
    }
}

fn reconstruct(
    cfg: &SweepConfig,
    noised: &Checkpoint,
    decs: &[DecodedLatent],
    originals: &[ImagePlane],
) -> Option<(f64, f64)> {
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (dec, original) in decs.iter().zip(originals) {
        let rebuilt = match cfg.scenario {
            Scenario::Ep => synthesize(dec).ok()?,
            Scenario::It => synthesize_with(dec, noised).ok()?,
        };
        psnr_sum += metrics::psnr(original, &rebuilt).ok()?;
        ssim_sum += metrics::ms_ssim(original, &rebuilt).ok()?;
    }
    let n = decs.len() as f64;
    Some((psnr_sum / n, ssim_sum / n))
}

/// Parse a concatenation of `DECZ` records back into decoded latents.
fn decode_byte_payload(payload: &[u8], expected: usize) -> Option<Vec<DecodedLatent>> {
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(expected);
    while pos < payload.len() {
        let code = read_latent_code_at(payload, &mut pos).ok()?;
        out.push(entropy_decode(&code).ok()?);
    }
    (out.len() == expected).then_some(out)
}

/// Parse a concatenation of value-channel records.
fn decode_value_payload(values: &[f32], expected: usize) -> Option<Vec<DecodedLatent>> {
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(expected);
    while pos < values.len() {
        out.push(parse_values_at(values, &mut pos).ok()?);
    }
    (out.len() == expected).then_some(out)
}

/// Runs the full sweep grid: for every sigma and trial, noise the export,
/// attempt extraction, and score any successful reconstruction against the
/// original images.
pub fn resilience_sweep(cfg: &SweepConfig) -> Result<SweepResult, PrivacyError> {
    cfg.validate()?;
    let setup = prepare(cfg)?;
    let n_images = setup.images.len();

    let mut rows = Vec::with_capacity(cfg.sigmas.len() * cfg.trials as usize);
    for &sigma in &cfg.sigmas {
        for trial in 0..cfg.trials {
            let spec = NoiseSpec::new(
                sigma,
                cell_seed(cfg.seed, sigma, trial),
                NoiseScope::AllTensors,
            )?;
            let noised = add_noise(&setup.export, &spec)?;

            let (extract_ok, crc_ok, scored) = match cfg.channel {
                Channel::Lsb | Channel::Dict => {
                    let result = match cfg.channel {
                        Channel::Lsb => extract_lsb(&noised, &setup.plan),
                        Channel::Dict => extract_dict(&noised, &cfg.dict_key),
                        Channel::Value => unreachable!(),
                    };
                    let (extract_ok, crc_ok) = classify_extract(&result);
                    let scored = result
                        .ok()
                        .and_then(|payload| decode_byte_payload(&payload, n_images))
                        .and_then(|decs| reconstruct(cfg, &noised, &decs, &setup.images));
                    (extract_ok, crc_ok, scored)
                }
                Channel::Value => match extract_values(&noised, &setup.plan) {
                    Ok(values) => {
                        let decs = decode_value_payload(&values, n_images);
                        let crc_ok = decs.is_some();
                        let scored =
                            decs.and_then(|decs| reconstruct(cfg, &noised, &decs, &setup.images));
                        (true, crc_ok, scored)
                    }
                    Err(_) => (false, false, None),
                },
            };

            rows.push(ResilienceRow {
                sigma,
                channel: cfg.channel,
                trial,
                extract_ok,
                crc_ok,
                psnr_db: scored.map(|(p, _)| p),
                ms_ssim: scored.map(|(_, s)| s),
            });
        }
    }

    Ok(SweepResult {
        rows,
        carrier_bytes: setup.carrier_bytes,
        export_bytes: setup.export.total_size(),
        payload_bytes: setup.payload_bytes,
    })
}

/// Writes sweep rows as CSV with the stable column set
/// `sigma,channel,trial,extract_ok,crc_ok,psnr_db,ms_ssim` (metric fields
/// empty when reconstruction did not happen).
pub fn write_sweep_csv<W: std::io::Write>(
    rows: &[ResilienceRow],
    sink: &mut W,
) -> std::io::Result<()> {
    writeln!(
        sink,
        "sigma,channel,trial,extract_ok,crc_ok,psnr_db,ms_ssim"
    )?;
    for r in rows {
        let psnr = r.psnr_db.map(|v| format!("{v:.4}")).unwrap_or_default();
        let ssim = r.ms_ssim.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            r.sigma,
            r.channel.name(),
            r.trial,
            r.extract_ok,
            r.crc_ok,
            psnr,
            ssim
        )?;
    }
    Ok(())
}
