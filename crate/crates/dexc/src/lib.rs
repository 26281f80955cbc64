//! dexc — a desk-scale red-team/blue-team toolkit for studying **data
//! exfiltration by compression** through ML model checkpoints.
//!
//! The attack being reproduced: an insider compresses target images with a
//! learned transform codec (analysis transform + hyperprior-conditioned
//! entropy coding), hides the resulting bitstreams inside an innocuous model
//! checkpoint file (mantissa LSBs, dictionary entries, or extra value
//! tensors), exports the checkpoint through a review gate, and reconstructs
//! the images outside. The defender side audits exported checkpoints for
//! exactly these channels.
//!
//! Module map:
//!
//! * [`container`] — the MTC v1 checkpoint file format (named f32 tensors +
//!   opaque extras), fuzz-safe reader, exact size accounting.
//! * [`corpus`] — deterministic phantom images (ellipses / gradient /
//!   texture / noise / composite), PGM I/O, and clean carrier checkpoints.
//! * [`codec`] — the image codec: 8x8 orthonormal DCT analysis, per-block
//!   scale classes (hyper stream), Gaussian-bin range coding of quantized
//!   coefficients (latent stream), synthesis back to images, and the
//!   DEFLATE lossless baseline.
//! * [`stego`] — payload framing (magic/length/CRC32) and the three hiding
//!   channels: LSB (mantissa bits), DICT (extras entries), VALUE (payload
//!   floats stored as plausible tensors).
//! * [`metrics`] — PSNR, 5-scale MS-SSIM, bits-per-pixel, compression-ratio
//!   and bit-error-rate helpers with pinned constants.
//! * [`privacy`] — the defender's Gaussian parameter noise (the
//!   differential-privacy-style mitigation) and the noise-resilience sweep
//!   that exposes the bit-channel vs value-channel dichotomy.
//! * [`defender`] — size filtering, extras scanning, LSB randomness scans
//!   with a calibrated score, and the fine-tuning audit.
//! * [`cli`] — the `dexc` binary: thin subcommands over the library with
//!   reproducibility manifests.
//!
//! Every operation is deterministic given its explicit seeds; nothing reads
//! clocks or ambient randomness.

pub mod cli;
pub mod codec;
pub mod container;
pub mod corpus;
pub mod defender;
pub mod metrics;
pub mod privacy;
pub mod stego;

pub use codec::{
    decode_image, encode_image, entropy_decode, synthesize, CodecError, CodecProfile,
    DecodedLatent, LatentCode,
};
pub use container::{read_checkpoint, write_checkpoint, Checkpoint, ContainerError, TensorEntry};
pub use corpus::{gen_clean_checkpoint, gen_phantom, ImagePlane, PhantomSpec};
pub use defender::{
    extras_scan, finetune_audit, full_scan, lsb_scan, size_filter, AuditReport, DefenderError,
    ScanReport,
};
pub use privacy::{add_noise, resilience_sweep, NoiseScope, NoiseSpec, PrivacyError, SweepConfig};
pub use stego::{
    embed_dict, embed_lsb, embed_values, extract_dict, extract_lsb, extract_values, Channel,
    EmbedPlan,
};
