//! Payload hiding channels for checkpoint containers.
//!
//! All channels carry the same self-describing frame — magic, version,
//! flags, length, CRC-32 — so extraction can tell *absence* of a payload
//! (no plausible frame at all) from *corruption* (a frame that fails its
//! integrity checks). Three channels are implemented:
//!
//! * **LSB** — payload bits spliced into the low mantissa bits of existing
//!   weight tensors. Perturbs every carrier weight by a relative error
//!   below `2^(bits-23)`, invisible to casual inspection, but destroyed by
//!   additive noise larger than the touched bit span.
//! * **DICT** — the frame stored verbatim as a metadata ("extras") entry.
//!   Bit-exact and noise-immune, but trivially visible to an extras scan.
//! * **VALUE** — payload floats written as *new* tensors posing as
//!   auxiliary training state. Values degrade gracefully under additive
//!   noise like any other weight.

use rand::Rng;
use thiserror::Error;

use crate::container::{Checkpoint, TensorEntry};

#[derive(Debug, Error)]
pub enum StegoError {
    /// Embed plan is malformed or does not match the checkpoint.
    #[error("plan error: {0}")]
    Plan(String),
    /// Payload does not fit the selected carrier.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Embedding would violate the container schema (name collisions …).
    #[error("schema error: {0}")]
    Schema(String),
    /// No plausible payload frame found (wrong magic, region too small).
    #[error("no payload: {0}")]
    NoPayload(String),
    /// A frame was located but fails its integrity checks.
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    /// Values not representable in the channel (overflow/underflow).
    #[error("range error: {0}")]
    Range(String),
}

// ------------------------------------------------------------------ CRC-32

/// Reflected CRC-32 (IEEE 802.3 polynomial), table-driven.
const CRC32_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 {
                0xEDB8_8320 ^ (c >> 1)
            } else {
                c >> 1
            };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = CRC32_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

// ------------------------------------------------------------------ frame

pub const FRAME_MAGIC: [u8; 4] = *b"DEXC";
pub const FRAME_VERSION: u8 = 1;
/// Fixed frame overhead: magic (4) + version (1) + flags (1) + length (8)
/// + CRC-32 (4).
pub const FRAME_OVERHEAD: u64 = 18;

/// Wraps a payload in the integrity frame shared by every channel.
pub fn frame_payload(payload: &[u8], flags: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_OVERHEAD as usize + payload.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(flags);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Parses a frame from the start of `bytes`, returning `(flags, payload)`.
///
/// Error taxonomy: too-short regions and wrong magic mean there is nothing
/// that even looks like a payload ([`StegoError::NoPayload`]); a matching
/// magic followed by a bad version, an impossible length, or a CRC mismatch
/// means a payload was there but is damaged
/// ([`StegoError::CorruptPayload`]).
pub fn parse_frame(bytes: &[u8]) -> Result<(u8, Vec<u8>), StegoError> {
    if bytes.len() < FRAME_OVERHEAD as usize {
        return Err(StegoError::NoPayload(format!(
            "region of {} bytes cannot hold a frame header",
            bytes.len()
        )));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(StegoError::NoPayload("frame magic absent".into()));
    }
    if bytes[4] != FRAME_VERSION {
        return Err(StegoError::CorruptPayload(format!(
            "unknown frame version {}",
            bytes[4]
        )));
    }
    let flags = bytes[5];
    let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let stored_crc = u32::from_le_bytes(bytes[14..18].try_into().unwrap());
    let avail = bytes.len() as u64 - FRAME_OVERHEAD;
    if len > avail {
        return Err(StegoError::CorruptPayload(format!(
            "declared payload length {len} exceeds available {avail} bytes"
        )));
    }
    let payload = &bytes[18..18 + len as usize];
    let actual = crc32(payload);
    if actual != stored_crc {
        return Err(StegoError::CorruptPayload(format!(
            "CRC mismatch: stored {stored_crc:#010x}, computed {actual:#010x}"
        )));
    }
    Ok((flags, payload.to_vec()))
}

// ------------------------------------------------------------------ plan

/// Hiding channel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Lsb,
    Dict,
    Value,
}

impl Channel {
    pub fn parse(s: &str) -> Result<Self, StegoError> {
        match s {
            "lsb" => Ok(Channel::Lsb),
            "dict" => Ok(Channel::Dict),
            "value" => Ok(Channel::Value),
            other => Err(StegoError::Plan(format!("unknown channel '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Lsb => "lsb",
            Channel::Dict => "dict",
            Channel::Value => "value",
        }
    }
}

/// Which tensors carry the payload and with what parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedPlan {
    /// Carrier tensors, in embedding order.
    pub tensor_names: Vec<String>,
    /// LSB channel: low mantissa bits used per f32 parameter (1..=23).
    pub bits_per_param: u8,
    /// VALUE channel: power-of-two gain applied to stored values.
    pub value_scale: f32,
}

pub const DEFAULT_BITS_PER_PARAM: u8 = 16;

fn is_power_of_two(s: f32) -> bool {
    s.is_normal() && s > 0.0 && (s.to_bits() & 0x007F_FFFF) == 0
}

impl EmbedPlan {
    /// LSB plan with the default 16 bits per parameter.
    pub fn lsb(tensor_names: Vec<String>) -> Result<Self, StegoError> {
        Self::lsb_bits(tensor_names, DEFAULT_BITS_PER_PARAM)
    }

    pub fn lsb_bits(tensor_names: Vec<String>, bits_per_param: u8) -> Result<Self, StegoError> {
        if !(1..=23).contains(&bits_per_param) {
            return Err(StegoError::Plan(format!(
                "bits_per_param {bits_per_param} outside mantissa range 1..=23"
            )));
        }
        Self::validate_names(&tensor_names)?;
        Ok(EmbedPlan {
            tensor_names,
            bits_per_param,
            value_scale: 1.0,
        })
    }

    pub fn values(tensor_names: Vec<String>, value_scale: f32) -> Result<Self, StegoError> {
        if !is_power_of_two(value_scale) {
            return Err(StegoError::Plan(format!(
                "value_scale {value_scale} must be a positive power of two so \
                 scaling is exactly invertible"
            )));
        }
        Self::validate_names(&tensor_names)?;
        Ok(EmbedPlan {
            tensor_names,
            bits_per_param: DEFAULT_BITS_PER_PARAM,
            value_scale,
        })
    }

    fn validate_names(names: &[String]) -> Result<(), StegoError> {
        if names.is_empty() {
            return Err(StegoError::Plan("plan selects no tensors".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(StegoError::Plan(
                    "plan contains an empty tensor name".into(),
                ));
            }
            if names[..i].contains(n) {
                return Err(StegoError::Plan(format!("tensor '{n}' listed twice")));
            }
        }
        Ok(())
    }

    /// Plan over every tensor of `ckpt`, in storage order.
    pub fn all_tensors(ckpt: &Checkpoint) -> Result<Self, StegoError> {
        Self::lsb(ckpt.tensors.iter().map(|t| t.name.clone()).collect())
    }

    fn carriers<'c>(&self, ckpt: &'c Checkpoint) -> Result<Vec<&'c TensorEntry>, StegoError> {
        self.tensor_names
            .iter()
            .map(|n| {
                ckpt.find_tensor(n).ok_or_else(|| {
                    StegoError::Plan(format!("carrier tensor '{n}' not in checkpoint"))
                })
            })
            .collect()
    }

    fn carrier_params(&self, ckpt: &Checkpoint) -> Result<u64, StegoError> {
        Ok(self.carriers(ckpt)?.iter().map(|t| t.param_count()).sum())
    }
}

// ------------------------------------------------------------------ LSB

/// Payload bytes that fit the LSB channel: `floor(params * bits / 8)` raw
/// bytes minus the frame overhead (zero if the carrier is smaller than a
/// bare frame).
pub fn lsb_capacity(ckpt: &Checkpoint, plan: &EmbedPlan) -> Result<u64, StegoError> {
    let params = plan.carrier_params(ckpt)?;
    Ok((params * plan.bits_per_param as u64 / 8).saturating_sub(FRAME_OVERHEAD))
}

/// Splices the framed payload into the low mantissa bits of the plan's
/// carrier tensors (plan order; storage order within each tensor). Frame
/// bytes stream LSB-first: frame bit `i` lands in bit `i % bits` of carrier
/// word `i / bits`. Words past the frame keep their original low bits, as
/// does the tail of a partially used final word.
pub fn embed_lsb(
    ckpt: &Checkpoint,
    plan: &EmbedPlan,
    payload: &[u8],
) -> Result<Checkpoint, StegoError> {
    let cap = lsb_capacity(ckpt, plan)?;
    if payload.len() as u64 > cap {
        return Err(StegoError::Capacity(format!(
            "payload of {} bytes exceeds LSB capacity {cap}",
            payload.len()
        )));
    }
    let frame = frame_payload(payload, 0);
    let bits = plan.bits_per_param as u64;
    let total_bits = frame.len() as u64 * 8;

    let mut out = ckpt.clone();
    let mut consumed = 0u64; // frame bits written so far
    for name in &plan.tensor_names {
        if consumed >= total_bits {
            break;
        }
        let tensor = out.find_tensor_mut(name).ok_or_else(|| {
            StegoError::Plan(format!("carrier tensor '{name}' not in checkpoint"))
        })?;
        for value in &mut tensor.data {
            if consumed >= total_bits {
                break;
            }
            let take = bits.min(total_bits - consumed);
            let mut chunk = 0u32;
            for b in 0..take {
                let idx = consumed + b;
                let bit = (frame[(idx / 8) as usize] >> (idx % 8)) & 1;
                chunk |= (bit as u32) << b;
            }
            let keep_mask = !0u32 << take; // untouched high bits + unused tail
            let word = value.to_bits();
            *value = f32::from_bits((word & keep_mask) | chunk);
            consumed += take;
        }
    }
    debug_assert_eq!(consumed, total_bits, "capacity check must guarantee fit");
    Ok(out)
}

/// Reads back an LSB-channel payload embedded under the same plan.
pub fn extract_lsb(ckpt: &Checkpoint, plan: &EmbedPlan) -> Result<Vec<u8>, StegoError> {
    let params = plan.carrier_params(ckpt)?;
    let avail_bytes = params * plan.bits_per_param as u64 / 8;
    let carriers = plan.carriers(ckpt)?;
    let bits = plan.bits_per_param as u64;

    let read_bytes = |n: u64| -> Vec<u8> {
        let want_bits = n * 8;
        let mut out = vec![0u8; n as usize];
        let mut written = 0u64;
        'outer: for tensor in &carriers {
            for value in &tensor.data {
                if written >= want_bits {
                    break 'outer;
                }
                let word = value.to_bits();
                let take = bits.min(want_bits - written);
                for b in 0..take {
                    let bit = (word >> b) & 1;
                    let idx = written + b;
                    out[(idx / 8) as usize] |= (bit as u8) << (idx % 8);
                }
                written += take;
            }
        }
        out
    };

    if avail_bytes < FRAME_OVERHEAD {
        return Err(StegoError::NoPayload(format!(
            "carrier holds only {avail_bytes} bytes, below frame overhead"
        )));
    }
    let header = read_bytes(FRAME_OVERHEAD);
    if header[..4] != FRAME_MAGIC {
        return Err(StegoError::NoPayload(
            "frame magic absent in carrier LSBs".into(),
        ));
    }
    let len = u64::from_le_bytes(header[6..14].try_into().unwrap());
    if len > avail_bytes - FRAME_OVERHEAD {
        return Err(StegoError::CorruptPayload(format!(
            "declared payload length {len} exceeds carrier capacity {}",
            avail_bytes - FRAME_OVERHEAD
        )));
    }
    let frame = read_bytes(FRAME_OVERHEAD + len);
    parse_frame(&frame).map(|(_, p)| p)
}

// ------------------------------------------------------------------ DICT

/// Stores the framed payload as a metadata entry under `key`.
pub fn embed_dict(ckpt: &Checkpoint, key: &str, payload: &[u8]) -> Result<Checkpoint, StegoError> {
    if key.is_empty() {
        return Err(StegoError::Plan("dict key must be non-empty".into()));
    }
    if ckpt.find_extra(key).is_some() {
        return Err(StegoError::Schema(format!(
            "extras key '{key}' already present"
        )));
    }
    let mut out = ckpt.clone();
    out.extras
        .push((key.to_string(), frame_payload(payload, 0)));
    Ok(out)
}

pub fn extract_dict(ckpt: &Checkpoint, key: &str) -> Result<Vec<u8>, StegoError> {
    let value = ckpt
        .find_extra(key)
        .ok_or_else(|| StegoError::NoPayload(format!("extras key '{key}' absent")))?;
    parse_frame(value).map(|(_, p)| p)
}

// ------------------------------------------------------------------ VALUE

/// Name given to the payload tensor riding alongside carrier `base`;
/// mimics auxiliary optimizer state.
pub fn value_tensor_name(base: &str) -> String {
    format!("{base}.moment1")
}

/// Stores raw f32 values as new tensors named after the plan's carriers
/// (`<name>.moment1`), scaled by the plan's power-of-two `value_scale`.
/// Values are split into near-equal chunks across the plan names (no empty
/// chunks). Every scaled value must be zero or normal — overflow and
/// underflow are rejected rather than silently losing exactness.
pub fn embed_values(
    ckpt: &Checkpoint,
    plan: &EmbedPlan,
    values: &[f32],
) -> Result<Checkpoint, StegoError> {
    plan.carriers(ckpt)?; // carrier names must exist
    if values.is_empty() {
        return Err(StegoError::Plan("no values to embed".into()));
    }
    let scale = plan.value_scale;
    let scaled: Vec<f32> = values
        .iter()
        .map(|&v| {
            let s = v * scale;
            if s == 0.0 || s.is_normal() {
                Ok(s)
            } else {
                Err(StegoError::Range(format!(
                    "value {v} times scale {scale} is not representable as a \
                     zero-or-normal f32"
                )))
            }
        })
        .collect::<Result<_, _>>()?;

    let chunks = plan.tensor_names.len().min(scaled.len());
    let mut out = ckpt.clone();
    let mut offset = 0usize;
    for (i, name) in plan.tensor_names.iter().take(chunks).enumerate() {
        // Near-equal split: earlier chunks take the remainder.
        let len = scaled.len() / chunks + usize::from(i < scaled.len() % chunks);
        let tname = value_tensor_name(name);
        if out.find_tensor(&tname).is_some() {
            return Err(StegoError::Schema(format!(
                "tensor '{tname}' already present"
            )));
        }
        out.tensors.push(TensorEntry::new(
            tname,
            vec![len as u32],
            scaled[offset..offset + len].to_vec(),
        ));
        offset += len;
    }
    debug_assert_eq!(offset, scaled.len());
    Ok(out)
}

/// Recovers VALUE-channel floats. Exact (bit-equal) when the checkpoint is
/// unmodified; additive weight noise passes through scaled by
/// `1/value_scale`.
pub fn extract_values(ckpt: &Checkpoint, plan: &EmbedPlan) -> Result<Vec<f32>, StegoError> {
    let mut out = Vec::new();
    let mut found = 0usize;
    for name in &plan.tensor_names {
        let tname = value_tensor_name(name);
        match ckpt.find_tensor(&tname) {
            Some(t) => {
                found += 1;
                out.extend(t.data.iter().map(|&v| v / plan.value_scale));
            }
            None => break, // trailing names may be unused when values ran out
        }
    }
    if found == 0 {
        return Err(StegoError::NoPayload(
            "no value-channel tensors present".into(),
        ));
    }
    Ok(out)
}

/// Fills `payload` with seeded random bytes (test/demo helper).
pub fn random_payload(len: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut payload = vec![0u8; len];
    rng.fill(payload.as_mut_slice());
    payload
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn carrier(params: u64, seed: u64) -> Checkpoint {
        crate::corpus::gen_clean_checkpoint(
            params,
            crate::corpus::CarrierStructure::GridRounded,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn crc32_matches_check_vector() {
        // Standard CRC-32/ISO-HDLC check value.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn frame_roundtrip_and_overhead() {
        let framed = frame_payload(b"hello", 3);
        assert_eq!(framed.len() as u64, FRAME_OVERHEAD + 5);
        let (flags, payload) = parse_frame(&framed).unwrap();
        assert_eq!(flags, 3);
        assert_eq!(payload, b"hello");
        // Empty payloads are legal frames.
        let (_, empty) = parse_frame(&frame_payload(b"", 0)).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn frame_error_taxonomy() {
        let framed = frame_payload(b"hello", 0);
        // Too short and bad magic: nothing plausibly present.
        assert!(matches!(
            parse_frame(&framed[..10]),
            Err(StegoError::NoPayload(_))
        ));
        let mut bad_magic = framed.clone();
        bad_magic[0] ^= 0xFF;
        assert!(matches!(
            parse_frame(&bad_magic),
            Err(StegoError::NoPayload(_))
        ));
        // Version, length, CRC problems: a frame is there but damaged.
        let mut bad_version = framed.clone();
        bad_version[4] = 9;
        assert!(matches!(
            parse_frame(&bad_version),
            Err(StegoError::CorruptPayload(_))
        ));
        let mut bad_len = framed.clone();
        bad_len[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            parse_frame(&bad_len),
            Err(StegoError::CorruptPayload(_))
        ));
        let mut bad_body = framed.clone();
        *bad_body.last_mut().unwrap() ^= 1;
        assert!(matches!(
            parse_frame(&bad_body),
            Err(StegoError::CorruptPayload(_))
        ));
    }

    #[test]
    fn capacity_formula() {
        let ckpt = carrier(100, 1);
        let plan = EmbedPlan::all_tensors(&ckpt).unwrap();
        // 100 params * 16 bits / 8 = 200 raw bytes, minus 18 frame bytes.
        assert_eq!(lsb_capacity(&ckpt, &plan).unwrap(), 182);
        let plan1 = EmbedPlan::lsb_bits(plan.tensor_names.clone(), 1).unwrap();
        // 100 bits -> 12 raw bytes, below overhead: zero capacity.
        assert_eq!(lsb_capacity(&ckpt, &plan1).unwrap(), 0);
    }

    #[test]
    fn lsb_roundtrip_and_bit_containment() {
        let ckpt = carrier(5_000, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for bits in [1u8, 7, 16, 23] {
            let plan =
                EmbedPlan::lsb_bits(ckpt.tensors.iter().map(|t| t.name.clone()).collect(), bits)
                    .unwrap();
            let cap = lsb_capacity(&ckpt, &plan).unwrap() as usize;
            for len in [0usize, 1, 17, cap] {
                let payload = random_payload(len, &mut rng);
                let stego = embed_lsb(&ckpt, &plan, &payload).unwrap();
                assert_eq!(
                    extract_lsb(&stego, &plan).unwrap(),
                    payload,
                    "bits={bits} len={len}"
                );
                // No bit outside the low `bits` may change.
                for (a, b) in ckpt.tensors.iter().zip(&stego.tensors) {
                    for (x, y) in a.data.iter().zip(&b.data) {
                        assert_eq!(x.to_bits() >> bits, y.to_bits() >> bits);
                        assert!(y.is_finite());
                    }
                }
            }
        }
    }

    #[test]
    fn lsb_partial_final_word_keeps_tail_bits() {
        let ckpt = carrier(100, 3);
        let plan = EmbedPlan::all_tensors(&ckpt).unwrap();
        let stego = embed_lsb(&ckpt, &plan, b"x").unwrap();
        // Frame = 19 bytes = 152 bits; at 16 bits/word the last touched
        // word is #9 with only its low 8 bits overwritten.
        let orig: Vec<f32> = ckpt
            .tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect();
        let new: Vec<f32> = stego
            .tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect();
        assert_eq!(orig[9].to_bits() >> 8, new[9].to_bits() >> 8);
        assert_eq!(
            orig[10..],
            new[10..],
            "words past the frame must be untouched"
        );
    }

    #[test]
    fn lsb_relative_error_bounded() {
        let ckpt = carrier(10_000, 4);
        let plan = EmbedPlan::all_tensors(&ckpt).unwrap();
        let payload = random_payload(
            lsb_capacity(&ckpt, &plan).unwrap() as usize,
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        let stego = embed_lsb(&ckpt, &plan, &payload).unwrap();
        let bound = ((plan.bits_per_param as i32 - 23) as f64).exp2(); // 2^(bits-23)
        for (a, b) in ckpt.tensors.iter().zip(&stego.tensors) {
            for (x, y) in a.data.iter().zip(&b.data) {
                if x.is_normal() {
                    let rel = ((*x as f64 - *y as f64) / *x as f64).abs();
                    assert!(rel < bound, "relative error {rel} at {x} -> {y}");
                }
            }
        }
    }

    #[test]
    fn lsb_capacity_enforced() {
        let ckpt = carrier(100, 6);
        let plan = EmbedPlan::all_tensors(&ckpt).unwrap();
        let cap = lsb_capacity(&ckpt, &plan).unwrap() as usize;
        assert!(matches!(
            embed_lsb(&ckpt, &plan, &vec![0u8; cap + 1]),
            Err(StegoError::Capacity(_))
        ));
    }

    #[test]
    fn lsb_plan_errors() {
        let ckpt = carrier(100, 7);
        assert!(matches!(EmbedPlan::lsb(vec![]), Err(StegoError::Plan(_))));
        assert!(matches!(
            EmbedPlan::lsb(vec!["a".into(), "a".into()]),
            Err(StegoError::Plan(_))
        ));
        assert!(matches!(
            EmbedPlan::lsb_bits(vec!["a".into()], 0),
            Err(StegoError::Plan(_))
        ));
        assert!(matches!(
            EmbedPlan::lsb_bits(vec!["a".into()], 24),
            Err(StegoError::Plan(_))
        ));
        let ghost = EmbedPlan::lsb(vec!["ghost".into()]).unwrap();
        assert!(matches!(
            embed_lsb(&ckpt, &ghost, b""),
            Err(StegoError::Plan(_))
        ));
    }

    #[test]
    fn lsb_extract_on_clean_carrier_reports_no_payload() {
        // Grid-rounded weights: low bits are structured, magic virtually
        // impossible; this must be NoPayload, not a panic.
        let ckpt = carrier(10_000, 8);
        let plan = EmbedPlan::all_tensors(&ckpt).unwrap();
        assert!(matches!(
            extract_lsb(&ckpt, &plan),
            Err(StegoError::NoPayload(_))
        ));
    }

    #[test]
    fn lsb_plan_order_matters() {
        let ckpt = carrier(200_000, 9);
        assert!(ckpt.tensors.len() >= 2);
        let fwd: Vec<String> = ckpt.tensors.iter().map(|t| t.name.clone()).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        let plan_fwd = EmbedPlan::lsb(fwd).unwrap();
        let plan_rev = EmbedPlan::lsb(rev).unwrap();
        let payload = b"ordering test".to_vec();
        let stego = embed_lsb(&ckpt, &plan_fwd, &payload).unwrap();
        assert_eq!(extract_lsb(&stego, &plan_fwd).unwrap(), payload);
        assert!(extract_lsb(&stego, &plan_rev).is_err());
    }

    #[test]
    fn dict_roundtrip_and_size_additivity() {
        let ckpt = carrier(1_000, 10);
        let payload = random_payload(333, &mut ChaCha8Rng::seed_from_u64(11));
        let stego = embed_dict(&ckpt, "opt_state", &payload).unwrap();
        assert_eq!(extract_dict(&stego, "opt_state").unwrap(), payload);
        // total_size grows by exactly key + frame + per-entry overhead.
        let expect = "opt_state".len() as u64
            + FRAME_OVERHEAD
            + payload.len() as u64
            + crate::container::EXTRA_OVERHEAD_BYTES;
        assert_eq!(stego.total_size() - ckpt.total_size(), expect);
        // Tensors are untouched.
        assert_eq!(stego.tensors, ckpt.tensors);
    }

    #[test]
    fn dict_collision_and_absence() {
        let ckpt = carrier(100, 12);
        let once = embed_dict(&ckpt, "k", b"a").unwrap();
        assert!(matches!(
            embed_dict(&once, "k", b"b"),
            Err(StegoError::Schema(_))
        ));
        assert!(matches!(
            extract_dict(&ckpt, "k"),
            Err(StegoError::NoPayload(_))
        ));
        assert!(matches!(
            embed_dict(&ckpt, "", b""),
            Err(StegoError::Plan(_))
        ));
        // A damaged frame under the key is CorruptPayload.
        let mut broken = once.clone();
        let last = broken.extras[0].1.len() - 1;
        broken.extras[0].1[last] ^= 1;
        assert!(matches!(
            extract_dict(&broken, "k"),
            Err(StegoError::CorruptPayload(_))
        ));
    }

    #[test]
    fn value_roundtrip_is_bit_exact() {
        let ckpt = carrier(50_000, 13);
        let names: Vec<String> = ckpt.tensors.iter().map(|t| t.name.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for scale in [0.5f32, 1.0, 1024.0, 0.0078125] {
            let plan = EmbedPlan::values(names.clone(), scale).unwrap();
            let values: Vec<f32> = (0..1003).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
            let stego = embed_values(&ckpt, &plan, &values).unwrap();
            let back = extract_values(&stego, &plan).unwrap();
            assert_eq!(back.len(), values.len());
            for (a, b) in values.iter().zip(&back) {
                assert_eq!(a.to_bits(), b.to_bits(), "scale {scale}");
            }
        }
    }

    #[test]
    fn value_chunks_are_balanced_and_named() {
        let ckpt = carrier(200_000, 15);
        let names: Vec<String> = ckpt.tensors.iter().map(|t| t.name.clone()).collect();
        assert!(names.len() >= 3);
        let plan = EmbedPlan::values(names.clone(), 1.0).unwrap();
        let values = vec![0.25f32; 10];
        let stego = embed_values(&ckpt, &plan, &values).unwrap();
        let added: Vec<&TensorEntry> = stego
            .tensors
            .iter()
            .filter(|t| t.name.ends_with(".moment1"))
            .collect();
        let chunks = names.len().min(values.len());
        assert_eq!(added.len(), chunks);
        let lens: Vec<usize> = added.iter().map(|t| t.data.len()).collect();
        assert!(lens.iter().all(|&l| l > 0), "no empty chunks");
        assert_eq!(lens.iter().sum::<usize>(), values.len());
        assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        stego.validate().unwrap();
    }

    #[test]
    fn value_errors() {
        let ckpt = carrier(10_000, 16);
        let names: Vec<String> = ckpt.tensors.iter().map(|t| t.name.clone()).collect();
        // Non-power-of-two scales rejected at plan construction.
        assert!(matches!(
            EmbedPlan::values(names.clone(), 3.0),
            Err(StegoError::Plan(_))
        ));
        assert!(matches!(
            EmbedPlan::values(names.clone(), -2.0),
            Err(StegoError::Plan(_))
        ));
        assert!(matches!(
            EmbedPlan::values(names.clone(), 0.0),
            Err(StegoError::Plan(_))
        ));
        let plan = EmbedPlan::values(names.clone(), 1.0).unwrap();
        // Overflow and underflow are range errors.
        assert!(matches!(
            embed_values(
                &ckpt,
                &EmbedPlan::values(names.clone(), 1024.0).unwrap(),
                &[f32::MAX]
            ),
            Err(StegoError::Range(_))
        ));
        assert!(matches!(
            embed_values(&ckpt, &plan, &[1e-40]),
            Err(StegoError::Range(_))
        ));
        assert!(matches!(
            embed_values(&ckpt, &plan, &[]),
            Err(StegoError::Plan(_))
        ));
        // Name collision.
        let stego = embed_values(&ckpt, &plan, &[1.0, 2.0]).unwrap();
        assert!(matches!(
            embed_values(&stego, &plan, &[3.0]),
            Err(StegoError::Schema(_))
        ));
        // Extraction without tensors.
        assert!(matches!(
            extract_values(&ckpt, &plan),
            Err(StegoError::NoPayload(_))
        ));
    }
}
