//! The full exfiltration chain: compress target images, hide the codes in a
//! model checkpoint, export it, and reconstruct the images outside.
//!
//! Demonstrates all three hiding channels and what each costs:
//!
//! * LSB — payload bits replace low mantissa bits; file size unchanged.
//! * DICT — payload rides in an opaque extras entry; file grows by the
//!   payload size (plus the frame and key overhead).
//! * VALUE — dequantized coefficients are stored as plausible optimizer
//!   tensors; file grows by 4 bytes per coefficient.
//!
//! Run with: `cargo run --example hide_in_checkpoint`

use dexc::codec::{decoded_to_values, write_latent_code};
use dexc::corpus::{CarrierStructure, DynamicRange, PhantomKind};
use dexc::stego::lsb_capacity;
use dexc::{
    embed_dict, embed_lsb, embed_values, encode_image, entropy_decode, extract_dict, extract_lsb,
    extract_values, gen_clean_checkpoint, gen_phantom, metrics, synthesize, Checkpoint,
    CodecProfile, EmbedPlan, PhantomSpec,
};

fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<usize, Box<dyn std::error::Error>> {
    Ok(dexc::container::checkpoint_to_bytes(ckpt)?.len())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // --- the targets: three phantoms, compressed to entropy-coded latents.
    let profile = CodecProfile::named("50x80-analog")?;
    let mut originals = Vec::new();
    let mut payload = Vec::new();
    for seed in 1..=3u64 {
        let img = gen_phantom(&PhantomSpec::new(
            PhantomKind::Composite,
            256,
            256,
            seed,
            DynamicRange::CtLike,
        ))?;
        let code = encode_image(&img, &profile)?;
        payload.extend_from_slice(&write_latent_code(&code)?);
        originals.push(img);
    }
    println!(
        "targets: 3 phantoms -> {} payload bytes (entropy-coded)",
        payload.len()
    );

    // --- the carrier: an innocuous clean checkpoint.
    let carrier = gen_clean_checkpoint(2_000_000, CarrierStructure::GridRounded, 7)?;
    let carrier_size = checkpoint_bytes(&carrier)?;
    println!(
        "carrier: {} tensors, {} params, {} bytes\n",
        carrier.tensors.len(),
        carrier.parameter_count(),
        carrier_size
    );

    // --- channel 1: LSB. Capacity is params * bits / 8 minus frame overhead.
    let names: Vec<String> = carrier.tensors.iter().map(|t| t.name.clone()).collect();
    let plan = EmbedPlan::lsb(names.clone())?;
    let capacity = lsb_capacity(&carrier, &plan)?;
    let stego = embed_lsb(&carrier, &plan, &payload)?;
    let recovered = extract_lsb(&stego, &plan)?;
    assert_eq!(recovered, payload, "LSB extraction must be byte-identical");
    println!(
        "LSB:   capacity {} bytes, used {} ({:.1}%); export size {} (unchanged)",
        capacity,
        payload.len(),
        100.0 * payload.len() as f64 / capacity as f64,
        checkpoint_bytes(&stego)?,
    );

    // --- channel 2: DICT. The payload hides in an extras entry.
    let stego = embed_dict(&carrier, "opt.state", &payload)?;
    let recovered = extract_dict(&stego, "opt.state")?;
    assert_eq!(recovered, payload);
    println!(
        "DICT:  export size {} (carrier {} + payload {} + framing)",
        checkpoint_bytes(&stego)?,
        carrier_size,
        payload.len(),
    );

    // --- channel 3: VALUE. Coefficients of one image become fake optimizer
    // moments; no bit trickery, so it survives parameter noise.
    let code = encode_image(&originals[0], &profile)?;
    let floats = decoded_to_values(&entropy_decode(&code)?)?;
    let value_plan = EmbedPlan::values(names, 1.0)?;
    let stego = embed_values(&carrier, &value_plan, &floats)?;
    let recovered = extract_values(&stego, &value_plan)?;
    assert_eq!(recovered, floats);
    println!(
        "VALUE: export size {} (1 image, {} coefficient floats = {} bytes)\n",
        checkpoint_bytes(&stego)?,
        floats.len(),
        4 * floats.len(),
    );

    // --- outside the gate: parse the LSB payload back into images.
    let mut offset = 0;
    for (i, original) in originals.iter().enumerate() {
        let (code, used) = dexc::codec::read_latent_code_prefix(&payload[offset..])?;
        offset += used;
        let rec = synthesize(&entropy_decode(&code)?)?;
        println!(
            "reconstructed target {}: psnr {:.2} dB, ms-ssim {:.5}",
            i + 1,
            metrics::psnr(original, &rec)?,
            metrics::ms_ssim(original, &rec)?,
        );
    }
    Ok(())
}
