//! Size accounting: why the attack compresses before hiding, and what the
//! defender's size review can and cannot see.
//!
//! Three ways to measure the same targets:
//!
//! * raw float coefficients `|y|` (what the VALUE channel must ship),
//! * entropy-coded bytes `|Z|` (what the bit channels ship),
//! * the lossless DEFLATE baseline (what "just zip it" would cost).
//!
//! Entropy coding beats raw floats by an order of magnitude and the lossless
//! baseline severalfold, which is exactly what lets a payload hide inside a
//! modest checkpoint without moving its size past a review threshold.
//!
//! Run with: `cargo run --example size_accounting`

use dexc::codec::{decoded_to_values, lossless_baseline, write_latent_code};
use dexc::corpus::{CarrierStructure, DynamicRange, PhantomKind};
use dexc::stego::lsb_capacity;
use dexc::{
    encode_image, entropy_decode, gen_clean_checkpoint, gen_phantom, size_filter, CodecProfile,
    EmbedPlan, PhantomSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let images: Vec<_> = (1..=4u64)
        .map(|seed| {
            gen_phantom(&PhantomSpec::new(
                PhantomKind::Composite,
                256,
                256,
                seed,
                DynamicRange::CtLike,
            ))
        })
        .collect::<Result<_, _>>()?;

    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>8} {:>8}",
        "profile", "|Z| bytes", "|y| bytes", "deflate", "y/Z", "P_ratio"
    );
    for name in ["64x80-analog", "50x80-analog", "25x20-analog", "8x8-analog"] {
        let profile = CodecProfile::named(name)?;
        let (mut z, mut y, mut baseline) = (0u64, 0u64, 0u64);
        for img in &images {
            let code = encode_image(img, &profile)?;
            z += write_latent_code(&code)?.len() as u64;
            y += 4 * decoded_to_values(&entropy_decode(&code)?)?.len() as u64;
            baseline += lossless_baseline(img)?.len() as u64;
        }
        println!(
            "{:<16} {:>12} {:>12} {:>12} {:>8.2} {:>8.4}",
            name,
            z,
            y,
            baseline,
            y as f64 / z as f64,
            z as f64 / baseline as f64
        );
    }

    // How many images fit under a carrier's LSB capacity?
    println!();
    let profile = CodecProfile::named("50x80-analog")?;
    let per_image = write_latent_code(&encode_image(&images[0], &profile)?)?.len() as u64;
    for params in [500_000u64, 2_000_000, 8_000_000] {
        let carrier = gen_clean_checkpoint(params, CarrierStructure::GridRounded, 3)?;
        let capacity = lsb_capacity(&carrier, &EmbedPlan::all_tensors(&carrier)?)?;
        let size = carrier.total_size();
        println!(
            "carrier {params:>9} params = {size:>10} bytes: LSB capacity {capacity:>9} bytes \
             ≈ {:>4} images at {per_image} B each",
            capacity / per_image
        );
    }

    // The size filter sees DICT/VALUE growth but never LSB embedding.
    println!();
    let carrier = gen_clean_checkpoint(2_000_000, CarrierStructure::GridRounded, 3)?;
    let limit = carrier.total_size(); // an exact-size review gate
    println!(
        "size filter at limit {}: clean carrier flagged = {}",
        limit,
        size_filter(&carrier, limit)?
    );
    let dict = dexc::embed_dict(&carrier, "opt.state", &vec![0u8; 4096])?;
    println!(
        "after hiding 4 KiB in an extras entry: flagged = {}",
        size_filter(&dict, limit)?
    );
    Ok(())
}
