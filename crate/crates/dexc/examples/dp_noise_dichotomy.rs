//! The defender's noise mitigation, and why it splits the hiding channels
//! into two families.
//!
//! Zero-mean Gaussian noise on exported parameters (the differential-privacy
//! style mitigation) destroys *bit-pattern* channels abruptly: one flipped
//! mantissa bit anywhere in the frame breaks the CRC, so LSB extraction
//! collapses from "always works" to "never works" within a decade of sigma.
//! The *value* channel degrades gracefully instead: coefficients are real
//! numbers, so noise just adds reconstruction error, and the images survive
//! with smoothly falling PSNR. DICT entries are not parameters at all and
//! ignore the noise entirely.
//!
//! Run with: `cargo run --release --example dp_noise_dichotomy`

use dexc::corpus::{CarrierStructure, DynamicRange, PhantomKind};
use dexc::privacy::Scenario;
use dexc::stego::Channel;
use dexc::{resilience_sweep, CodecProfile, PhantomSpec, SweepConfig};

/// Per-sigma summary: (sigma, recovery rate, mean PSNR when reconstructable).
type SigmaSummary = (f64, f64, Option<f64>);

fn sweep(channel: Channel) -> Result<Vec<SigmaSummary>, Box<dyn std::error::Error>> {
    let cfg = SweepConfig {
        scenario: Scenario::Ep,
        profile: CodecProfile::new(25, 20, 0.004, 0)?,
        channel,
        sigmas: vec![0.0, 0.001, 0.002, 0.003, 0.01, 0.03],
        trials: 3,
        images: vec![PhantomSpec::new(
            PhantomKind::Composite,
            176,
            176,
            1,
            DynamicRange::CtLike,
        )],
        carrier_params: 150_000,
        carrier_structure: CarrierStructure::GridRounded,
        bits_per_param: 16,
        value_scale: 1.0,
        dict_key: "opt.state".into(),
        seed: 7,
    };
    let result = resilience_sweep(&cfg)?;

    // Collapse trials: recovery rate and mean PSNR per sigma.
    let mut table = Vec::new();
    for &sigma in &cfg.sigmas {
        let cells: Vec<_> = result.rows.iter().filter(|r| r.sigma == sigma).collect();
        let ok = cells.iter().filter(|r| r.crc_ok).count() as f64 / cells.len() as f64;
        let psnrs: Vec<f64> = cells.iter().filter_map(|r| r.psnr_db).collect();
        let psnr = (!psnrs.is_empty()).then(|| psnrs.iter().sum::<f64>() / psnrs.len() as f64);
        table.push((sigma, ok, psnr));
    }
    Ok(table)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lsb = sweep(Channel::Lsb)?;
    let dict = sweep(Channel::Dict)?;
    let value = sweep(Channel::Value)?;

    println!(
        "{:>8} | {:>11} {:>9} | {:>11} {:>9} | {:>11} {:>9}",
        "sigma", "lsb ok", "psnr", "dict ok", "psnr", "value ok", "psnr"
    );
    let fmt_psnr = |p: Option<f64>| p.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    for i in 0..lsb.len() {
        println!(
            "{:>8} | {:>11.2} {:>9} | {:>11.2} {:>9} | {:>11.2} {:>9}",
            lsb[i].0,
            lsb[i].1,
            fmt_psnr(lsb[i].2),
            dict[i].1,
            fmt_psnr(dict[i].2),
            value[i].1,
            fmt_psnr(value[i].2),
        );
    }

    println!();
    println!("LSB recovery collapses between sigma 0.001 and 0.01 (CRC breaks all at");
    println!("once); DICT ignores parameter noise; VALUE keeps decoding with PSNR");
    println!("falling smoothly. Noise alone does not close the value channel.");
    Ok(())
}
