//! The defender's toolbox against checkpoint exfiltration: size filtering,
//! extras scanning, LSB randomness scoring, and the fine-tuning audit.
//!
//! Shows each detector against a clean carrier and against stego variants,
//! including the detectors' honest limits: the LSB scan separates payload
//! bits from *structured* parameter bits but is near chance when the clean
//! carrier's own low bits are already uniform, and it is advisory only.
//!
//! Run with: `cargo run --release --example defender_audit`

use dexc::corpus::CarrierStructure;
use dexc::defender::{auc, render_audit_text};
use dexc::privacy::NoiseScope;
use dexc::stego::{lsb_capacity, random_payload};
use dexc::{
    add_noise, embed_dict, embed_lsb, finetune_audit, full_scan, gen_clean_checkpoint, lsb_scan,
    Checkpoint, EmbedPlan, NoiseSpec, TensorEntry,
};
use rand::SeedableRng;

fn embed_full(ckpt: &Checkpoint, seed: u64) -> Checkpoint {
    let plan = EmbedPlan::all_tensors(ckpt).unwrap();
    let cap = lsb_capacity(ckpt, &plan).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let payload = random_payload(cap as usize, &mut rng);
    embed_lsb(ckpt, &plan, &payload).unwrap()
}

/// A one-tensor checkpoint large enough for stable per-tensor statistics.
fn single_tensor(
    structure: CarrierStructure,
    seed: u64,
) -> Result<Checkpoint, Box<dyn std::error::Error>> {
    let mut ckpt = gen_clean_checkpoint(4_000, structure, seed)?;
    let values: Vec<f32> = ckpt.tensors.iter().flat_map(|t| t.data.clone()).collect();
    let n = values.len() as u32;
    ckpt.tensors = vec![TensorEntry::new("w", vec![n], values)];
    Ok(ckpt)
}

fn max_score(ckpt: &Checkpoint) -> Result<f64, Box<dyn std::error::Error>> {
    Ok(lsb_scan(ckpt, 16)?
        .iter()
        .map(|f| f.score)
        .fold(0.0, f64::max))
}

fn summarize(report: &dexc::ScanReport) {
    println!(
        "{}: size {} (flag {}), extras findings {}, max lsb score {:.4} -> verdict {}",
        report.checkpoint_id,
        report.size_bytes,
        report.size_flag,
        report.extras_findings.len(),
        report.lsb_score(),
        report.verdict().name(),
    );
    for f in &report.extras_findings {
        println!(
            "  extras key={} size={} verdict={}",
            f.key,
            f.size,
            f.verdict.name()
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let carrier = gen_clean_checkpoint(400_000, CarrierStructure::GridRounded, 11)?;

    // --- detector 1+2: size filter and extras scan, via the combined scan.
    // (`render_scan_text` produces the full per-tensor report file; here we
    // print one-line summaries.)
    println!("=== combined scans ===");
    let dict_stego = embed_dict(&carrier, "opt.state", &vec![0xAB; 4096])?;
    summarize(&full_scan(&dict_stego, "dict_stego.mtc", 1 << 30, &[], 16)?);
    summarize(&full_scan(&carrier, "carrier.mtc", 1 << 30, &[], 16)?);

    // --- detector 3: LSB randomness scan. Payload bits look *random*;
    // grid-rounded parameters have highly regular low bits, so the two
    // populations separate cleanly — when the carrier is structured.
    println!("\n=== LSB randomness scan ===");
    let lsb_stego = embed_full(&carrier, 99);
    let clean_max = max_score(&carrier)?;
    let stego_max = max_score(&lsb_stego)?;
    println!("max payload-likeness score: clean {clean_max:.4}, full-LSB stego {stego_max:.4}");

    // Calibration-corpus view: one score per single-tensor checkpoint.
    for structure in [
        CarrierStructure::GridRounded,
        CarrierStructure::UniformMantissa,
    ] {
        let mut clean_scores = Vec::new();
        let mut stego_scores = Vec::new();
        for seed in 0..40 {
            let ckpt = single_tensor(structure, seed)?;
            clean_scores.push(max_score(&ckpt)?);
            stego_scores.push(max_score(&embed_full(&ckpt, seed ^ 0xA5A5))?);
        }
        println!(
            "AUC over 40/40 single-tensor corpus, {structure:?} carrier: {:.3}",
            auc(&clean_scores, &stego_scores)?
        );
    }
    println!("(uniform-mantissa low bits are already random: near-chance by design,");
    println!(" which is why the scan is advisory rather than a blocking verdict)");

    // --- detector 4: fine-tuning audit. An attacker who copies tensors
    // verbatim from a pre-approved checkpoint is caught by the
    // unchanged-parameter check; genuine training perturbs everything.
    println!("\n=== fine-tuning audit ===");
    let noise = NoiseSpec::new(1e-4, 5, NoiseScope::AllTensors)?;
    let mut finetuned = add_noise(&carrier, &noise)?;
    let copied_name = finetuned.tensors[3].name.clone();
    finetuned.tensors[3].data = carrier.tensors[3].data.clone();
    let report = finetune_audit(&carrier, &finetuned, 1e-6)?;
    print!("{}", render_audit_text(&report));
    println!("(the verbatim-copied tensor was: {copied_name})");
    Ok(())
}
