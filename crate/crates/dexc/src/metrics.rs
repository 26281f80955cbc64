//! Fidelity and rate metrics: PSNR, multi-scale SSIM, bits-per-pixel, the
//! lossy/lossless size ratio, and bit error rate.
//!
//! All image metrics treat the first argument as the reference: its recorded
//! dynamic range is the peak for PSNR and the stabilizer base for MS-SSIM.

use crate::corpus::ImagePlane;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// Mismatched or unusable dimensions.
    #[error("shape error: {0}")]
    Shape(String),
    /// A ratio against a zero denominator.
    #[error("division error: {0}")]
    Division(String),
}

/// MS-SSIM per-scale exponents (finest to coarsest), standard 5-scale set.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Minimum width/height for 5-scale MS-SSIM: four 2x downsamplings must
/// leave room for one 11x11 window (176 / 2^4 = 11).
pub const MS_SSIM_MIN_DIM: u32 = 176;

fn check_same_shape(a: &ImagePlane, b: &ImagePlane) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricsError::Shape(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width == 0 || a.height == 0 {
        return Err(MetricsError::Shape("empty image".into()));
    }
    Ok(())
}

/// Mean squared error between two same-shaped planes.
pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64, MetricsError> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.values.len() as f64)
}

/// Peak signal-to-noise ratio in dB, with the reference's recorded range as
/// peak. Identical images yield `+inf`; a zero-range reference with nonzero
/// error cannot be scored.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane) -> Result<f64, MetricsError> {
    let err = mse(reference, test)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.range() as f64;
    if peak <= 0.0 {
        return Err(MetricsError::Division(
            "zero-range reference with nonzero error".into(),
        ));
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// 11-tap Gaussian window, sigma 1.5, normalized to sum 1.
fn gaussian_taps() -> [f64; 11] {
    let mut taps = [0.0f64; 11];
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *t = (-d * d / (2.0 * 1.5 * 1.5)).exp();
        sum += *t;
    }
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// Valid-mode separable Gaussian filtering: output is (w-10) x (h-10).
fn gauss_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; 11]) -> (Vec<f64>, usize, usize) {
    let ow = w - 10;
    let oh = h - 10;
    let mut horiz = vec![0.0f64; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * plane[y * w + x + k];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// 2x2 mean downsample, truncating odd edges.
fn downsample(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let ow = w / 2;
    let oh = h / 2;
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = 0.25 * (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]);
        }
    }
    (out, ow, oh)
}

/// Mean luminance and contrast-structure terms of one SSIM scale.
fn scale_terms(
    a: &[f64],
    b: &[f64],
    w: usize,
    h: usize,
    c1: f64,
    c2: f64,
    taps: &[f64; 11],
) -> (f64, f64) {
    let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
    let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, ow, oh) = gauss_valid(a, w, h, taps);
    let (mu_b, _, _) = gauss_valid(b, w, h, taps);
    let (ea2, _, _) = gauss_valid(&a2, w, h, taps);
    let (eb2, _, _) = gauss_valid(&b2, w, h, taps);
    let (eab, _, _) = gauss_valid(&ab, w, h, taps);

    let mut l_sum = 0.0;
    let mut cs_sum = 0.0;
    let n = ow * oh;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = (ea2[i] - ma * ma).max(0.0);
        let vb = (eb2[i] - mb * mb).max(0.0);
        let cov = eab[i] - ma * mb;
        l_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += (2.0 * cov + c2) / (va + vb + c2);
    }
    (l_sum / n as f64, cs_sum / n as f64)
}

/// 5-scale MS-SSIM with the standard weights, 11x11 Gaussian windows
/// (sigma 1.5, valid mode), and stabilizers `C1 = (0.01 peak)^2`,
/// `C2 = (0.03 peak)^2` from the reference's recorded range.
///
/// Both dimensions must be at least [`MS_SSIM_MIN_DIM`].
pub fn ms_ssim(reference: &ImagePlane, test: &ImagePlane) -> Result<f64, MetricsError> {
    check_same_shape(reference, test)?;
    if reference.width < MS_SSIM_MIN_DIM || reference.height < MS_SSIM_MIN_DIM {
        return Err(MetricsError::Shape(format!(
            "{}x{} below MS-SSIM minimum {}",
            reference.width, reference.height, MS_SSIM_MIN_DIM
        )));
    }
    let peak = (reference.range() as f64).max(f64::MIN_POSITIVE);
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let taps = gaussian_taps();

    let mut a: Vec<f64> = reference.values.iter().map(|&v| v as f64).collect();
    let mut b: Vec<f64> = test.values.iter().map(|&v| v as f64).collect();
    let mut w = reference.width as usize;
    let mut h = reference.height as usize;

    let mut score = 1.0f64;
    for (scale, &weight) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (ml, mcs) = scale_terms(&a, &b, w, h, c1, c2, &taps);
        // Clamp before exponentiation: slightly negative covariances can
        // push a term below zero on adversarial inputs.
        let mcs = mcs.max(1e-12);
        if scale == MS_SSIM_WEIGHTS.len() - 1 {
            let ml = ml.max(1e-12);
            score *= (ml * mcs).powf(weight);
        } else {
            score *= mcs.powf(weight);
            let (da, dw, dh) = downsample(&a, w, h);
            let (db, _, _) = downsample(&b, w, h);
            a = da;
            b = db;
            w = dw;
            h = dh;
        }
    }
    Ok(score.min(1.0))
}

/// Bits per pixel of a `byte_size`-byte code for a `width x height` image.
pub fn bpp(byte_size: u64, width: u32, height: u32) -> Result<f64, MetricsError> {
    let pixels = width as u64 * height as u64;
    if pixels == 0 {
        return Err(MetricsError::Division("zero pixels".into()));
    }
    Ok(8.0 * byte_size as f64 / pixels as f64)
}

/// Lossy-to-lossless size ratio.
pub fn p_ratio(lossy_bytes: u64, lossless_bytes: u64) -> Result<f64, MetricsError> {
    if lossless_bytes == 0 {
        return Err(MetricsError::Division("zero lossless baseline".into()));
    }
    Ok(lossy_bytes as f64 / lossless_bytes as f64)
}

/// Bit error rate between two byte strings in `[0, 1]`. Length differences
/// count as fully erroneous trailing bytes; two empty inputs have rate 0.
pub fn ber(sent: &[u8], received: &[u8]) -> f64 {
    let longest = sent.len().max(received.len());
    if longest == 0 {
        return 0.0;
    }
    let common = sent.len().min(received.len());
    let mut diff: u64 = sent[..common]
        .iter()
        .zip(&received[..common])
        .map(|(&a, &b)| (a ^ b).count_ones() as u64)
        .sum();
    diff += 8 * (longest - common) as u64;
    diff as f64 / (8 * longest) as f64
}
