//! Discretized Gaussian bin models over a 16-bit frequency total, plus the
//! generic [`SymbolModel`] used by the range coder.
//!
//! A bin model assigns `p(k) ~ Phi((k+1/2)*d/s) - Phi((k-1/2)*d/s)` to the
//! integer symbols `k in [-K, K]`, folds both tails into the edge bins,
//! floors every frequency at 1 (so any clipped symbol stays codable), and
//! renormalizes so the frequencies sum to exactly 2^16. Integerization is
//! mirrored: the quantized table is built for `k >= 0` and reflected, so
//! `freq(-k) == freq(k)` holds exactly, not just approximately.

use super::CodecError;

/// Total frequency mass of every model: 2^16.
pub const TOTAL_FREQ: u32 = 1 << 16;

/// Abramowitz & Stegun 7.1.26 rational approximation of erf, extended to
/// negative arguments by oddness. Max absolute error 1.5e-7.
pub fn erf_approx(x: f64) -> f64 {
    const P: f64 = 0.3275911;
    const A1: f64 = 0.254829592;
    const A2: f64 = -0.284496736;
    const A3: f64 = 1.421413741;
    const A4: f64 = -1.453152027;
    const A5: f64 = 1.061405429;
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF via [`erf_approx`].
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf_approx(x / std::f64::consts::SQRT_2))
}

/// An integer-symbol probability model with frequencies summing to
/// [`TOTAL_FREQ`]. Symbols are the contiguous range
/// `offset ..= offset + n - 1`; every frequency is at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolModel {
    offset: i32,
    /// cdf[i] = cumulative frequency before symbol index i; cdf[n] = 2^16.
    cdf: Vec<u32>,
}

impl SymbolModel {
    /// Build a model from per-symbol frequencies. Panics if any frequency
    /// is zero or the sum is not exactly 2^16 (internal invariant; all
    /// public constructors guarantee it).
    pub(crate) fn from_freqs(offset: i32, freqs: &[u32]) -> SymbolModel {
        assert!(!freqs.is_empty());
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc: u32 = 0;
        cdf.push(0);
        for &f in freqs {
            assert!(f >= 1, "zero frequency");
            acc = acc.checked_add(f).expect("frequency overflow");
            cdf.push(acc);
        }
        assert_eq!(acc, TOTAL_FREQ, "frequencies must sum to 2^16");
        SymbolModel { offset, cdf }
    }

    /// Build a model from per-symbol frequencies for a custom alphabet
    /// `offset ..= offset + freqs.len() - 1`. Every frequency must be at
    /// least 1 and the sum must be exactly 2^16.
    pub fn from_frequencies(offset: i32, freqs: &[u32]) -> Result<SymbolModel, CodecError> {
        if freqs.is_empty() {
            return Err(CodecError::Profile("empty alphabet".into()));
        }
        if freqs.contains(&0) {
            return Err(CodecError::Profile("zero frequency not codable".into()));
        }
        let sum: u64 = freqs.iter().map(|&f| f as u64).sum();
        if sum != TOTAL_FREQ as u64 {
            return Err(CodecError::Profile(format!(
                "frequencies sum to {sum}, need 2^16"
            )));
        }
        if offset.checked_add(freqs.len() as i32 - 1).is_none() {
            return Err(CodecError::Profile("alphabet overflows i32".into()));
        }
        Ok(Self::from_freqs(offset, freqs))
    }

    /// Uniform model over `n` symbols `0..n`, `1 <= n <= 65536`, with the
    /// rounding rule `freq_i = floor(T(i+1)/n) - floor(Ti/n)`.
    pub fn uniform(n: u32) -> SymbolModel {
        assert!(
            (1..=TOTAL_FREQ).contains(&n),
            "uniform model size out of range"
        );
        let t = TOTAL_FREQ as u64;
        let cdf: Vec<u32> = (0..=n as u64).map(|i| (t * i / n as u64) as u32).collect();
        SymbolModel { offset: 0, cdf }
    }

    /// Number of symbols in the alphabet.
    pub fn n_symbols(&self) -> usize {
        self.cdf.len() - 1
    }

    /// Smallest representable symbol.
    pub fn min_symbol(&self) -> i32 {
        self.offset
    }

    /// Largest representable symbol.
    pub fn max_symbol(&self) -> i32 {
        self.offset + (self.n_symbols() as i32 - 1)
    }

    /// Index of `symbol` within the alphabet, if representable.
    pub fn index_of(&self, symbol: i32) -> Option<usize> {
        let i = (symbol as i64) - (self.offset as i64);
        if (0..self.n_symbols() as i64).contains(&i) {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Symbol at alphabet index `index`.
    pub fn symbol_at(&self, index: usize) -> i32 {
        debug_assert!(index < self.n_symbols());
        self.offset + index as i32
    }

    /// (cumulative frequency, frequency) of the symbol at `index`.
    pub(crate) fn cum_freq(&self, index: usize) -> (u32, u32) {
        (self.cdf[index], self.cdf[index + 1] - self.cdf[index])
    }

    /// Frequency of `symbol` (0 if out of range); exposed for tests and
    /// entropy accounting.
    pub fn freq_of(&self, symbol: i32) -> u32 {
        match self.index_of(symbol) {
            Some(i) => self.cum_freq(i).1,
            None => 0,
        }
    }

    /// Largest index whose cumulative frequency is <= `v` (the decoder's
    /// CDF search); `v` must be < 2^16.
    pub(crate) fn find(&self, v: u32) -> usize {
        debug_assert!(v < TOTAL_FREQ);
        // Binary search over cdf for the last entry <= v.
        match self.cdf.binary_search(&v) {
            Ok(mut i) => {
                // Equal cumulative values cannot occur (freqs >= 1), so i
                // is the unique index with cdf[i] == v.
                if i == self.n_symbols() {
                    i -= 1;
                }
                i
            }
            Err(ins) => ins - 1,
        }
    }
}

/// Discretized, tail-folded, floor-protected Gaussian over `[-bound, bound]`
/// with bin width `q_step` and scale `scale`.
///
/// The alphabet size `2*bound + 1` must not exceed 65536.
pub fn build_bin_model(scale: f64, q_step: f64, bound: u32) -> SymbolModel {
    let k = bound as i64;
    let n = 2 * k + 1;
    assert!(n <= TOTAL_FREQ as i64, "alphabet exceeds frequency total");
    assert!(q_step > 0.0 && q_step.is_finite(), "invalid q_step");
    let s = if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        f64::MIN_POSITIVE
    };

    // Right-edge CDF values: edge(j) = Phi((j + 1/2) * d / s).
    let edge = |j: i64| std_normal_cdf((j as f64 + 0.5) * q_step / s);

    // Ideal masses for k >= 0; the right tail folds into bin K, and by
    // mirroring the left tail folds into -K.
    let mut q = vec![0.0f64; (k + 1) as usize];
    q[0] = 2.0 * edge(0) - 1.0;
    for j in 1..k {
        q[j as usize] = edge(j) - edge(j - 1);
    }
    if k >= 1 {
        q[k as usize] = 1.0 - edge(k - 1);
    }
    for v in q.iter_mut() {
        if !v.is_finite() || *v < 0.0 {
            *v = 0.0;
        }
    }

    let total: f64 = q[0] + 2.0 * q[1..].iter().sum::<f64>();
    let r = (TOTAL_FREQ as i64 - n) as u64; // mass left after the 1-floors
    let scale_to_int = if total > 0.0 { r as f64 / total } else { 0.0 };

    // g[j] = floor share of r for |symbol| == j.
    let g: Vec<u64> = q.iter().map(|&p| (p * scale_to_int) as u64).collect();
    let used: u64 = g[0] + 2 * g[1..].iter().sum::<u64>();
    let leftover = r - used; // floors guarantee used <= r

    let mut freqs = vec![0u32; n as usize];
    for j in 0..=k {
        let f = 1 + g[j as usize] as u32;
        freqs[(k + j) as usize] = f;
        freqs[(k - j) as usize] = f;
    }
    freqs[k as usize] += leftover as u32; // center absorbs the remainder

    SymbolModel::from_freqs(-(bound as i32), &freqs)
}
