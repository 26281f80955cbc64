//! Orthonormal 8x8 DCT-II, built from hardcoded cosine constants so the
//! transform is bit-identical across platforms (no libm dependence), plus
//! the JPEG zigzag scan order.

/// cos(k*pi/16) for k = 0..=8, correctly rounded f64 literals.
const COS16: [f64; 9] = [
    1.0,
    0.9807852804032304,
    0.9238795325112867,
    0.8314696123025452,
    std::f64::consts::FRAC_1_SQRT_2,
    0.5555702330196022,
    0.3826834323650898,
    0.19509032201612827,
    0.0,
];

/// cos(m*pi/16) for any integer m, by symmetry reduction mod 32.
fn cos16(m: usize) -> f64 {
    let m = m % 32;
    match m {
        0..=8 => COS16[m],
        9..=16 => -COS16[16 - m],
        17..=24 => -COS16[m - 16],
        _ => COS16[32 - m],
    }
}

/// Orthonormal DCT-II basis: `BASIS[k][n] = a_k * cos((2n+1) k pi / 16)`
/// with `a_0 = sqrt(1/8)`, `a_k = 1/2`.
fn basis() -> &'static [[f64; 8]; 8] {
    use std::sync::OnceLock;
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let a0 = 0.35355339059327373; // sqrt(1/8)
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                let a = if k == 0 { a0 } else { 0.5 };
                *v = a * cos16(k * (2 * n + 1));
            }
        }
        c
    })
}

/// JPEG zigzag scan: `ZIGZAG[i]` is the raster index (row*8+col) of the
/// i-th scanned coefficient; index 0 is DC.
pub(crate) const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Forward transform of a raster-order 8x8 block: X = C f C^T.
pub(crate) fn forward_block(f: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut t = [0.0f64; 64]; // t[u][x] = sum_y c[u][y] f[y][x]
    for u in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += c[u][y] * f[y * 8 + x];
            }
            t[u * 8 + x] = acc;
        }
    }
    let mut out = [0.0f64; 64]; // out[u][v] = sum_x t[u][x] c[v][x]
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += t[u * 8 + x] * c[v][x];
            }
            out[u * 8 + v] = acc;
        }
    }
    out
}

/// Inverse transform: f = C^T X C (exact inverse by orthonormality).
pub(crate) fn inverse_block(x: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut t = [0.0f64; 64]; // t[y][v] = sum_u c[u][y] x[u][v]
    for y in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += c[u][y] * x[u * 8 + v];
            }
            t[y * 8 + v] = acc;
        }
    }
    let mut out = [0.0f64; 64]; // out[y][x] = sum_v t[y][v] c[v][x]
    for y in 0..8 {
        for xx in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += t[y * 8 + v] * c[v][xx];
            }
            out[y * 8 + xx] = acc;
        }
    }
    out
}
