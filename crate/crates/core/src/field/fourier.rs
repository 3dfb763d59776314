use std::f64::consts::PI;

/// Fourier features of `x` with `k` octaves starting at exponent `offset`.
///
/// Output length is `2 k d`, ordered by coordinate first, then frequency, with the cosine
/// before the sine: `[cos(2^ω π x_0), sin(2^ω π x_0), ...]`.
pub fn fourier_features(x: &[f64], k: usize, offset: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * k * x.len());
    for &xj in x {
        for w in 0..k {
            let f = frequency(offset, w);
            let (s, c) = (f * xj).sin_cos();
            out.push(c);
            out.push(s);
        }
    }
    out
}

/// Column `j` of the Jacobian of [`fourier_features`] (derivative w.r.t. `x_j`).
pub fn fourier_jacobian(x: &[f64], k: usize, offset: u32, j: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * k * x.len()];
    for w in 0..k {
        let f = frequency(offset, w);
        let (s, c) = (f * x[j]).sin_cos();
        let base = 2 * (j * k + w);
        out[base] = -f * s;
        out[base + 1] = f * c;
    }
    out
}

#[inline]
fn frequency(offset: u32, w: usize) -> f64 {
    2f64.powi(offset as i32 + w as i32) * PI
}
