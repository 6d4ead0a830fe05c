//! Single-sample kernels over `C×H×W` planes stored row-major.

/// Unfolds the 3×3 pad-1 neighbourhoods of `input` into a `(c_in·9)×(h·w)`
/// matrix, row `ic·9 + ky·3 + kx`.
fn im2col(input: &[f64], c_in: usize, h: usize, w: usize, cols: &mut [f64]) {
    let plane = h * w;
    cols.fill(0.0);
    for ic in 0..c_in {
        let src = &input[ic * plane..(ic + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ic * 9 + ky * 3 + kx) * plane..][..plane];
                let (x0, x1) = col_range(kx, w);
                for y in row_range(ky, h) {
                    let sy = y + ky - 1;
                    row[y * w + x0..y * w + x1].copy_from_slice(&src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, d_input: &mut [f64]) {
    let plane = h * w;
    for ic in 0..c_in {
        let dst = &mut d_input[ic * plane..(ic + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ic * 9 + ky * 3 + kx) * plane..][..plane];
                let (x0, x1) = col_range(kx, w);
                for y in row_range(ky, h) {
                    let sy = y + ky - 1;
                    let d = &mut dst[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    for (d, &g) in d.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// `c = a·b + beta·c` for row-major `a` (m×k, or its transpose when
/// `trans_a`), `b` (k×n, or transposed when `trans_b`) and `c` (m×n).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the assertion above keeps every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 3×3 convolution with zero padding 1: `out = bias + Σ w·x`.
pub(crate) fn conv3x3_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let plane = h * w;
    let c_out = bias.len();
    debug_assert_eq!(weights.len(), c_out * c_in * 9);
    debug_assert_eq!(out.len(), c_out * plane);
    let mut cols = vec![0.0; c_in * 9 * plane];
    im2col(input, c_in, h, w, &mut cols);
    for (dst, &b) in out.chunks_exact_mut(plane).zip(bias) {
        dst.fill(b);
    }
    gemm(c_out, c_in * 9, plane, weights, false, &cols, false, 1.0, out);
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the
/// input gradient of a 3×3 pad-1 convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_input: Option<&mut [f64]>,
) {
    let plane = h * w;
    let c_out = d_bias.len();
    let k = c_in * 9;
    for (db, g) in d_bias.iter_mut().zip(d_out.chunks_exact(plane)) {
        *db += g.iter().sum::<f64>();
    }
    let mut cols = vec![0.0; k * plane];
    im2col(input, c_in, h, w, &mut cols);
    gemm(c_out, plane, k, d_out, false, &cols, true, 1.0, d_weights);
    if let Some(di) = d_input {
        gemm(k, c_out, plane, weights, true, d_out, false, 0.0, &mut cols);
        col2im(&cols, c_in, h, w, di);
    }
}

/// Output rows `y` whose source row `y + ky - 1` lies inside the image.
#[inline]
fn row_range(ky: usize, h: usize) -> std::ops::Range<usize> {
    match ky {
        0 => 1..h,
        1 => 0..h,
        _ => 0..h - 1,
    }
}

#[inline]
fn col_range(kx: usize, w: usize) -> (usize, usize) {
    match kx {
        0 => (1, w),
        1 => (0, w),
        _ => (0, w - 1),
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// 2×2 stride-2 max pool over each plane; ties go to the first position in
/// row-major order. Writes the flat source index of each winner to `argmax`.
pub(crate) fn maxpool2_forward(
    input: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    out: &mut [f64],
    argmax: &mut [u32],
) {
    let (ho, wo) = (h / 2, w / 2);
    for c in 0..channels {
        let src = &input[c * h * w..(c + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_i = (2 * oy) * w + 2 * ox;
                let mut best = src[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > best {
                        best = src[i];
                        best_i = i;
                    }
                }
                let o = c * ho * wo + oy * wo + ox;
                out[o] = best;
                argmax[o] = (c * h * w + best_i) as u32;
            }
        }
    }
}

pub(crate) fn maxpool2_backward(d_out: &[f64], argmax: &[u32], d_input: &mut [f64]) {
    for (&g, &i) in d_out.iter().zip(argmax) {
        d_input[i as usize] += g;
    }
}
