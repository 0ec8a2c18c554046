//! Dense numeric kernels shared by the tensor graph.
//!
//! All matmul variants *accumulate* into `out` so the same routines serve both
//! forward passes (caller zeroes the buffer) and gradient accumulation.
//! Loops are arranged ikj-style over contiguous rows so the compiler can
//! autovectorize them; this engine is single-threaded by design.

use crate::tensor::Scalar;

/// out[m,n] += a[m,k] * b[k,n]
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in o_row.iter_mut().zip(b_row.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,n] += transpose(a)[m,k] * b[k,n], with a stored as [k,m]
pub fn matmul_at_b_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        let b_row = &b[kk * n..(kk + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            let o_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in o_row.iter_mut().zip(b_row.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,n] += a[m,k] * transpose(b)[k,n], with b stored as [n,k]
pub fn matmul_a_bt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in o_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::ZERO;
            for (&av, &bv) in a_row.iter().zip(b_row.iter()) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Patch extraction for convolution.
///
/// Produces a row per output pixel, laid out `[n * ho * wo, cin * kh * kw]`,
/// with `pad_h`/`pad_w` pixels of zero padding per side. Column index is
/// `(ci * kh + ky) * kw + kx`.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    x: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
) -> Vec<T> {
    let ho = h + 2 * pad_h + 1 - kh;
    let wo = w + 2 * pad_w + 1 - kw;
    let ck = cin * kh * kw;
    let mut cols = vec![T::ZERO; n * ho * wo * ck];
    for ni in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((ni * ho + oy) * wo + ox) * ck;
                for ci in 0..cin {
                    let plane = (ni * cin + ci) * h * w;
                    for ky in 0..kh {
                        let iy = (oy + ky) as isize - pad_h as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = plane + iy as usize * w;
                        let dst = row + (ci * kh + ky) * kw;
                        for kx in 0..kw {
                            let ix = (ox + kx) as isize - pad_w as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[dst + kx] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch-gradient rows back onto the image.
#[allow(clippy::too_many_arguments)]
pub fn col2im_acc<T: Scalar>(
    gcols: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    gx: &mut [T],
) {
    let ho = h + 2 * pad_h + 1 - kh;
    let wo = w + 2 * pad_w + 1 - kw;
    let ck = cin * kh * kw;
    debug_assert_eq!(gcols.len(), n * ho * wo * ck);
    debug_assert_eq!(gx.len(), n * cin * h * w);
    for ni in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((ni * ho + oy) * wo + ox) * ck;
                for ci in 0..cin {
                    let plane = (ni * cin + ci) * h * w;
                    for ky in 0..kh {
                        let iy = (oy + ky) as isize - pad_h as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = plane + iy as usize * w;
                        let src = row + (ci * kh + ky) * kw;
                        for kx in 0..kw {
                            let ix = (ox + kx) as isize - pad_w as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            gx[dst + ix as usize] += gcols[src + kx];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_oracle() {
        // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 + 0.5).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect(); // 3x4
        let mut want = vec![0.0; 8];
        matmul_acc(&a, &b, 2, 3, 4, &mut want);

        // a stored transposed as 3x2
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for k in 0..3 {
                at[k * 2 + i] = a[i * 3 + k];
            }
        }
        let mut got = vec![0.0; 8];
        matmul_at_b_acc(&at, &b, 2, 3, 4, &mut got);
        for (x, y) in got.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }

        // b stored transposed as 4x3
        let mut bt = vec![0.0; 12];
        for k in 0..3 {
            for j in 0..4 {
                bt[j * 3 + k] = b[k * 4 + j];
            }
        }
        let mut got2 = vec![0.0; 8];
        matmul_a_bt_acc(&a, &bt, 2, 3, 4, &mut got2);
        for (x, y) in got2.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for any x, c (linear map adjointness)
        let (n, cin, h, w, kh, kw, pad) = (2usize, 3usize, 5usize, 4usize, 3usize, 3usize, 1usize);
        let x: Vec<f64> = (0..n * cin * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let cols = im2col(&x, n, cin, h, w, kh, kw, pad, pad);
        let c: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        let lhs: f64 = cols.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_acc(&c, n, cin, h, w, kh, kw, pad, pad, &mut back);
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "lhs={lhs} rhs={rhs}");
    }
}
