//! Forward kernels shared by the free-standing primitives and the graph.

use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Marks an im2col slot that falls in the zero padding.
pub const PAD: u32 = u32::MAX;

/// `c (+)= op(a) · op(b)` where `op` optionally transposes a stored row-major matrix.
///
/// Returns the `(m, n)` extents of the product.
pub fn gemm(
    a: &[f64],
    a_dims: (usize, usize),
    ta: bool,
    b: &[f64],
    b_dims: (usize, usize),
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) -> Result<(usize, usize)> {
    let (m, k) = if ta { (a_dims.1, a_dims.0) } else { a_dims };
    let (k2, n) = if tb { (b_dims.1, b_dims.0) } else { b_dims };
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner extents differ: {m}x{k} by {k2}x{n}"
        )));
    }
    assert_eq!(c.len(), m * n, "gemm output buffer has wrong length");
    if m == 0 || n == 0 {
        return Ok((m, n));
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return Ok((m, n));
    }
    let (rsa, csa) = if ta { (1, a_dims.1) } else { (a_dims.1, 1) };
    let (rsb, csb) = if tb { (1, b_dims.1) } else { (b_dims.1, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides describe row-major buffers whose lengths were
    // checked against the extents above.
    assert!(a.len() >= a_dims.0 * a_dims.1 && b.len() >= b_dims.0 * b_dims.1);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok((m, n))
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul_t(a, false, b, false)
}

pub fn matmul_t(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Result<Tensor> {
    let ad = a.dims2()?;
    let bd = b.dims2()?;
    let m = if ta { ad.1 } else { ad.0 };
    let n = if tb { bd.0 } else { bd.1 };
    let mut out = vec![0.0; m * n];
    gemm(a.data(), ad, ta, b.data(), bd, tb, &mut out, false)?;
    Tensor::new(vec![m, n], out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (_, n) = a.dims2()?;
    let mut out = a.clone();
    if n == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Normalized rows plus the per-row reciprocal standard deviation.
pub(crate) fn standardize_rows(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, d) = x.dims2()?;
    if d < 2 {
        return Err(Error::Dimension(format!("layer norm needs d >= 2, got {d}")));
    }
    let mut xhat = vec![0.0; b * d];
    let mut rstd = vec![0.0; b];
    for (r, row) in x.data().chunks(d).enumerate() {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[r] = rs;
        for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o = (v - mean) * rs;
        }
    }
    Ok((xhat, rstd))
}

/// Per-row standardization followed by an affine map.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, d) = x.dims2()?;
    if gain.len() != d || bias.len() != d {
        return Err(Error::Dimension(format!(
            "layer norm affine params must have length {d}"
        )));
    }
    let (mut xhat, _) = standardize_rows(x)?;
    for row in xhat.chunks_mut(d) {
        for ((v, g), bb) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = *v * g + bb;
        }
    }
    Tensor::new(vec![b, d], xhat)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Output extent for same-padded strided convolution.
pub fn conv_out_extent(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// im2col gather table for a batch of channels-last images.
///
/// Input rows are `(image, y, x)` with `channels` columns; output rows are
/// `(image, oy, ox)` with `k*k*channels` columns ordered `(ky, kx, c)`.
pub fn im2col_hwc(
    images: usize,
    height: usize,
    width: usize,
    channels: usize,
    k: usize,
    stride: usize,
) -> Vec<u32> {
    let pad = (k / 2) as isize;
    let ho = conv_out_extent(height, stride);
    let wo = conv_out_extent(width, stride);
    let mut idx = Vec::with_capacity(images * ho * wo * k * k * channels);
    for img in 0..images {
        for oy in 0..ho {
            for ox in 0..wo {
                for ky in 0..k {
                    for kx in 0..k {
                        let y = (oy * stride) as isize + ky as isize - pad;
                        let x = (ox * stride) as isize + kx as isize - pad;
                        let inside = y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width;
                        for c in 0..channels {
                            idx.push(if inside {
                                (((img * height + y as usize) * width + x as usize) * channels + c) as u32
                            } else {
                                PAD
                            });
                        }
                    }
                }
            }
        }
    }
    idx
}

/// im2col gather table for a single channels-first image, columns ordered `(c, ky, kx)`.
pub fn im2col_chw(channels: usize, height: usize, width: usize, k: usize, stride: usize) -> Vec<u32> {
    let pad = (k / 2) as isize;
    let ho = conv_out_extent(height, stride);
    let wo = conv_out_extent(width, stride);
    let mut idx = Vec::with_capacity(ho * wo * channels * k * k);
    for oy in 0..ho {
        for ox in 0..wo {
            for c in 0..channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let y = (oy * stride) as isize + ky as isize - pad;
                        let x = (ox * stride) as isize + kx as isize - pad;
                        let inside = y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width;
                        idx.push(if inside {
                            ((c * height + y as usize) * width + x as usize) as u32
                        } else {
                            PAD
                        });
                    }
                }
            }
        }
    }
    idx
}

/// Transpose table taking a `rows x cols` matrix to `cols x rows`.
pub fn transpose_index(rows: usize, cols: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            idx.push((r * cols + c) as u32);
        }
    }
    idx
}

pub fn gather(src: &[f64], index: &[u32]) -> Vec<f64> {
    index
        .iter()
        .map(|&i| if i == PAD { 0.0 } else { src[i as usize] })
        .collect()
}

pub(crate) fn validate_conv(x: &Tensor, w: &Tensor, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    let (c_in, h, wd) = match x.shape()[..] {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::Dimension(format!("conv2d input must be c x H x W, got {:?}", x.shape()))),
    };
    let (c_out, wc, k) = match w.shape()[..] {
        [o, i, k1, k2] if k1 == k2 => (o, i, k1),
        _ => return Err(Error::Dimension(format!("conv2d kernel must be c_out x c_in x k x k, got {:?}", w.shape()))),
    };
    if wc != c_in {
        return Err(Error::Dimension(format!("conv2d channel mismatch: input {c_in}, kernel {wc}")));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv2d kernel size must be odd, got {k}")));
    }
    if h < k || wd < k {
        return Err(Error::Config(format!("conv2d input {h}x{wd} smaller than kernel {k}")));
    }
    if stride == 0 {
        return Err(Error::Config("conv2d stride must be >= 1".into()));
    }
    Ok((c_in, h, wd, c_out, k))
}

/// Zero-padded, same-size cross-correlation of a `c_in x H x W` input.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize) -> Result<Tensor> {
    let (c_in, h, wd, c_out, k) = validate_conv(x, w, stride)?;
    let ho = conv_out_extent(h, stride);
    let wo = conv_out_extent(wd, stride);
    let cols = gather(x.data(), &im2col_chw(c_in, h, wd, k, stride));
    let mut out = vec![0.0; ho * wo * c_out];
    gemm(&cols, (ho * wo, c_in * k * k), false, w.data(), (c_out, c_in * k * k), true, &mut out, false)?;
    let out = gather(&out, &transpose_index(ho * wo, c_out));
    Tensor::new(vec![c_out, ho, wo], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(matmul(&i, &a).unwrap(), a);
    }

    #[test]
    fn small_matmul() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Tensor::from_rows(&[&[1.0], &[1.0]]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn transposed_products() {
        let a = Tensor::from_fn(&[3, 2], |i| i as f64 + 1.0);
        let b = Tensor::from_fn(&[3, 4], |i| (i as f64) * 0.5 - 1.0);
        let at = Tensor::new(vec![2, 3], gather(a.data(), &transpose_index(3, 2))).unwrap();
        assert_eq!(matmul_t(&a, true, &b, false).unwrap(), matmul(&at, &b).unwrap());
        let bt = Tensor::new(vec![4, 3], gather(b.data(), &transpose_index(3, 4))).unwrap();
        assert_eq!(matmul_t(&at, false, &bt, true).unwrap(), matmul(&at, &b).unwrap());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::from_rows(&[&[0.0, 0.0, 0.0]])).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&Tensor::from_rows(&[&[1000.0, 1000.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[&[0.0, 3f64.ln()]])).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_cases() {
        let ones = Tensor::full(&[4], 1.0);
        let zeros = Tensor::zeros(&[4]);
        let y = layer_norm(&Tensor::full(&[1, 4], 3.5), &ones, &zeros).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let y = layer_norm(&Tensor::from_rows(&[&[-1.0, 1.0]]), &g, &b).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-5);
        assert!((y.data()[1] - 1.0).abs() < 1e-5);

        assert!(layer_norm(&Tensor::zeros(&[2, 1]), &Tensor::zeros(&[1]), &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn conv_identity_and_constant() {
        let x = Tensor::from_fn(&[1, 5, 6], |i| i as f64);
        let one = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &one, 1).unwrap(), x);

        let c = 0.7;
        let field = Tensor::full(&[1, 6, 6], c);
        let ones = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&field, &ones, 1).unwrap();
        for r in 1..5 {
            for col in 1..5 {
                assert!((y.get(&[0, r, col]) - 9.0 * c).abs() < 1e-12);
            }
        }
        // corners only see four in-bounds taps
        assert!((y.get(&[0, 0, 0]) - 4.0 * c).abs() < 1e-12);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::zeros(&[2, 4, 4]);
        assert!(matches!(conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), 1), Err(Error::Dimension(_))));
        assert!(matches!(conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), 1), Err(Error::Config(_))));
        assert!(matches!(conv2d(&x, &Tensor::zeros(&[1, 2, 5, 5]), 1), Err(Error::Config(_))));
    }

    #[test]
    fn strided_extent() {
        assert_eq!(conv_out_extent(16, 2), 8);
        assert_eq!(conv_out_extent(7, 2), 4);
        let y = conv2d(&Tensor::zeros(&[1, 7, 7]), &Tensor::zeros(&[3, 1, 3, 3]), 2).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4]);
    }
}
