//! Pure forward kernels over `[channel, time]` tensors.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn silu(u: f64) -> f64 {
    u * sigmoid(u)
}

pub fn silu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(silu);
}

/// Normalizes each time step over channels (biased variance), then applies
/// the per-channel affine `gamma`, `beta`.
pub fn layer_norm(x: &mut Array2<f64>, gamma: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, eps: f64) {
    let c = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / c;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in col.iter_mut().zip(gamma).zip(beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

/// Output length and left padding of a strided convolution over `len` steps.
pub fn conv_geometry(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(len);
    (out, total / 2)
}

/// Strided cross-correlation with zero padding. `weight` is `[out, in, kernel]`.
/// Output length is `ceil(len / stride)`.
pub fn conv1d(
    x: ArrayView2<'_, f64>,
    weight: ArrayView3<'_, f64>,
    bias: ArrayView1<'_, f64>,
    stride: usize,
) -> Array2<f64> {
    let (cout, cin, k) = weight.dim();
    assert_eq!(x.nrows(), cin, "conv1d input channels");
    let len = x.ncols();
    let (out_len, pad) = conv_geometry(len, k, stride);
    let mut y = Array2::<f64>::zeros((cout, out_len));
    let mut gathered = Array2::<f64>::zeros((cin, out_len));
    for m in 0..k {
        // Output step t reads input position t*stride + m - pad.
        let t_lo = pad.saturating_sub(m).div_ceil(stride);
        let t_hi = ((len + pad).saturating_sub(m)).div_ceil(stride).min(out_len);
        if t_lo >= t_hi {
            continue;
        }
        let first = t_lo * stride + m - pad;
        gathered.fill(0.0);
        gathered
            .slice_mut(s![.., t_lo..t_hi])
            .assign(&x.slice(s![.., first..first + (t_hi - t_lo - 1) * stride + 1;stride]));
        general_mat_mul(1.0, &weight.index_axis(Axis(2), m), &gathered, 1.0, &mut y);
    }
    y += &bias.insert_axis(Axis(1));
    y
}

/// Transposed convolution, the exact adjoint of [`conv1d`] on a
/// `len * stride` input. `weight` is `[out, in, kernel]`; output length is
/// `len * stride`.
pub fn deconv1d(
    x: ArrayView2<'_, f64>,
    weight: ArrayView3<'_, f64>,
    bias: ArrayView1<'_, f64>,
    stride: usize,
) -> Array2<f64> {
    let (cout, cin, k) = weight.dim();
    assert_eq!(x.nrows(), cin, "deconv1d input channels");
    let len = x.ncols();
    let out_len = len * stride;
    let (_, pad) = conv_geometry(out_len, k, stride);
    let mut y = Array2::<f64>::zeros((cout, out_len));
    let mut z = Array2::<f64>::zeros((cout, len));
    for m in 0..k {
        let t_lo = pad.saturating_sub(m).div_ceil(stride);
        let t_hi = ((out_len + pad).saturating_sub(m)).div_ceil(stride).min(len);
        if t_lo >= t_hi {
            continue;
        }
        general_mat_mul(1.0, &weight.index_axis(Axis(2), m), &x, 0.0, &mut z);
        let first = t_lo * stride + m - pad;
        let mut dst = y.slice_mut(s![.., first..first + (t_hi - t_lo - 1) * stride + 1;stride]);
        dst += &z.slice(s![.., t_lo..t_hi]);
    }
    y += &bias.insert_axis(Axis(1));
    y
}

/// Softmax of a vector, shifted by its maximum.
pub fn softmax(logits: ArrayView1<'_, f64>) -> ndarray::Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}
