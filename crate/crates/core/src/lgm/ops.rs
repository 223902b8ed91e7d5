//! Per-frequency building blocks of the local Gaussian model.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, Zip};

use super::{DemixingStack, VarianceField};
use crate::signal::ComplexSpectrogram;
use crate::{Complex64, Error, Result};

/// Relative diagonal spread of the LU factor below which a solve is treated
/// as singular.
const RCOND_LIMIT: f64 = 1e-12;
/// Diagonal loading (relative to the trace) applied on a singular retry.
const COVARIANCE_LOADING: f64 = 1e-10;

pub(crate) fn to_matrix(a: ArrayView2<'_, Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

/// `y_j(f, n) = w_j(f)^H x(f, n)` for every source.
pub fn demix(x: &ComplexSpectrogram, w: &DemixingStack) -> Result<ComplexSpectrogram> {
    check_shapes(x, w)?;
    let (bins, frames, chans) = x.data.dim();
    let mut out = Array3::<Complex64>::zeros((bins, frames, chans));
    Zip::from(out.outer_iter_mut()).and(x.data.outer_iter()).and(w.mats.outer_iter()).par_for_each(|mut yf, xf, wf| {
        for n in 0..frames {
            for j in 0..chans {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..chans {
                    acc += wf[[i, j]].conj() * xf[[n, i]];
                }
                yf[[n, j]] = acc;
            }
        }
    });
    x.with_data(out)
}

/// One source's separated spectrogram `[freq, frame]`.
pub fn demix_source(x: &ComplexSpectrogram, w: &DemixingStack, j: usize) -> Array2<Complex64> {
    let (bins, frames, chans) = x.data.dim();
    let mut y = Array2::<Complex64>::zeros((bins, frames));
    Zip::from(y.outer_iter_mut()).and(x.data.outer_iter()).and(w.mats.outer_iter()).par_for_each(|mut yf, xf, wf| {
        for n in 0..frames {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..chans {
                acc += wf[[i, j]].conj() * xf[[n, i]];
            }
            yf[n] = acc;
        }
    });
    y
}

/// Negative log-likelihood of the demixing stack and variances, with the
/// additive constants dropped:
/// `-2N Σ_f log|det W(f)| + Σ_{f,n,j} (log v + |w_j^H x|^2 / v)`.
///
/// A singular `W(f)` yields `+inf`.
pub fn neg_loglik(x: &ComplexSpectrogram, w: &DemixingStack, v: &VarianceField) -> Result<f64> {
    check_shapes(x, w)?;
    let (bins, frames, chans) = x.data.dim();
    if v.values.dim() != (chans, bins, frames) {
        return Err(Error::DimensionMismatch(format!(
            "variance field {:?} vs spectrogram ({chans}, {bins}, {frames})",
            v.values.dim()
        )));
    }
    let mut total = 0.0;
    for f in 0..bins {
        let det = to_matrix(w.mats.index_axis(Axis(0), f)).determinant().norm();
        if det.is_nan() || det <= 0.0 || !det.is_finite() {
            return Ok(f64::INFINITY);
        }
        total -= 2.0 * frames as f64 * det.ln();
        let wf = w.mats.index_axis(Axis(0), f);
        let xf = x.data.index_axis(Axis(0), f);
        for j in 0..chans {
            for n in 0..frames {
                let mut y = Complex64::new(0.0, 0.0);
                for i in 0..chans {
                    y += wf[[i, j]].conj() * xf[[n, i]];
                }
                let vj = v.values[[j, f, n]];
                total += vj.ln() + y.norm_sqr() / vj;
            }
        }
    }
    Ok(total)
}

/// `Σ = (1/N) Σ_n x(n) x(n)^H / v(n)` for one frequency bin.
///
/// `x_f` is `[frame, channel]`.
pub fn weighted_spatial_covariance(x_f: ArrayView2<'_, Complex64>, v_f: ArrayView1<'_, f64>) -> Array2<Complex64> {
    let (frames, chans) = x_f.dim();
    let mut sigma = Array2::<Complex64>::zeros((chans, chans));
    for (xn, &vn) in x_f.outer_iter().zip(v_f.iter()) {
        let inv = 1.0 / vn;
        for a in 0..chans {
            let xa = xn[a] * inv;
            for b in a..chans {
                sigma[[a, b]] += xa * xn[b].conj();
            }
        }
    }
    let scale = 1.0 / frames.max(1) as f64;
    for a in 0..chans {
        for b in a..chans {
            let s = sigma[[a, b]] * scale;
            sigma[[a, b]] = s;
            sigma[[b, a]] = s.conj();
        }
        sigma[[a, a]].im = 0.0;
    }
    sigma
}

/// Iterative-projection update of column `j` of `W(f)`:
/// solve `(W^H Σ_j) w = e_j`, then scale so that `w^H Σ_j w = 1`.
///
/// A near-singular system is retried once with `Σ_j` loaded by
/// `1e-10 · trace(Σ_j)` on the diagonal.
pub fn ip_update(
    w: ArrayView2<'_, Complex64>,
    sigma: ArrayView2<'_, Complex64>,
    j: usize,
) -> Result<Array1<Complex64>> {
    let chans = w.nrows();
    if w.ncols() != chans || sigma.dim() != (chans, chans) || j >= chans {
        return Err(Error::DimensionMismatch(format!("ip_update: W {:?}, Σ {:?}, j = {j}", w.dim(), sigma.dim())));
    }
    let wh = to_matrix(w).adjoint();
    let sig = to_matrix(sigma);
    if let Some(col) = project(&wh, &sig, j) {
        return Ok(col);
    }
    let trace: f64 = (0..chans).map(|i| sig[(i, i)].re).sum();
    let mut loaded = sig;
    for i in 0..chans {
        loaded[(i, i)] += Complex64::new(COVARIANCE_LOADING * trace.max(f64::MIN_POSITIVE), 0.0);
    }
    project(&wh, &loaded, j).ok_or(Error::Singular { freq: 0, source_index: j })
}

fn project(wh: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>, j: usize) -> Option<Array1<Complex64>> {
    let n = sigma.nrows();
    let a = wh * sigma;
    let lu = a.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if hi.is_nan() || hi <= 0.0 || lo / hi < RCOND_LIMIT {
        return None;
    }
    let mut e = nalgebra::DVector::<Complex64>::zeros(n);
    e[j] = Complex64::new(1.0, 0.0);
    let col = lu.solve(&e)?;
    let quad = (col.adjoint() * sigma * &col)[(0, 0)].re;
    if quad.is_nan() || quad <= 0.0 || !quad.is_finite() {
        return None;
    }
    let scale = 1.0 / quad.sqrt();
    let out: Array1<Complex64> = col.iter().map(|c| c * scale).collect();
    out.iter().all(|c| c.re.is_finite() && c.im.is_finite()).then_some(out)
}

/// Closed-form gain maximizing the likelihood for fixed variance shape:
/// `g = (1/FN) Σ |y|^2 / σ^2`.
pub fn update_gain(y: ArrayView2<'_, Complex64>, sigma_sq: ArrayView2<'_, f64>) -> f64 {
    let count = y.len().max(1) as f64;
    Zip::from(&y).and(&sigma_sq).fold(0.0, |acc, y, &s| acc + y.norm_sqr() / s) / count
}

/// Rescales each separated source to its image at microphone `ref_ch`, using
/// the `(ref_ch, j)` entry of `W(f)^{-H}`.
pub fn back_project(y: &ComplexSpectrogram, w: &DemixingStack, ref_ch: usize) -> Result<ComplexSpectrogram> {
    check_shapes(y, w)?;
    let (bins, _, chans) = y.data.dim();
    if ref_ch >= chans {
        return Err(Error::InvalidArgument(format!("reference channel {ref_ch} out of range for {chans} channels")));
    }
    let mut out = y.data.clone();
    for f in 0..bins {
        let mixing = to_matrix(w.mats.index_axis(Axis(0), f))
            .adjoint()
            .try_inverse()
            .ok_or(Error::Singular { freq: f, source_index: 0 })?;
        let mut yf = out.index_axis_mut(Axis(0), f);
        for j in 0..chans {
            let scale = mixing[(ref_ch, j)];
            yf.index_axis_mut(Axis(1), j).mapv_inplace(|c| c * scale);
        }
    }
    y.with_data(out)
}

fn check_shapes(x: &ComplexSpectrogram, w: &DemixingStack) -> Result<()> {
    let (bins, _, chans) = x.data.dim();
    if w.mats.dim() != (bins, chans, chans) {
        return Err(Error::DimensionMismatch(format!(
            "demixing stack {:?} does not fit a spectrogram with {bins} bins and {chans} channels",
            w.mats.dim()
        )));
    }
    Ok(())
}
