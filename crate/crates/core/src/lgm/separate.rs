use std::time::Instant;

use ndarray::{Array3, Axis};
use rayon::prelude::*;

use super::ops::{back_project, demix, demix_source, ip_update, neg_loglik, weighted_spatial_covariance};
use super::{DemixingStack, ModelShape, SourceModel, VarianceField};
use crate::signal::ComplexSpectrogram;
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparateOptions {
    pub iters: usize,
    pub seed: u64,
    pub ref_ch: usize,
}

impl Default for SeparateOptions {
    fn default() -> Self {
        Self { iters: 60, seed: 0, ref_ch: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub demix: DemixingStack,
    /// Separated sources projected back onto the reference microphone, `[freq, frame, source]`.
    pub sources: ComplexSpectrogram,
    pub variances: VarianceField,
    /// Negative log-likelihood after each iteration.
    pub neg_loglik: Vec<f64>,
    /// Wall-clock seconds spent in each iteration's updates.
    pub iter_seconds: Vec<f64>,
}

/// Runs the alternating optimization: for every iteration and every source in
/// order, refit the source model to the current separated signal, then update
/// that source's demixing filter at every frequency by iterative projection.
///
/// `W(f)` starts at the identity. Frequency bins are updated in parallel on the
/// current rayon pool; the result does not depend on the thread count.
pub fn separate(
    x: &ComplexSpectrogram,
    model: &mut dyn SourceModel,
    opts: SeparateOptions,
) -> Result<SeparationResult> {
    let (bins, frames, chans) = x.data.dim();
    if chans < 2 {
        return Err(Error::InvalidArgument(format!("separation needs at least two channels, got {chans}")));
    }
    if opts.ref_ch >= chans {
        return Err(Error::InvalidArgument(format!("reference channel {} out of range", opts.ref_ch)));
    }
    model.prepare(ModelShape { freq_bins: bins, frames, sources: chans }, opts.seed)?;

    let mut w = DemixingStack::identity(bins, chans);
    let mut v = VarianceField::new(Array3::ones((chans, bins, frames)));
    let mut trace = Vec::with_capacity(opts.iters);
    let mut seconds = Vec::with_capacity(opts.iters);

    for it in 0..opts.iters {
        let start = Instant::now();
        for j in 0..chans {
            let y = demix_source(x, &w, j);
            let vj = model.update(j, y.view())?;
            if vj.dim() != (bins, frames) {
                return Err(Error::DimensionMismatch(format!(
                    "{} returned variances {:?} for source {j}, expected ({bins}, {frames})",
                    model.name(),
                    vj.dim()
                )));
            }
            if vj.iter().any(|val| !val.is_finite()) {
                return Err(Error::NonFinite { what: "variance", iteration: it, source_index: j });
            }
            v.set_source(j, &vj);
            update_filters(x, &mut w, &v, j).map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite { what, iteration: it, source_index: j },
                other => other,
            })?;
        }
        seconds.push(start.elapsed().as_secs_f64());
        let nll = neg_loglik(x, &w, &v)?;
        if nll.is_nan() {
            return Err(Error::NonFinite { what: "likelihood", iteration: it, source_index: 0 });
        }
        log::debug!("iteration {it}: nll {nll:.6e}");
        trace.push(nll);
    }

    let y = demix(x, &w)?;
    let sources = back_project(&y, &w, opts.ref_ch)?;
    Ok(SeparationResult { demix: w, sources, variances: v, neg_loglik: trace, iter_seconds: seconds })
}

fn update_filters(x: &ComplexSpectrogram, w: &mut DemixingStack, v: &VarianceField, j: usize) -> Result<()> {
    let vj = v.source(j);
    let results: Vec<Result<()>> = w
        .mats
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(x.data.axis_iter(Axis(0)).into_par_iter())
        .zip(vj.axis_iter(Axis(0)).into_par_iter())
        .enumerate()
        .map(|(f, ((mut wf, xf), vf))| {
            let sigma = weighted_spatial_covariance(xf, vf);
            let col = ip_update(wf.view(), sigma.view(), j).map_err(|e| match e {
                Error::Singular { source_index, .. } => Error::Singular { freq: f, source_index },
                other => other,
            })?;
            if col.iter().any(|c: &Complex64| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::NonFinite { what: "demixing filter", iteration: 0, source_index: j });
            }
            wf.index_axis_mut(Axis(1), j).assign(&col);
            Ok(())
        })
        .collect();
    results.into_iter().collect()
}
