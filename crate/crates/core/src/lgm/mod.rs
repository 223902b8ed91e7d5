//! Local Gaussian model: likelihood, iterative-projection demixing updates and
//! the alternating separation loop.

mod ops;
mod separate;

pub use ops::{back_project, demix, demix_source, ip_update, neg_loglik, update_gain, weighted_spatial_covariance};
pub use separate::{separate, SeparateOptions, SeparationResult};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::{Complex64, Error, Result, VARIANCE_FLOOR};

/// Per-frequency demixing matrices `W(f)`, stored `[freq, I, I]` with the
/// demixing filters `w_j(f)` as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixingStack {
    pub mats: Array3<Complex64>,
}

impl DemixingStack {
    pub fn new(mats: Array3<Complex64>) -> Result<Self> {
        let (_, rows, cols) = mats.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!("demixing matrices must be square, got {rows}x{cols}")));
        }
        if mats.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("demixing stack is not finite".into()));
        }
        Ok(Self { mats })
    }

    pub fn identity(bins: usize, chans: usize) -> Self {
        let mats = Array3::from_shape_fn((bins, chans, chans), |(_, a, b)| {
            if a == b {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self { mats }
    }

    pub fn freq_bins(&self) -> usize {
        self.mats.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.mats.shape()[1]
    }

    pub fn at(&self, f: usize) -> ArrayView2<'_, Complex64> {
        self.mats.index_axis(Axis(0), f)
    }

    /// Reorders the demixing filters: new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mats = Array3::from_shape_fn(self.mats.dim(), |(f, i, k)| self.mats[[f, i, perm[k]]]);
        Self { mats }
    }
}

/// Source variances `v_j(f, n)` stored `[source, freq, frame]`, floored at
/// [`VARIANCE_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceField {
    pub(crate) values: Array3<f64>,
}

impl VarianceField {
    pub fn new(mut values: Array3<f64>) -> Self {
        values.mapv_inplace(floor_variance);
        Self { values }
    }

    pub fn values(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    pub fn source(&self, j: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), j)
    }

    pub(crate) fn set_source(&mut self, j: usize, v: &Array2<f64>) {
        self.values.index_axis_mut(Axis(0), j).zip_mut_with(v, |dst, &src| *dst = floor_variance(src));
    }
}

pub(crate) fn floor_variance(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.max(VARIANCE_FLOOR)
    }
}

/// Problem dimensions handed to a source model before separation starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub freq_bins: usize,
    pub frames: usize,
    pub sources: usize,
}

/// A per-source variance model driven by the separation loop.
pub trait SourceModel {
    fn name(&self) -> &str;

    /// Called once before the first iteration.
    fn prepare(&mut self, shape: ModelShape, seed: u64) -> Result<()>;

    /// Refits source `j` to its current separated spectrogram `y` (`[freq, frame]`)
    /// and returns the new variances `v_j`.
    fn update(&mut self, j: usize, y: ArrayView2<'_, Complex64>) -> Result<Array2<f64>>;

    /// Current power scale of source `j`.
    fn gain(&self, j: usize) -> f64;
}

/// Returns fixed, known variances. Used to test the demixing updates in
/// isolation.
#[derive(Debug, Clone)]
pub struct OracleModel {
    variances: VarianceField,
}

impl OracleModel {
    pub fn new(variances: VarianceField) -> Self {
        Self { variances }
    }
}

impl SourceModel for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn prepare(&mut self, shape: ModelShape, _seed: u64) -> Result<()> {
        let want = (shape.sources, shape.freq_bins, shape.frames);
        if self.variances.values.dim() != want {
            return Err(Error::DimensionMismatch(format!(
                "oracle variances {:?}, mixture needs {want:?}",
                self.variances.values.dim()
            )));
        }
        Ok(())
    }

    fn update(&mut self, j: usize, _y: ArrayView2<'_, Complex64>) -> Result<Array2<f64>> {
        Ok(self.variances.source(j).to_owned())
    }

    fn gain(&self, _j: usize) -> f64 {
        1.0
    }
}
