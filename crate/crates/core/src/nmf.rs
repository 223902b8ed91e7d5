//! Low-rank NMF variance model (ILRMA) and its flat-basis special case (IVA).
//!
//! Each update is one sweep of the Itakura-Saito multiplicative rules, first
//! over the bases, then over the activations.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lgm::{ModelShape, SourceModel};
use crate::{Complex64, Error, Result, VARIANCE_FLOOR};

/// Bases `[freq, K]` and activations `[K, frame]` of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfState {
    pub basis: Array2<f64>,
    pub activation: Array2<f64>,
    /// IVA mode: a single all-ones basis that is never updated.
    pub flat_basis: bool,
}

impl NmfState {
    /// Uniform(0.1, 1.0) initialization. In flat mode `k` is forced to 1 and
    /// the basis is all ones.
    pub fn init(bins: usize, frames: usize, k: usize, flat_basis: bool, rng: &mut impl Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("NMF needs at least one basis".into()));
        }
        let k = if flat_basis { 1 } else { k };
        let basis = if flat_basis {
            Array2::ones((bins, 1))
        } else {
            Array2::from_shape_fn((bins, k), |_| rng.gen_range(0.1..1.0))
        };
        let activation = Array2::from_shape_fn((k, frames), |_| rng.gen_range(0.1..1.0));
        Ok(Self { basis, activation, flat_basis })
    }

    pub fn seeded(bins: usize, frames: usize, k: usize, flat_basis: bool, seed: u64) -> Result<Self> {
        Self::init(bins, frames, k, flat_basis, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `v = T V`, floored.
    pub fn variance(&self) -> Array2<f64> {
        self.basis.dot(&self.activation).mapv(|v| v.max(VARIANCE_FLOOR))
    }

    /// One multiplicative sweep against the separated spectrogram `y`.
    pub fn update(&mut self, y: ArrayView2<'_, Complex64>) {
        let power = y.mapv(|c| c.norm_sqr());
        self.update_power(power.view());
    }

    /// One multiplicative sweep against the power spectrogram `p`.
    pub fn update_power(&mut self, p: ArrayView2<'_, f64>) {
        if !self.flat_basis {
            let v = self.variance();
            let inv = v.mapv(|x| 1.0 / x);
            let ratio = &p * &inv * &inv;
            let num = ratio.dot(&self.activation.t());
            let den = inv.dot(&self.activation.t());
            self.basis.zip_mut_with(&(num / den), |t, &r| {
                *t = (*t * r.sqrt()).max(VARIANCE_FLOOR);
            });
        }
        let v = self.variance();
        let inv = v.mapv(|x| 1.0 / x);
        let ratio = &p * &inv * &inv;
        let num = self.basis.t().dot(&ratio);
        let den = self.basis.t().dot(&inv);
        self.activation.zip_mut_with(&(num / den), |h, &r| {
            *h = (*h * r.sqrt()).max(VARIANCE_FLOOR);
        });
    }
}

/// Itakura-Saito divergence `Σ (p/v - log(p/v) - 1)`.
pub fn is_divergence(p: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> f64 {
    p.iter()
        .zip(v.iter())
        .map(|(&p, &v)| {
            let r = p / v;
            r - r.ln() - 1.0
        })
        .sum()
}

/// ILRMA (`K` bases per source) or IVA (flat basis) as a [`SourceModel`].
#[derive(Debug, Clone)]
pub struct NmfModel {
    bases: usize,
    flat_basis: bool,
    states: Vec<NmfState>,
}

impl NmfModel {
    pub fn ilrma(bases: usize) -> Self {
        Self { bases, flat_basis: false, states: Vec::new() }
    }

    pub fn iva() -> Self {
        Self { bases: 1, flat_basis: true, states: Vec::new() }
    }

    pub fn states(&self) -> &[NmfState] {
        &self.states
    }
}

impl SourceModel for NmfModel {
    fn name(&self) -> &str {
        if self.flat_basis {
            "iva"
        } else {
            "ilrma"
        }
    }

    fn prepare(&mut self, shape: ModelShape, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.states = (0..shape.sources)
            .map(|_| NmfState::init(shape.freq_bins, shape.frames, self.bases, self.flat_basis, &mut rng))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn update(&mut self, j: usize, y: ArrayView2<'_, Complex64>) -> Result<Array2<f64>> {
        let state =
            self.states.get_mut(j).ok_or_else(|| Error::InvalidArgument(format!("source {j} was not prepared")))?;
        state.update(y);
        Ok(state.variance())
    }

    fn gain(&self, _j: usize) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive_sweep(basis: &Array2<f64>, act: &Array2<f64>, p: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (f_n, k_n) = basis.dim();
        let n_n = act.ncols();
        let var = |t: &Array2<f64>, h: &Array2<f64>| {
            let mut v = Array2::zeros((f_n, n_n));
            for f in 0..f_n {
                for n in 0..n_n {
                    let mut s = 0.0;
                    for k in 0..k_n {
                        s += t[[f, k]] * h[[k, n]];
                    }
                    v[[f, n]] = f64::max(s, VARIANCE_FLOOR);
                }
            }
            v
        };
        let mut t = basis.clone();
        let v = var(&t, act);
        for f in 0..f_n {
            for k in 0..k_n {
                let (mut num, mut den) = (0.0, 0.0);
                for n in 0..n_n {
                    num += p[[f, n]] * act[[k, n]] / (v[[f, n]] * v[[f, n]]);
                    den += act[[k, n]] / v[[f, n]];
                }
                t[[f, k]] = basis[[f, k]] * (num / den).sqrt();
            }
        }
        let v = var(&t, act);
        let mut h = act.clone();
        for k in 0..k_n {
            for n in 0..n_n {
                let (mut num, mut den) = (0.0, 0.0);
                for f in 0..f_n {
                    num += t[[f, k]] * p[[f, n]] / (v[[f, n]] * v[[f, n]]);
                    den += t[[f, k]] / v[[f, n]];
                }
                h[[k, n]] = act[[k, n]] * (num / den).sqrt();
            }
        }
        (t, h)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = NmfState::seeded(3, 4, 2, false, 11).unwrap();
        let b = NmfState::seeded(3, 4, 2, false, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.basis.dim(), (3, 2));
        assert_eq!(a.activation.dim(), (2, 4));
        assert!(a.basis.iter().chain(a.activation.iter()).all(|&x| (0.1..1.0).contains(&x)));

        let iva = NmfState::seeded(5, 4, 3, true, 1).unwrap();
        assert_eq!(iva.basis, Array2::<f64>::ones((5, 1)));
        assert!(NmfState::seeded(3, 4, 0, false, 1).is_err());
    }

    #[test]
    fn variance_cases() {
        let iva = NmfState { basis: Array2::ones((3, 1)), activation: array![[0.5, 2.0, 4.0]], flat_basis: true };
        let v = iva.variance();
        for f in 0..3 {
            assert_eq!(v.row(f), array![0.5, 2.0, 4.0]);
        }
        let outer = NmfState { basis: array![[1.0], [2.0]], activation: array![[3.0, 5.0]], flat_basis: false };
        assert_eq!(outer.variance(), array![[3.0, 5.0], [6.0, 10.0]]);

        let s = NmfState::seeded(4, 3, 2, false, 5).unwrap();
        let v = s.variance();
        for f in 0..4 {
            for n in 0..3 {
                let want = s.basis[[f, 0]] * s.activation[[0, n]] + s.basis[[f, 1]] * s.activation[[1, n]];
                assert!((v[[f, n]] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fixed_point_when_model_matches() {
        let mut s = NmfState::seeded(5, 6, 2, false, 2).unwrap();
        let before = s.clone();
        let p = s.variance();
        s.update_power(p.view());
        for (a, b) in s.basis.iter().zip(before.basis.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.activation.iter().zip(before.activation.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Array2::from_shape_fn((4, 3), |_| rng.gen_range(0.01..3.0));
        let mut s = NmfState::seeded(4, 3, 2, false, 4).unwrap();
        let (t, h) = naive_sweep(&s.basis, &s.activation, &p);
        s.update_power(p.view());
        for (a, b) in s.basis.iter().zip(t.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.activation.iter().zip(h.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_target_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t: Vec<f64> = (0..6).map(|_| rng.gen_range(0.2..2.0)).collect();
        let h: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..2.0)).collect();
        let p = Array2::from_shape_fn((6, 8), |(f, n)| t[f] * h[n]);
        let mut s = NmfState::seeded(6, 8, 1, false, 9).unwrap();
        for _ in 0..200 {
            s.update_power(p.view());
        }
        let d = is_divergence(p.view(), s.variance().view());
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn iva_stays_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = Array2::from_shape_fn((5, 7), |_| rng.gen_range(0.01..3.0));
        let mut s = NmfState::seeded(5, 7, 1, true, 1).unwrap();
        for _ in 0..5 {
            s.update_power(p.view());
        }
        assert_eq!(s.basis, Array2::<f64>::ones((5, 1)));
        let v = s.variance();
        for n in 0..7 {
            assert!(v.column(n).iter().all(|&x| x == v[[0, n]]));
        }
    }
}
