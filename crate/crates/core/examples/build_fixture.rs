//! Writes `fixtures/toy_chimera.cavw`: a small pointwise model fitted in closed
//! form to the two default synthetic source classes.
//!
//! The model is linear-Gaussian in the log-power domain. Each class `k` owns a
//! support band `S_k` (bins within `SUPPORT_DB` of its mean spectral peak).
//! With `L` a frame's log-power spectrum:
//!
//! * latent, per class: the band level `l_k` (mean of `L` over `S_k`) and the
//!   shrunk projections of `L - l_k - m_k` on the class's top principal
//!   directions within `S_k` (probabilistic PCA posterior mean);
//! * class logits: a linear discriminant on the band levels relative to the
//!   full-band mean, so the dominant class wins on mixtures;
//! * decoder: a SiLU stage with large offsets passes the active class's
//!   coordinates and zeroes the others, then
//!   `log σ² = l_k + m_k + Σ_p z_kp u_kp + γ` with `γ` the Euler–Mascheroni
//!   constant (the bias of the log of an exponential variable).
//!
//! Every layer has kernel 1. Run with
//! `cargo run --release -p fastmvae --example build_fixture [out]`.

use fastmvae::mixsim::{default_class_pair, gen_sources};
use fastmvae::neural::{save_model, Activation, Layer, LayerKind, ModelBundle, Role};
use fastmvae::signal::{stft, StftConfig};
use fastmvae::VARIANCE_FLOOR;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array3};

const SAMPLE_RATE: u32 = 16_000;
const TRAIN_SEEDS: std::ops::Range<u64> = 9_000..9_016;
const COMPONENTS: usize = 4;
const SUPPORT_DB: f64 = 25.0;
const OFFSET: f64 = 200.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

struct ClassModel {
    support: Vec<usize>,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    noise: f64,
}

fn fit_class(frames: &[&DVector<f64>], bins: usize) -> ClassModel {
    let n = frames.len() as f64;
    let full_shape = frames.iter().map(|l| l.add_scalar(-l.mean())).sum::<DVector<f64>>() / n;
    let peak = full_shape.max();
    let threshold = SUPPORT_DB / (10.0 * std::f64::consts::LOG10_E);
    let support: Vec<usize> = (0..bins).filter(|&f| full_shape[f] >= peak - threshold).collect();

    let level = |l: &DVector<f64>| support.iter().map(|&f| l[f]).sum::<f64>() / support.len() as f64;
    let mean = frames.iter().map(|l| l.add_scalar(-level(l))).sum::<DVector<f64>>() / n;

    let s = support.len();
    let mut cov = DMatrix::<f64>::zeros(s, s);
    for l in frames {
        let lv = level(l);
        let d = DVector::from_iterator(s, support.iter().map(|&f| l[f] - lv - mean[f]));
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order[..COMPONENTS].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::<f64>::zeros(bins, COMPONENTS);
    for (p, &i) in order[..COMPONENTS].iter().enumerate() {
        for (row, &f) in support.iter().enumerate() {
            basis[(f, p)] = eig.eigenvectors[(row, i)];
        }
    }
    let noise = (trace - eigenvalues.iter().sum::<f64>()) / (s - 1 - COMPONENTS) as f64;
    ClassModel { support, mean, basis, eigenvalues, noise }
}

fn main() -> fastmvae::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy_chimera.cavw").to_string());
    let cfg = StftConfig::from_ms(SAMPLE_RATE, 128.0, 0.5)?;
    let bins = cfg.freq_bins();
    let classes = default_class_pair();
    let c = classes.len();
    let len = cfg.aligned_len(4 * SAMPLE_RATE as usize);

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for seed in TRAIN_SEEDS {
        let sources = gen_sources(&classes, len, SAMPLE_RATE, seed)?;
        for (label, src) in sources.iter().enumerate() {
            let spec = stft(src, cfg)?;
            let y = spec.channel(0);
            let g = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
            for frame in y.columns() {
                frames
                    .push(DVector::from_iterator(bins, frame.iter().map(|v| (v.norm_sqr() / g + VARIANCE_FLOOR).ln())));
                labels.push(label);
            }
        }
    }
    let models: Vec<ClassModel> = (0..c)
        .map(|k| {
            let own: Vec<&DVector<f64>> = frames.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(f, _)| f).collect();
            fit_class(&own, bins)
        })
        .collect();

    // Band-level features relative to the full-band mean, as linear maps of L.
    let feature_rows: Vec<DVector<f64>> = models
        .iter()
        .map(|m| {
            let mut w = DVector::from_element(bins, -1.0 / bins as f64);
            for &f in &m.support {
                w[f] += 1.0 / m.support.len() as f64;
            }
            w
        })
        .collect();
    let feats: Vec<DVector<f64>> =
        frames.iter().map(|l| DVector::from_iterator(c, feature_rows.iter().map(|w| w.dot(l)))).collect();
    let mut means = vec![DVector::<f64>::zeros(c); c];
    let mut counts = vec![0usize; c];
    for (x, &l) in feats.iter().zip(&labels) {
        means[l] += x;
        counts[l] += 1;
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        *m /= *n as f64;
    }
    let mut within = DMatrix::<f64>::identity(c, c) * 1e-6;
    for (x, &l) in feats.iter().zip(&labels) {
        let d = x - &means[l];
        within.ger(1.0 / feats.len() as f64, &d, &d, 1.0);
    }
    let precision = within.try_inverse().expect("regularized covariance");

    // Latent layout: [l_0, z_00.., l_1, z_10.., ...].
    let block = 1 + COMPONENTS;
    let d = c * block;
    let width = d + c;
    let mut trunk_w = Array3::<f64>::zeros((width, bins, 1));
    let mut trunk_b = Array1::<f64>::zeros(width);
    let mut lv_b = Array1::<f64>::zeros(d);
    for (k, m) in models.iter().enumerate() {
        let base = k * block;
        for &f in &m.support {
            trunk_w[[base, f, 0]] = 1.0 / m.support.len() as f64;
        }
        lv_b[base] = (m.noise / m.support.len() as f64).ln();
        for p in 0..COMPONENTS {
            let shrink = ((m.eigenvalues[p] - m.noise) / m.eigenvalues[p]).max(0.0);
            let u = m.basis.column(p);
            for f in 0..bins {
                trunk_w[[base + 1 + p, f, 0]] = shrink * u[f];
            }
            trunk_b[base + 1 + p] = -shrink * u.dot(&m.mean);
            lv_b[base + 1 + p] = (m.noise * shrink).max(VARIANCE_FLOOR).ln();
        }
    }
    for k in 0..c {
        let a = &precision * &means[k];
        for f in 0..bins {
            trunk_w[[d + k, f, 0]] = feature_rows.iter().zip(a.iter()).map(|(w, ak)| ak * w[f]).sum();
        }
        trunk_b[d + k] = -0.5 * a.dot(&means[k]);
    }

    let pick = |rows: std::ops::Range<usize>| {
        let mut w = Array3::zeros((rows.len(), width, 1));
        for (o, i) in rows.enumerate() {
            w[[o, i, 0]] = 1.0;
        }
        w
    };

    // silu(x + OFFSET) ~ x + OFFSET for the active class, silu(x - OFFSET) ~ 0
    // for the others.
    let mut gate_w = Array3::<f64>::zeros((d, d + c, 1));
    let mut gate_b = Array1::<f64>::zeros(d);
    for k in 0..c {
        for h in k * block..(k + 1) * block {
            gate_w[[h, h, 0]] = 1.0;
            gate_w[[h, d + k, 0]] = 2.0 * OFFSET;
            gate_b[h] = -OFFSET;
        }
    }
    let mut dec_w = Array3::<f64>::zeros((bins, d + c, 1));
    let dec_b = Array1::from_elem(bins, EULER_GAMMA);
    for (k, m) in models.iter().enumerate() {
        let base = k * block;
        for f in 0..bins {
            dec_w[[f, base, 0]] = 1.0;
            let mut class_term = m.mean[f] - OFFSET;
            for p in 0..COMPONENTS {
                dec_w[[f, base + 1 + p, 0]] = m.basis[(f, p)];
                class_term -= OFFSET * m.basis[(f, p)];
            }
            dec_w[[f, d + k, 0]] = class_term;
        }
    }

    let layer = |name: &str, role, kind, activation, weight: Array3<f64>, bias: Array1<f64>| Layer {
        name: name.into(),
        role,
        kind,
        stride: 1,
        activation,
        weight,
        bias,
        norm: None,
    };
    use Activation::{None as Linear, Silu};
    use LayerKind::{Conv1d, Deconv1d};
    let layers = vec![
        layer("trunk", Role::Trunk, Conv1d, Linear, trunk_w, trunk_b),
        layer("mu", Role::Mu, Conv1d, Linear, pick(0..d), Array1::zeros(d)),
        layer("log_var", Role::LogVar, Conv1d, Linear, Array3::zeros((d, width, 1)), lv_b),
        layer("class", Role::Class, Conv1d, Linear, pick(d..width), Array1::zeros(c)),
        layer("gate", Role::Decoder, Deconv1d, Silu, gate_w, gate_b),
        layer("decoder", Role::Decoder, Deconv1d, Linear, dec_w, dec_b),
    ];
    let bundle = ModelBundle::new(d, c, bins, 1e-5, layers)?;
    save_model(&out, &bundle)?;
    println!("wrote {out}: {bins} bins, latent {d}, {c} classes, {} training frames", frames.len());
    for (k, m) in models.iter().enumerate() {
        println!(
            "  class {k}: {} support bins, eigenvalues {:.2?}, residual {:.3}, band features {:.2?}",
            m.support.len(),
            m.eigenvalues,
            m.noise,
            means[k].as_slice()
        );
    }
    Ok(())
}
