//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::Parser;
use fastmvae::lgm::{separate, OracleModel, SeparateOptions, VarianceField};
use fastmvae::metrics::evaluate;
use fastmvae::mixsim::{gaussian_lgm_sources, random_mixing_matrix, MixScenario};
use fastmvae::neural::kernels::{conv1d, conv_geometry, deconv1d, layer_norm, silu};
use fastmvae::neural::{infer_latent_poe, load_model, NeuralConfig, NeuralModel, PoeConfig};
use fastmvae::nmf::NmfModel;
use fastmvae::signal::{istft, stft, ComplexSpectrogram, StftConfig, Waveform};
use fastmvae_cli::{bench, Cli, Command, SpeedClaim};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/toy_chimera.cavw");

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-6 * w[0].abs())
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..100 {
        let win = [64, 128, 256, 512, 2048][case % 5];
        let cfg = StftConfig::new(win, win / 2).unwrap();
        let len = cfg.aligned_len(rng.gen_range(win..16 * win));
        let chans = rng.gen_range(1..=3);
        let sig: Vec<Vec<f64>> = (0..chans).map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let w = Waveform::new(sig.clone(), 16_000).unwrap();
        let back = istft(&stft(&w, cfg).unwrap()).unwrap();
        for (a, b) in sig.iter().zip(back.channels()) {
            let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(err / norm);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-10 && secs < 1.0, format!("max rel err {worst:.2e}, {secs:.3} s for 100 signals"))
}

fn ip_oracle() -> Outcome {
    const WIN: usize = 64;
    let bins = WIN / 2 + 1;
    let mut imps = Vec::new();
    let mut all_monotone = true;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let frames = 400;
        let (var, s) = gaussian_lgm_sources(bins, frames, 2, 2, &mut rng);
        let a = random_mixing_matrix(2, &mut rng);
        let x = Array3::from_shape_fn((bins, frames, 2), |(f, n, i)| (0..2).map(|j| s[[f, n, j]] * a[i][j]).sum());
        let img = Array3::from_shape_fn((bins, frames, 2), |(f, n, j)| s[[f, n, j]] * a[0][j]);
        let x = ComplexSpectrogram::new(x, 16_000, WIN, WIN / 2).unwrap();
        let mut model = OracleModel::new(VarianceField::new(var));
        let r = separate(&x, &mut model, SeparateOptions { iters: 60, seed, ref_ch: 0 }).unwrap();
        all_monotone &= monotone(&r.neg_loglik);
        let est = istft(&r.sources).unwrap().into_channels();
        let refs = istft(&x.with_data(img).unwrap()).unwrap().into_channels();
        let mix = istft(&x).unwrap().into_channels();
        imps.push(evaluate(&est, &refs, Some(&mix[0])).unwrap().mean_improvement().unwrap());
    }
    let med = median(imps);
    outcome(med > 30.0 && all_monotone, format!("median improvement {med:.2} dB, monotone {all_monotone}"))
}

fn ilrma_separation() -> Outcome {
    let cfg = StftConfig::from_ms(16_000, 128.0, 0.5).unwrap();
    let mut imps = Vec::new();
    let mut all_monotone = true;
    let mut secs = 0.0;
    for seed in 0..20u64 {
        let mix = MixScenario::with_seed(seed).render().unwrap();
        let start = Instant::now();
        let x = stft(&mix.mixture, cfg).unwrap();
        let mut model = NmfModel::ilrma(2);
        let r = separate(&x, &mut model, SeparateOptions { iters: 60, seed, ref_ch: 0 }).unwrap();
        let est = istft(&r.sources).unwrap().into_channels();
        secs += start.elapsed().as_secs_f64();
        all_monotone &= monotone(&r.neg_loglik);
        imps.push(evaluate(&est, &mix.images, Some(mix.mixture.channel(0))).unwrap().mean_improvement().unwrap());
    }
    let med = median(imps);
    outcome(
        med >= 10.0 && all_monotone && secs < 30.0,
        format!("median improvement {med:.2} dB, monotone {all_monotone}, {secs:.2} s total"),
    )
}

fn naive_conv(x: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>, stride: usize) -> Array2<f64> {
    let (cout, cin, k) = w.dim();
    let len = x.ncols();
    let (out_len, pad) = conv_geometry(len, k, stride);
    let mut y = Array2::zeros((cout, out_len));
    for o in 0..cout {
        for t in 0..out_len {
            let mut acc = b[o];
            for i in 0..cin {
                for m in 0..k {
                    let pos = (t * stride + m) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        acc += w[[o, i, m]] * x[[i, pos as usize]];
                    }
                }
            }
            y[[o, t]] = acc;
        }
    }
    y
}

fn naive_deconv(x: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>, stride: usize) -> Array2<f64> {
    let (cout, cin, k) = w.dim();
    let len = x.ncols();
    let out_len = len * stride;
    let (_, pad) = conv_geometry(out_len, k, stride);
    let mut y = Array2::from_shape_fn((cout, out_len), |(o, _)| b[o]);
    for o in 0..cout {
        for i in 0..cin {
            for t in 0..len {
                for m in 0..k {
                    let pos = (t * stride + m) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < out_len {
                        y[[o, pos as usize]] += w[[o, i, m]] * x[[i, t]];
                    }
                }
            }
        }
    }
    y
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn kernel_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let cases = 240;
    for case in 0..cases {
        let cin = rng.gen_range(1..7);
        let cout = rng.gen_range(1..7);
        let k = rng.gen_range(1..8);
        let stride = rng.gen_range(1..4);
        let len = rng.gen_range(1..25);
        let x = Array2::from_shape_fn((cin, len), |_| rng.gen_range(-2.0..2.0));
        let w = Array3::from_shape_fn((cout, cin, k), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(cout, |_| rng.gen_range(-1.0..1.0));
        let diff = match case % 4 {
            0 => max_diff(&conv1d(x.view(), w.view(), b.view(), stride), &naive_conv(&x, &w, &b, stride)),
            1 => max_diff(&deconv1d(x.view(), w.view(), b.view(), stride), &naive_deconv(&x, &w, &b, stride)),
            2 => {
                let g = Array1::from_shape_fn(cin, |_| rng.gen_range(0.5..1.5));
                let be = Array1::from_shape_fn(cin, |_| rng.gen_range(-0.5..0.5));
                let mut got = x.clone();
                layer_norm(&mut got, g.view(), be.view(), 1e-5);
                let mut want = x.clone();
                for t in 0..len {
                    let mean = (0..cin).map(|c| x[[c, t]]).sum::<f64>() / cin as f64;
                    let var = (0..cin).map(|c| (x[[c, t]] - mean).powi(2)).sum::<f64>() / cin as f64;
                    for c in 0..cin {
                        want[[c, t]] = g[c] * (x[[c, t]] - mean) / (var + 1e-5).sqrt() + be[c];
                    }
                }
                max_diff(&got, &want)
            }
            _ => {
                let got = x.mapv(silu);
                let want = x.mapv(|u| u / (1.0 + (-u).exp()));
                max_diff(&got, &want)
            }
        };
        worst = worst.max(diff);
    }
    outcome(worst < 1e-10, format!("{cases} shapes, max abs diff {worst:.2e}"))
}

fn poe_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut identity_exact = true;
    let mut checked = 0usize;
    for _ in 0..500 {
        let (d, n) = (rng.gen_range(1..17), rng.gen_range(1..40));
        let mu = Array2::from_shape_fn((d, n), |_| rng.gen_range(-5.0..5.0));
        let var = Array2::from_shape_fn((d, n), |_| 10f64.powf(rng.gen_range(-4.0..3.0)));
        let alpha = 10f64.powf(rng.gen_range(-3.0..2.0));
        let z = infer_latent_poe(mu.view(), var.view(), PoeConfig::new(alpha).unwrap());
        for ((zz, m), s) in z.iter().zip(&mu).zip(&var) {
            let want = m / (1.0 + alpha * s);
            worst = worst.max((zz - want).abs() / want.abs().max(1e-300));
            checked += 1;
        }
        let z0 = infer_latent_poe(mu.view(), var.view(), PoeConfig::new(0.0).unwrap());
        identity_exact &= z0 == mu;
    }
    outcome(
        worst <= 1e-15 && identity_exact,
        format!("{checked} entries, max rel err {worst:.1e}, alpha=0 exact {identity_exact}"),
    )
}

fn bench_tables() -> Outcome {
    let Command::Bench(args) =
        Cli::try_parse_from(["fastmvae", "bench", "--sources", "2,3,6", "--iters", "10"]).unwrap().command
    else {
        unreachable!()
    };
    let r = bench(&args).unwrap();
    let complete = [2, 3, 6].iter().all(|&j| {
        ["ilrma", "fastmvae2"].iter().all(|a| r.row(j, a).is_some_and(|row| row.iters == 10 && row.mean_s > 0.0))
    });
    let claim = match r.faster_than_ilrma_above_3_sources {
        SpeedClaim::Observed => "observed",
        SpeedClaim::NotObserved => "not observed",
        SpeedClaim::NotTested => "not tested",
    };
    outcome(complete, format!("6 rows for J in {{2,3,6}}; speed claim above 3 sources {claim} (reported only)"))
}

fn fixture_end_to_end() -> Outcome {
    let bundle = match load_model(FIXTURE) {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("load failed: {e}")),
    };
    let cfg = StftConfig::from_ms(16_000, 128.0, 0.5).unwrap();
    let mix = MixScenario::with_seed(0).render().unwrap();
    let x = stft(&mix.mixture, cfg).unwrap();
    let mut model = NeuralModel::new(Arc::new(bundle), NeuralConfig::default());
    match separate(&x, &mut model, SeparateOptions::default()) {
        Ok(r) => {
            let finite = r.neg_loglik.len() == 60 && r.neg_loglik.iter().all(|v| v.is_finite());
            outcome(finite, format!("{} iterations, all finite {finite}", r.neg_loglik.len()))
        }
        Err(e) => outcome(false, format!("separation failed: {e}")),
    }
}

fn fastmvae2_beats_iva() -> Outcome {
    let bundle = Arc::new(load_model(FIXTURE).unwrap());
    let cfg = StftConfig::from_ms(16_000, 128.0, 0.5).unwrap();
    let (mut neural, mut flat) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let mix = MixScenario::with_seed(seed).render().unwrap();
        let x = stft(&mix.mixture, cfg).unwrap();
        let opts = SeparateOptions { iters: 60, seed, ref_ch: 0 };
        let score = |m: &mut dyn fastmvae::lgm::SourceModel| {
            let r = separate(&x, m, opts).unwrap();
            let est = istft(&r.sources).unwrap().into_channels();
            evaluate(&est, &mix.images, Some(mix.mixture.channel(0))).unwrap().mean_improvement().unwrap()
        };
        neural.push(score(&mut NeuralModel::new(bundle.clone(), NeuralConfig::default())));
        flat.push(score(&mut NmfModel::iva()));
    }
    let (n, f) = (median(neural), median(flat));
    outcome(n >= f, format!("median improvement fastmvae2 {n:.2} dB vs iva {f:.2} dB over 20 seeds"))
}

fn main() -> ExitCode {
    // Timings are judged against a single laptop core.
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    let criteria: [Criterion; 8] = [
        ("stft round trip", stft_round_trip),
        ("ip with oracle variances", ip_oracle),
        ("ilrma monotonicity and separation", ilrma_separation),
        ("forward kernel oracles", kernel_oracles),
        ("poe closed form", poe_closed_form),
        ("benchmark tables", bench_tables),
        ("weight loader end to end", fixture_end_to_end),
        ("fastmvae2 vs iva", fastmvae2_beats_iva),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
