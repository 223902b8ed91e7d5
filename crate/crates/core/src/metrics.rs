//! Scale-invariant SDR with exhaustive permutation alignment.

use itertools::Itertools;
use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

/// Largest source count for the exhaustive permutation search.
pub const MAX_PERMUTATION_SOURCES: usize = 8;

/// `10 log10(|β r|^2 / |e - β r|^2)` with `β = <e, r> / |r|^2`.
///
/// A perfect (scaled) estimate returns `+inf`.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let beta = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let (target, residual) = est.iter().zip(reference).fold((0.0, 0.0), |(t, d), (&e, &r)| {
        let proj = beta * r;
        (t + proj * proj, d + (e - proj) * (e - proj))
    });
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target / residual).log10())
}

/// Scores of the best global assignment of estimates to references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// `permutation[j]` is the estimate assigned to reference `j`.
    pub permutation: Vec<usize>,
    #[serde(serialize_with = "ser_db_vec", deserialize_with = "de_db_vec")]
    pub si_sdr_db: Vec<f64>,
    #[serde(serialize_with = "ser_db_opt", deserialize_with = "de_db_opt", default)]
    pub input_si_sdr_db: Option<Vec<f64>>,
    #[serde(serialize_with = "ser_db_opt", deserialize_with = "de_db_opt", default)]
    pub improvement_db: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn mean_si_sdr(&self) -> f64 {
        mean(&self.si_sdr_db)
    }

    pub fn mean_improvement(&self) -> Option<f64> {
        self.improvement_db.as_deref().map(mean)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Finds the assignment of `ests` to `refs` maximizing mean SI-SDR, trying
/// every permutation. Ties go to the lexicographically first permutation.
pub fn permute_align(ests: &[Vec<f64>], refs: &[Vec<f64>]) -> Result<(Vec<usize>, EvalReport)> {
    let j = refs.len();
    if ests.len() != j {
        return Err(Error::DimensionMismatch(format!("{} estimates for {j} references", ests.len())));
    }
    if j > MAX_PERMUTATION_SOURCES {
        return Err(Error::TooManySources(j));
    }
    if j == 0 {
        return Err(Error::InvalidArgument("no sources to evaluate".into()));
    }
    // scores[r][e]
    let scores: Vec<Vec<f64>> =
        refs.iter().map(|r| ests.iter().map(|e| si_sdr(e, r)).collect::<Result<_>>()).collect::<Result<_>>()?;

    // Perfect matches score +inf; rank by how many there are, then by the
    // finite remainder, so that sums of infinities still compare.
    let mut best: Option<((usize, f64), Vec<usize>)> = None;
    for perm in (0..j).permutations(j) {
        let picked = perm.iter().enumerate().map(|(r, &e)| scores[r][e]);
        let exact = picked.clone().filter(|v| *v == f64::INFINITY).count();
        let finite: f64 = picked.filter(|v| v.is_finite()).sum();
        let total = (exact, finite);
        let better = match &best {
            None => true,
            Some((b, _)) => total.0 > b.0 || (total.0 == b.0 && total.1 > b.1),
        };
        if better {
            best = Some((total, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    let si_sdr_db = perm.iter().enumerate().map(|(r, &e)| scores[r][e]).collect();
    let report = EvalReport {
        schema_version: 1,
        permutation: perm.clone(),
        si_sdr_db,
        input_si_sdr_db: None,
        improvement_db: None,
    };
    Ok((perm, report))
}

/// Aligns and scores `ests`; when the mixture's reference channel is given,
/// also reports input SI-SDR and the improvement.
pub fn evaluate(ests: &[Vec<f64>], refs: &[Vec<f64>], mixture: Option<&[f64]>) -> Result<EvalReport> {
    let (_, mut report) = permute_align(ests, refs)?;
    if let Some(mix) = mixture {
        let input: Vec<f64> = refs.iter().map(|r| si_sdr(mix, r)).collect::<Result<_>>()?;
        report.improvement_db = Some(report.si_sdr_db.iter().zip(&input).map(|(o, i)| o - i).collect());
        report.input_si_sdr_db = Some(input);
    }
    Ok(report)
}

// JSON has no infinities; encode them as strings.
fn db_to_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::json!("nan")
    } else if v > 0.0 {
        serde_json::json!("+inf")
    } else {
        serde_json::json!("-inf")
    }
}

fn db_from_json(v: &serde_json::Value) -> std::result::Result<f64, String> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| "bad number".to_string()),
        serde_json::Value::String(s) => match s.as_str() {
            "+inf" | "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(format!("bad dB value `{other}`")),
        },
        other => Err(format!("bad dB value {other}")),
    }
}

fn ser_db_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| db_to_json(x)))
}

fn ser_db_opt<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_db_vec(v, s),
        None => s.serialize_none(),
    }
}

fn de_db_vec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw = Vec::<serde_json::Value>::deserialize(d)?;
    raw.iter().map(|v| db_from_json(v).map_err(serde::de::Error::custom)).collect()
}

fn de_db_opt<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    let raw = Option::<Vec<serde_json::Value>>::deserialize(d)?;
    raw.map(|r| r.iter().map(|v| db_from_json(v).map_err(serde::de::Error::custom)).collect()).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn perfect_and_scaled_are_infinite() {
        let r = noise(1, 500);
        assert_eq!(si_sdr(&r, &r).unwrap(), f64::INFINITY);
        let scaled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        assert_eq!(si_sdr(&scaled, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn orthogonal_noise_at_twenty_db() {
        let r = noise(2, 4000);
        let mut w = noise(3, 4000);
        let rr: f64 = r.iter().map(|x| x * x).sum();
        let proj = w.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
        for (wi, ri) in w.iter_mut().zip(&r) {
            *wi -= proj * ri;
        }
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let k = (rr / 100.0 / ww).sqrt();
        let est: Vec<f64> = r.iter().zip(&w).map(|(a, b)| a + k * b).collect();
        assert!((si_sdr(&est, &r).unwrap() - 20.0).abs() < 0.1);
    }

    #[test]
    fn zero_reference_is_an_error() {
        assert!(matches!(si_sdr(&[1.0, 2.0], &[0.0, 0.0]), Err(Error::ZeroReference)));
    }

    #[test]
    fn recovers_shuffle_and_single_source() {
        let refs: Vec<Vec<f64>> = (0..3).map(|s| noise(10 + s, 300)).collect();
        let ests = vec![refs[2].clone(), refs[0].clone(), refs[1].clone()];
        let (perm, report) = permute_align(&ests, &refs).unwrap();
        assert_eq!(perm, vec![1, 2, 0]);
        assert!(report.si_sdr_db.iter().all(|v| v.is_infinite()));

        let (perm, _) = permute_align(&refs[..1], &refs[..1]).unwrap();
        assert_eq!(perm, vec![0]);
    }

    #[test]
    fn brute_force_three_sources() {
        let refs: Vec<Vec<f64>> = (0..3).map(|s| noise(20 + s, 400)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let ests: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (0..400).map(|t| (0..3).map(|k| w[k] * refs[k][t]).sum()).collect()
            })
            .collect();
        let (perm, report) = permute_align(&ests, &refs).unwrap();
        let all = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let score = |p: &[usize]| -> f64 { (0..3).map(|r| si_sdr(&ests[p[r]], &refs[r]).unwrap()).sum() };
        let best = all.iter().map(|p| score(p)).fold(f64::NEG_INFINITY, f64::max);
        assert!((score(&perm) - best).abs() < 1e-12);
        assert!((report.si_sdr_db.iter().sum::<f64>() - best).abs() < 1e-9);
    }

    #[test]
    fn too_many_sources() {
        let refs: Vec<Vec<f64>> = (0..9).map(|s| noise(s, 10)).collect();
        assert!(matches!(permute_align(&refs, &refs), Err(Error::TooManySources(9))));
    }

    #[test]
    fn report_json_keeps_infinities() {
        let r = noise(1, 100);
        let mix: Vec<f64> = r.iter().zip(noise(2, 100)).map(|(a, b)| a + b).collect();
        let rep = evaluate(std::slice::from_ref(&r), std::slice::from_ref(&r), Some(&mix)).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        assert!(text.contains("\"+inf\""));
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.si_sdr_db[0], f64::INFINITY);
        assert_eq!(back.improvement_db.unwrap()[0], f64::INFINITY);
    }

    proptest! {
        #[test]
        fn scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let r = noise(seed, 64);
            let e = noise(seed + 1, 64);
            let scaled: Vec<f64> = e.iter().map(|x| x * scale).collect();
            let a = si_sdr(&e, &r).unwrap();
            let b = si_sdr(&scaled, &r).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn alignment_never_worse_than_identity(seed in 0u64..500, j in 1usize..5) {
            let refs: Vec<Vec<f64>> = (0..j as u64).map(|s| noise(seed * 10 + s, 50)).collect();
            let ests: Vec<Vec<f64>> = (0..j as u64).map(|s| noise(seed * 10 + s + 100, 50)).collect();
            let (_, rep) = permute_align(&ests, &refs).unwrap();
            let ident: f64 = (0..j).map(|r| si_sdr(&ests[r], &refs[r]).unwrap()).sum();
            prop_assert!(rep.si_sdr_db.iter().sum::<f64>() >= ident - 1e-12);
        }
    }
}
