use anyhow::{Context, Result};
use fastmvae::metrics::{evaluate, EvalReport};
use fastmvae::signal::read_wav;

use crate::table::{db, render};
use crate::{read_dir_sources, write_json, EvalArgs};

pub fn run(args: &EvalArgs) -> Result<EvalReport> {
    let ests = read_dir_sources(&args.est)?;
    let refs = read_dir_sources(&args.reference)?;
    let mix = match &args.mix {
        Some(p) => Some(read_wav(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let est_sig: Vec<Vec<f64>> = ests.iter().map(|(_, w)| w.channel(0).to_vec()).collect();
    let ref_sig: Vec<Vec<f64>> = refs.iter().map(|(_, w)| w.channel(0).to_vec()).collect();
    let report = evaluate(&est_sig, &ref_sig, mix.as_ref().map(|m| m.channel(0)))?;

    let name = |p: &std::path::Path| p.file_name().map_or(String::new(), |n| n.to_string_lossy().into_owned());
    let rows: Vec<Vec<String>> = (0..refs.len())
        .map(|j| {
            let mut row = vec![name(&refs[j].0), name(&ests[report.permutation[j]].0), db(report.si_sdr_db[j])];
            if let Some(imp) = &report.improvement_db {
                row.push(db(imp[j]));
            }
            row
        })
        .collect();
    let mut header = vec!["reference", "estimate", "SI-SDR dB"];
    if report.improvement_db.is_some() {
        header.push("SI-SDRi dB");
    }
    print!("{}", render(&header, &rows));
    match report.mean_improvement() {
        Some(i) => println!("mean SI-SDR {} dB, mean improvement {} dB", db(report.mean_si_sdr()), db(i)),
        None => println!("mean SI-SDR {} dB", db(report.mean_si_sdr())),
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}
