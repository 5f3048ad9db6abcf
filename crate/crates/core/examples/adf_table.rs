//! Regenerates `data/adf_quantiles.csv`: simulated quantiles of the
//! Dickey–Fuller t-statistic for random walks of length 500.
//!
//! cargo run --release -p spotvol-core --example adf_table -- [draws] [out]

use rand::Rng;
use rand_distr::StandardNormal;
use spotvol_core::rng::substream;
use spotvol_core::stats::adf::{adf_regression, Deterministic};
use std::io::Write;

const T: usize = 500;
const SEED: u64 = 20_240_501;

fn probs() -> Vec<f64> {
    let mut p = vec![0.0001, 0.0005, 0.001, 0.0025, 0.005, 0.0075];
    p.extend((0..18).map(|i| 0.01 + 0.005 * i as f64));
    p.extend((10..=99).map(|i| i as f64 / 100.0));
    p.extend([0.995, 0.999, 0.9995, 0.9999]);
    p
}

fn simulate(det: Deterministic, draws: usize, threads: usize) -> Vec<f64> {
    let chunk = draws.div_ceil(threads);
    let mut out: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                s.spawn(move || {
                    let mut stats = Vec::new();
                    let mut y = vec![0.0; T];
                    for i in (k * chunk)..((k + 1) * chunk).min(draws) {
                        let mut rng = substream(SEED + det as u64, i as u64);
                        let mut acc = 0.0;
                        for v in y.iter_mut() {
                            acc += rng.sample::<f64, _>(StandardNormal);
                            *v = acc;
                        }
                        stats.push(adf_regression(&y, 0, det, 1).expect("regression").t_stat);
                    }
                    stats
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    out.sort_by(f64::total_cmp);
    out
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let f = h - lo as f64;
    sorted[lo] + f * (sorted[(lo + 1).min(sorted.len() - 1)] - sorted[lo])
}

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let draws: usize = args.get(1).map_or(1_000_000, |s| s.parse().expect("draw count"));
    let out = args.get(2).cloned().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/adf_quantiles.csv").to_string());
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let cols: Vec<Vec<f64>> = Deterministic::ALL.iter().map(|&d| simulate(d, draws, threads)).collect();
    let mut f = std::fs::File::create(&out)?;
    writeln!(f, "# Dickey-Fuller t quantiles, random walk T = {T}, {draws} draws per column, seed {SEED}")?;
    writeln!(f, "prob,nc,c,ct")?;
    for p in probs() {
        writeln!(f, "{p},{:.5},{:.5},{:.5}", quantile(&cols[0], p), quantile(&cols[1], p), quantile(&cols[2], p))?;
    }
    eprintln!("wrote {out}");
    Ok(())
}
