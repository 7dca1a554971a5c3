//! Paired ReLU SAEs on labeled spike-and-slab data: sparse-probe accuracy
//! with and without whitening, one pair per seed.
//!
//! cargo run --release --example relu_probing -- [num_seeds]

use whitebench::experiments::{probing_study, ProbingConfig};

fn main() -> whitebench::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(10, |s| s.parse().expect("num_seeds"));
    let cfg = ProbingConfig {
        seeds: (0..seeds).collect(),
        ..ProbingConfig::default()
    };
    let pairs = probing_study(&cfg)?;
    println!("seed | probe raw | probe white | mcc raw | mcc white | L0 raw | L0 white");
    for p in &pairs {
        println!(
            "{:>4} | {:>9.4} | {:>11.4} | {:>7.4} | {:>9.4} | {:>6.2} | {:>8.2}",
            p.seed,
            p.raw.sparse_probe_top1_accuracy.unwrap_or(f64::NAN),
            p.whitened.sparse_probe_top1_accuracy.unwrap_or(f64::NAN),
            p.raw.mcc.unwrap_or(f64::NAN),
            p.whitened.mcc.unwrap_or(f64::NAN),
            p.raw.mean_l0,
            p.whitened.mean_l0
        );
    }
    let mean = |f: &dyn Fn(&whitebench::experiments::ProbingPair) -> f64| {
        pairs.iter().map(f).sum::<f64>() / pairs.len() as f64
    };
    println!(
        "mean probe accuracy: raw {:.4}, whitened {:.4}",
        mean(&|p| p.raw.sparse_probe_top1_accuracy.unwrap_or(f64::NAN)),
        mean(&|p| p.whitened.sparse_probe_top1_accuracy.unwrap_or(f64::NAN))
    );
    Ok(())
}
