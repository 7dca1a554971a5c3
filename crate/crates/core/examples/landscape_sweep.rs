//! Sweep every 2D unit-row dictionary on the landscape dataset and compare
//! how well sparsity tracks feature recovery before and after whitening.
//!
//! cargo run --release --example landscape_sweep -- [resolution] [seed]

use whitebench::experiments::landscape_study;
use whitebench::landscape::SweepConfig;
use whitebench::synthgen::gen_landscape_2d;

fn main() -> whitebench::Result<()> {
    let mut args = std::env::args().skip(1);
    let resolution = args.next().map_or(256, |s| s.parse().expect("resolution"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let data = gen_landscape_2d(10_000, seed)?;
    let cfg = SweepConfig {
        resolution,
        ..SweepConfig::default()
    };
    let study = landscape_study(&data, &cfg)?;
    println!(
        "resolution {resolution}, {} masked cells per grid",
        study.raw.0.masked_count()
    );
    for (name, s) in [("raw", &study.raw_stats), ("whitened", &study.whitened_stats)] {
        let (i, j) = s.argmax_sparsity_cell;
        println!(
            "{name:>9}: sparsest cell ({i}, {j}) theta = ({:.3}, {:.3}), recovery there {:.4}, spearman {:.3}",
            study.raw.0.theta(i),
            study.raw.0.theta(j),
            s.recovery_at_sparsity_argmax,
            s.spearman_correlation
        );
    }
    Ok(())
}
