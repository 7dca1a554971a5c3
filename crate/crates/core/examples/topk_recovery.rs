//! Train a Top-K (k = 1) SAE with two latents on the 2D landscape data,
//! raw and whitened, and score both against the true dictionary.
//!
//! cargo run --release --example topk_recovery -- [seed]

use whitebench::experiments::{topk_2d_recovery, TopkRecoveryConfig};

fn main() -> whitebench::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = TopkRecoveryConfig::default();
    cfg.data.seed = seed;
    cfg.run.init_seed = seed;
    cfg.run.train.seed = seed;

    let pair = topk_2d_recovery(&cfg)?;
    for (name, run) in [("raw", &pair.raw), ("whitened", &pair.whitened)] {
        println!(
            "{name:>9}: mcc {:.4}  explained variance {:.4}  final loss {:.4e}",
            run.eval.mcc.unwrap_or(f64::NAN),
            run.eval.explained_variance,
            run.train.final_recon_mse
        );
    }
    println!("learned dictionary (whitened model, input space):");
    let dict = pair.whitened.model.input_space_dictionary()?;
    for r in dict.row_iter() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("  [{:+.4}, {:+.4}]", r[0] / norm, r[1] / norm);
    }
    Ok(())
}
