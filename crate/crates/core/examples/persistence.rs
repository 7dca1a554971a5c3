//! Save and reload a whitened model and a landscape grid, checking the
//! round trips are bit-exact.
//!
//! cargo run --release --example persistence

use whitebench::experiments::{fit_whitener, DEFAULT_WHITENER_SAMPLES};
use whitebench::formats::{self, ModelFile};
use whitebench::landscape::sweep;
use whitebench::pipeline::{Mode, WhitenedSae};
use whitebench::sae::{init_params, Arch};
use whitebench::synthgen::gen_landscape_2d;
use whitebench::whitening::DEFAULT_EPSILON;

fn main() -> whitebench::Result<()> {
    let dir = std::env::temp_dir().join("whitebench-persistence");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let data = gen_landscape_2d(4000, 1)?;

    let w = fit_whitener(&data.observations, DEFAULT_WHITENER_SAMPLES, DEFAULT_EPSILON)?;
    let sae = init_params(2, 2, Arch::TopK { k: 1 }, 1)?;
    let file = ModelFile {
        model: WhitenedSae::new(sae, Mode::Whitened(w))?,
        normalize_decoder: false,
    };
    let path = dir.join("model.bin");
    formats::save_model(&path, &file)?;
    let back = formats::load_model(&path)?;
    println!(
        "model: {} bytes, round trip exact: {}",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        back == file
    );

    let (sparsity, _) = sweep(&data, 32, true, false)?;
    let bin = formats::grid_to_bytes(&sparsity);
    let csv = formats::grid_to_csv(&sparsity);
    let from_bin = formats::grid_from_bytes(&bin)?;
    let from_csv = formats::grid_from_csv(&csv)?;
    println!(
        "grid: binary exact {}, csv exact {}, header {:?}",
        from_bin.bit_eq(&sparsity),
        from_csv.bit_eq(&sparsity),
        csv.lines().next().unwrap_or("")
    );

    formats::write_dataset(&dir.join("data"), &data, &[])?;
    let reloaded = formats::read_dataset(&dir.join("data"))?;
    println!("dataset: csv round trip exact {}", reloaded == data);
    Ok(())
}
