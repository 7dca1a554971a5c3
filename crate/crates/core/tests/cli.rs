use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use whitebench::cli::run_from;
use whitebench::config::{Preset, RunConfig};
use whitebench::experiments::fit_whitener;
use whitebench::formats::{self, parse_key_values};
use whitebench::landscape::{cell_dictionary, MASK_DET_FLOOR};
use whitebench::metrics::explained_variance;
use whitebench::sae::{self, init_params};
use whitebench::synthgen::{gen_landscape_2d_with, gen_sparse_sae_data_with};

fn wb(args: &[&str]) -> whitebench::Result<()> {
    run_from(std::iter::once("whitebench").chain(args.iter().copied()))
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn kv(path: &Path) -> Vec<(String, String)> {
    parse_key_values(&fs::read_to_string(path).unwrap()).unwrap()
}

fn get(pairs: &[(String, String)], key: &str) -> Option<String> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
}

fn sparse_data(dir: &TempDir, extra: &[&str]) -> PathBuf {
    let out = path(dir, "data");
    let mut args = vec![
        "gen-data", "--preset", "sparse", "--seed", "3", "--set", "n=600", "--set", "d=6", "--set", "m=8",
    ];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", s(&out)]);
    wb(&args).unwrap();
    out
}

#[test]
fn gen_data_is_deterministic_and_reloads_exactly() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    for out in [&a, &b] {
        wb(&["gen-data", "--preset", "landscape2d", "--seed", "7", "--out", s(out)]).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5, "{names:?}");
    for name in &names {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name:?} differs"
        );
    }

    let cfg = RunConfig::from_text(&fs::read_to_string(a.join("config.txt")).unwrap(), Preset::Sparse).unwrap();
    let expected = gen_landscape_2d_with(&cfg.landscape_data()).unwrap();
    assert_eq!(formats::read_dataset(&a).unwrap(), expected);

    let manifest = kv(&a.join("manifest.txt"));
    for (k, v) in cfg.data_pairs() {
        assert_eq!(get(&manifest, &k), Some(v), "manifest key {k}");
    }
    assert_eq!(get(&manifest, "seed").as_deref(), Some("7"));
}

#[test]
fn sparse_labeled_data_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = sparse_data(&dir, &["--set", "labeled=true"]);
    let cfg = RunConfig::from_text(&fs::read_to_string(out.join("config.txt")).unwrap(), Preset::Sparse).unwrap();
    let data = formats::read_dataset(&out).unwrap();
    assert_eq!(data, gen_sparse_sae_data_with(&cfg.sparse_data()).unwrap());
    assert!(data.labels.is_some());
}

#[test]
fn raw_training_matches_direct_sae_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &["--set", "labeled=false"]);
    let (t1, t2, ev) = (path(&dir, "t1"), path(&dir, "t2"), path(&dir, "ev"));
    for out in [&t1, &t2] {
        wb(&[
            "train",
            "--data",
            s(&data_dir),
            "--whiten",
            "false",
            "--seed",
            "3",
            "--set",
            "steps=200",
            "--set",
            "lr_warmup_steps=10",
            "--set",
            "sparsity_warmup_steps=10",
            "--out",
            s(out),
        ])
        .unwrap();
    }
    assert_eq!(
        fs::read(t1.join("model.bin")).unwrap(),
        fs::read(t2.join("model.bin")).unwrap()
    );

    let cfg = RunConfig::from_text(&fs::read_to_string(t1.join("config.txt")).unwrap(), Preset::Sparse).unwrap();
    let data = formats::read_dataset(&data_dir).unwrap();
    let spec = cfg.run_spec();
    let p0 = init_params(data.dim(), spec.width, spec.arch, spec.init_seed).unwrap();
    let (direct, report) = sae::train(&p0, &data.observations, &spec.train).unwrap();
    let file = formats::load_model(&t1.join("model.bin")).unwrap();
    assert!(file.model.whitener().is_none());
    assert_eq!(file.model.sae, direct);

    wb(&[
        "eval",
        "--model",
        s(&t1.join("model.bin")),
        "--data",
        s(&data_dir),
        "--out",
        s(&ev),
    ])
    .unwrap();
    let eval = kv(&ev.join("eval.txt"));
    let xhat = sae::decode(&direct, &sae::encode(&direct, &data.observations).unwrap()).unwrap();
    let ev_direct = explained_variance(&data.observations, &xhat).unwrap();
    let ev_file: f64 = get(&eval, "explained_variance").unwrap().parse().unwrap();
    assert_eq!(ev_file, ev_direct);

    // explained variance cross-checked against the training report
    let x = &data.observations;
    let means = x.column_means();
    let total_var = x
        .row_iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / x.rows() as f64;
    let tr = kv(&t1.join("train_report.txt"));
    let mse: f64 = get(&tr, "final_recon_mse").unwrap().parse().unwrap();
    assert_eq!(mse, report.final_recon_mse);
    assert!((ev_file - (1.0 - mse / total_var)).abs() < 1e-10);

    // no labels: probe fields absent
    assert!(get(&eval, "sparse_probe_top1_accuracy").is_none());
    assert!(fs::read_to_string(ev.join("eval.csv"))
        .unwrap()
        .starts_with("run_id,variant,explained_variance"));
}

#[test]
fn whitened_model_applies_the_whitener_once() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &["--set", "labeled=true", "--set", "source_sparsity=0.2"]);
    let (t, ev) = (path(&dir, "t"), path(&dir, "ev"));
    wb(&[
        "train",
        "--data",
        s(&data_dir),
        "--whiten",
        "true",
        "--set",
        "steps=150",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--out",
        s(&t),
    ])
    .unwrap();
    let file = formats::load_model(&t.join("model.bin")).unwrap();
    let data = formats::read_dataset(&data_dir).unwrap();
    let w = file.model.whitener().expect("whitener stored");
    assert_eq!(w, &fit_whitener(&data.observations, 8192, 1e-8).unwrap());

    wb(&[
        "eval",
        "--model",
        s(&t.join("model.bin")),
        "--data",
        s(&data_dir),
        "--out",
        s(&ev),
    ])
    .unwrap();
    let z = w.whiten(&data.observations).unwrap();
    let p = &file.model.sae;
    let xhat = w
        .dewhiten(&sae::decode(p, &sae::encode(p, &z).unwrap()).unwrap())
        .unwrap();
    let manual = explained_variance(&data.observations, &xhat).unwrap();
    let eval = kv(&ev.join("eval.txt"));
    assert_eq!(
        get(&eval, "explained_variance").unwrap().parse::<f64>().unwrap(),
        manual
    );
    assert!(get(&eval, "sparse_probe_top1_accuracy").is_some());
    assert!(get(&eval, "mcc").is_some());
    let csv = fs::read_to_string(ev.join("eval.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0,whitened,"), "{csv}");
}

#[test]
fn prefitted_whitener_gives_the_same_model() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &[]);
    let (fw, a, b) = (path(&dir, "fw"), path(&dir, "a"), path(&dir, "b"));
    wb(&["fit-whitener", "--data", s(&data_dir), "--out", s(&fw)]).unwrap();
    let summary = kv(&fw.join("whitener.txt"));
    assert!(get(&summary, "max_covariance_error").unwrap().parse::<f64>().unwrap() < 1e-4);
    wb(&[
        "train",
        "--data",
        s(&data_dir),
        "--set",
        "steps=50",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--out",
        s(&a),
    ])
    .unwrap();
    wb(&[
        "train",
        "--data",
        s(&data_dir),
        "--set",
        "steps=50",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--whitener",
        s(&fw.join("whitener.bin")),
        "--out",
        s(&b),
    ])
    .unwrap();
    assert_eq!(
        fs::read(a.join("model.bin")).unwrap(),
        fs::read(b.join("model.bin")).unwrap()
    );
}

#[test]
fn paired_training_writes_a_comparison_row_per_variant() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &["--set", "labeled=true"]);
    let out = path(&dir, "pair");
    wb(&[
        "train",
        "--data",
        s(&data_dir),
        "--paired",
        "--seed",
        "4",
        "--set",
        "steps=100",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--out",
        s(&out),
    ])
    .unwrap();
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("run_id,variant,explained_variance,mean_l0,mcc,sparse_probe_top1_accuracy"));
    assert!(lines[1].starts_with("4,raw,") && lines[2].starts_with("4,whitened,"));
    assert!(formats::load_model(&out.join("raw/model.bin"))
        .unwrap()
        .model
        .whitener()
        .is_none());
    assert!(formats::load_model(&out.join("whitened/model.bin"))
        .unwrap()
        .model
        .whitener()
        .is_some());
}

#[test]
fn landscape_grids_satisfy_invariants_in_both_formats() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "ls");
    wb(&[
        "landscape",
        "--resolution",
        "64",
        "--seed",
        "1",
        "--set",
        "n=2000",
        "--out",
        s(&out),
    ])
    .unwrap();
    for metric in ["sparsity", "recovery"] {
        for data in ["raw", "whitened"] {
            let stem = format!("{metric}_{data}");
            let csv = formats::grid_from_csv(&fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap()).unwrap();
            let bin = formats::grid_from_bytes(&fs::read(out.join(format!("{stem}.bin"))).unwrap()).unwrap();
            assert!(csv.bit_eq(&bin), "{stem}");
            assert_eq!(bin.resolution, 64);
            for i in 0..64 {
                for j in 0..64 {
                    let w = cell_dictionary(i, j, 64);
                    let det = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
                    assert_eq!(bin.mask[i * 64 + j], det.abs() < MASK_DET_FLOOR);
                    assert_eq!(bin.mask[i * 64 + j], bin.mask[j * 64 + i]);
                    if let Some(v) = bin.get(i, j) {
                        assert!(v.is_finite());
                    }
                }
            }
            if metric == "recovery" {
                assert!(bin.transposed().bit_eq(&bin), "{stem} not symmetric");
            }
        }
    }
    let summary = kv(&out.join("alignment.txt"));
    assert!(get(&summary, "spearman_raw").is_some());
    assert!(get(&summary, "spearman_whitened").is_some());
}

#[test]
fn landscape_rejects_non_2d_data() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &[]);
    let err = wb(&[
        "landscape",
        "--data",
        s(&data_dir),
        "--resolution",
        "16",
        "--out",
        s(&path(&dir, "ls")),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("2D"), "{err}");
}

#[test]
fn eval_names_both_dimensions_on_mismatch() {
    let dir = TempDir::new().unwrap();
    let data_dir = sparse_data(&dir, &[]);
    let l2 = path(&dir, "l2");
    let t = path(&dir, "t");
    wb(&["gen-data", "--preset", "landscape2d", "--set", "n=300", "--out", s(&l2)]).unwrap();
    wb(&[
        "train",
        "--data",
        s(&l2),
        "--set",
        "steps=20",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--out",
        s(&t),
    ])
    .unwrap();
    let err = wb(&[
        "eval",
        "--model",
        s(&t.join("model.bin")),
        "--data",
        s(&data_dir),
        "--out",
        s(&path(&dir, "e")),
    ])
    .unwrap_err()
    .to_string();
    assert!(err.contains("d = 2") && err.contains("d = 6"), "{err}");
}

#[test]
fn config_file_and_flags_resolve_in_order() {
    let dir = TempDir::new().unwrap();
    let cfg_path = path(&dir, "run.txt");
    fs::write(&cfg_path, "preset=landscape2d\nseed=11\nn=100\n").unwrap();
    let out = path(&dir, "g");
    wb(&["gen-data", "--config", s(&cfg_path), "--seed", "12", "--out", s(&out)]).unwrap();
    let written = RunConfig::from_text(&fs::read_to_string(out.join("config.txt")).unwrap(), Preset::Sparse).unwrap();
    assert_eq!(written.preset, Preset::Landscape2d);
    assert_eq!(written.seed, 12);
    assert_eq!(written.n, 100);
    assert_eq!(written.to_pairs().len(), whitebench::config::KEYS.len());

    fs::write(&cfg_path, "seed=1\nwarmup=3\n").unwrap();
    let err = wb(&["gen-data", "--config", s(&cfg_path), "--out", s(&path(&dir, "h"))]).unwrap_err();
    assert!(err.to_string().contains("warmup"));
}

#[test]
fn export_figure_data_writes_grids_and_pairs() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "fig");
    wb(&[
        "export-figure-data",
        "--resolution",
        "16",
        "--set",
        "n=500",
        "--set",
        "steps=50",
        "--set",
        "lr_warmup_steps=10",
        "--set",
        "sparsity_warmup_steps=10",
        "--set",
        "figure_pairs=2",
        "--out",
        s(&out),
    ])
    .unwrap();
    for f in [
        "landscape/sparsity_raw.csv",
        "landscape/recovery_whitened.bin",
        "landscape/alignment.txt",
        "config.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("pairs/comparison.csv")).unwrap();
    let ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["0", "0", "1", "1"]);
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_whitebench");
    let ok = Command::new(bin)
        .args([
            "gen-data",
            "--preset",
            "landscape2d",
            "--set",
            "n=200",
            "--out",
            s(&path(&dir, "d")),
        ])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = Command::new(bin)
        .args(["gen-data", "--set", "stepz=1", "--out", s(&path(&dir, "x"))])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("stepz"));

    let diverged = Command::new(bin)
        .args([
            "train",
            "--data",
            s(&path(&dir, "d")),
            "--whiten",
            "false",
            "--set",
            "learning_rate=1e300",
        ])
        .args(["--set", "lr_warmup_steps=0", "--out", s(&path(&dir, "t"))])
        .output()
        .unwrap();
    assert!(!diverged.status.success());
    assert!(
        String::from_utf8_lossy(&diverged.stderr).contains("step"),
        "{}",
        String::from_utf8_lossy(&diverged.stderr)
    );

    let usage = Command::new(bin)
        .args(["train", "--arch", "gelu", "--out", "y"])
        .output()
        .unwrap();
    assert!(!usage.status.success());
}
