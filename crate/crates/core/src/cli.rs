//! The `whitebench` command line.
//!
//! Every command writes into its `--out` directory only, starting with the
//! fully resolved `config.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{Preset, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{self, landscape_study, paired_run, train_model_with, LandscapeStudy};
use crate::formats::{self, ModelFile};
use crate::landscape::{AlignmentStats, LandscapeGrid};
use crate::metrics::{fmt_real, EvalReport};
use crate::numkit::Matrix;
use crate::sae::TrainReport;
use crate::synthgen::{gen_landscape_2d_with, gen_sparse_sae_data_with, SynthDataset};
use crate::{parallel, whitening::Whitener};

pub const CONFIG_FILE: &str = "config.txt";
pub const MODEL_FILE: &str = "model.bin";
pub const WHITENER_FILE: &str = "whitener.bin";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.txt";
pub const EVAL_TEXT_FILE: &str = "eval.txt";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const ALIGNMENT_FILE: &str = "alignment.txt";

#[derive(Debug, Parser)]
#[command(
    name = "whitebench",
    version,
    about = "PCA whitening for sparse autoencoders at desk scale"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSV files plus manifest).
    GenData(Common),
    /// Fit a PCA whitener on a dataset.
    FitWhitener {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Train an SAE (raw or whitened) on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Use this whitener file instead of fitting one.
        #[arg(long, value_name = "PATH")]
        whitener: Option<PathBuf>,
        /// Train the raw and whitened twins and write a comparison table.
        #[arg(long)]
        paired: bool,
    },
    /// Evaluate a model file on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Sweep the 2D dictionary landscape and export the grids.
    Landscape {
        #[command(flatten)]
        common: Common,
        /// 2D dataset; generated from the config when absent.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GridFormat::Both)]
        format: GridFormat,
    },
    /// Write everything the figure scripts read: landscape grids and paired-run tables.
    ExportFigureData(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Relu,
    Topk,
}

/// Flags shared by every command. Each one overrides the matching config key.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key=value config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["landscape2d", "sparse"])]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "BOOL")]
    pub whiten: Option<bool>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Extra config override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

impl Common {
    fn flag_pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("preset", self.preset.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("whiten", self.whiten.map(|v| v.to_string()));
        push(
            "arch",
            self.arch.map(|a| match a {
                ArchArg::Relu => "relu".to_string(),
                ArchArg::Topk => "topk".to_string(),
            }),
        );
        push("lambda", self.lambda.map(|v| format!("{v:?}")));
        push("k", self.k.map(|v| v.to_string()));
        push("width", self.width.map(|v| v.to_string()));
        push("resolution", self.resolution.map(|v| v.to_string()));
        Ok(pairs)
    }

    /// Config file keys, then flags, over the defaults of the named preset
    /// (or `fallback`).
    pub fn resolve(&self, fallback: Preset) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(path) => formats::parse_key_values(&formats::read_text(path)?)?,
            None => Vec::new(),
        };
        pairs.extend(self.flag_pairs()?);
        RunConfig::resolve(&pairs, fallback)
    }

    /// Resolves the config, creates `--out` and writes `config.txt` into it.
    fn prepare(&self, fallback: Preset) -> Result<RunConfig> {
        let cfg = self.resolve(fallback)?;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        formats::write_text(&self.out.join(CONFIG_FILE), &cfg.to_text())?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            Ok(())
        }
        Err(e) => {
            let msg = e.to_string();
            Err(Error::Config(msg.trim_start_matches("error: ").trim_end().to_string()))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    parallel::install(|| match cli.command {
        Command::GenData(common) => gen_data(&common),
        Command::FitWhitener { common, data } => fit_whitener(&common, &data),
        Command::Train {
            common,
            data,
            whitener,
            paired,
        } => train(&common, &data, whitener.as_deref(), paired),
        Command::Eval { common, model, data } => eval(&common, &model, &data),
        Command::Landscape { common, data, format } => landscape(&common, data.as_deref(), format),
        Command::ExportFigureData(common) => export_figure_data(&common),
    })
}

pub fn generate(cfg: &RunConfig) -> Result<SynthDataset> {
    match cfg.preset {
        Preset::Landscape2d => gen_landscape_2d_with(&cfg.landscape_data()),
        Preset::Sparse => gen_sparse_sae_data_with(&cfg.sparse_data()),
    }
}

/// Preset recorded in a dataset manifest, if any.
fn dataset_preset(dir: &Path) -> Option<Preset> {
    let text = formats::read_text(&dir.join(formats::MANIFEST)).ok()?;
    let pairs = formats::parse_key_values(&text).ok()?;
    pairs.into_iter().find(|(k, _)| k == "preset")?.1.parse().ok()
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = common.prepare(Preset::Sparse)?;
    let data = generate(&cfg)?;
    formats::write_dataset(&common.out, &data, &cfg.data_pairs())?;
    info!(
        "wrote {} rows of {} data to {}",
        data.len(),
        cfg.preset.name(),
        common.out.display()
    );
    Ok(())
}

fn whitening_error(w: &Whitener, x: &Matrix) -> Result<(f64, f64)> {
    let z = w.whiten(x)?;
    let (_, cov) = z.covariance()?;
    let cov_err = cov.max_abs_diff(&Matrix::identity(cov.rows()));
    let round_trip = w.dewhiten(&z)?.max_abs_diff(x);
    Ok((cov_err, round_trip))
}

fn fit_whitener(common: &Common, dir: &Path) -> Result<()> {
    let cfg = common.prepare(dataset_preset(dir).unwrap_or(Preset::Sparse))?;
    let data = formats::read_dataset(dir)?;
    let w = experiments::fit_whitener(&data.observations, cfg.whitener_samples, cfg.epsilon)?;
    formats::save_whitener(&common.out.join(WHITENER_FILE), &w)?;
    let take: Vec<usize> = (0..cfg.whitener_samples.min(data.len())).collect();
    let (cov_err, round_trip) = whitening_error(&w, &data.observations.select_rows(&take))?;
    let eig: Vec<String> = w.eigenvalues().iter().map(|&v| fmt_real(v)).collect();
    let summary = format!(
        "dim={}\nsamples={}\nepsilon={}\neigenvalues={}\nmax_covariance_error={}\nmax_round_trip_error={}\n",
        w.dim(),
        take.len(),
        fmt_real(w.epsilon()),
        eig.join(" "),
        fmt_real(cov_err),
        fmt_real(round_trip)
    );
    formats::write_text(&common.out.join("whitener.txt"), &summary)
}

fn train_report_text(r: &TrainReport, whitened: bool) -> String {
    format!(
        "whitened={whitened}\nsteps={}\nfinal_recon_mse={}\nfinal_mean_l0={}\ndead_latents={}\n",
        r.steps,
        fmt_real(r.final_recon_mse),
        fmt_real(r.final_mean_l0),
        r.dead_latents
    )
}

fn write_trained(dir: &Path, file: &ModelFile, report: &TrainReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !file.model.sae.is_finite() || !report.final_recon_mse.is_finite() {
        return Err(Error::NonFinite("trained model"));
    }
    formats::save_model(&dir.join(MODEL_FILE), file)?;
    formats::write_text(&dir.join(LOSS_TRACE_FILE), &formats::loss_trace_csv(&report.loss_trace))?;
    formats::write_text(
        &dir.join(TRAIN_REPORT_FILE),
        &train_report_text(report, file.model.whitener().is_some()),
    )
}

fn train(common: &Common, dir: &Path, whitener: Option<&Path>, paired: bool) -> Result<()> {
    let cfg = common.prepare(dataset_preset(dir).unwrap_or(Preset::Sparse))?;
    let data = formats::read_dataset(dir)?;
    let spec = cfg.run_spec();
    let normalize_decoder = spec.train.normalize_decoder;
    if paired {
        let pair = paired_run(&data, &data, &spec, cfg.seed)?;
        for (name, run) in [("raw", &pair.raw), ("whitened", &pair.whitened)] {
            let file = ModelFile {
                model: run.model.clone(),
                normalize_decoder,
            };
            write_trained(&common.out.join(name), &file, &run.train)?;
        }
        let rows = [
            (cfg.seed, "raw", &pair.raw.eval),
            (cfg.seed, "whitened", &pair.whitened.eval),
        ];
        formats::write_text(&common.out.join(COMPARISON_FILE), &comparison_csv(&rows)?)?;
        info!(
            "paired run: raw {} / whitened {}",
            pair.raw.eval.to_key_value().replace('\n', " "),
            pair.whitened.eval.to_key_value().replace('\n', " ")
        );
        return Ok(());
    }
    let w = match (cfg.whiten, whitener) {
        (false, Some(_)) => return Err(Error::Config("--whitener given with whiten=false".into())),
        (false, None) => None,
        (true, Some(path)) => Some(formats::load_whitener(path)?),
        (true, None) => Some(experiments::fit_whitener(
            &data.observations,
            cfg.whitener_samples,
            cfg.epsilon,
        )?),
    };
    let (model, report) = train_model_with(&data.observations, &spec, w)?;
    write_trained(
        &common.out,
        &ModelFile {
            model,
            normalize_decoder,
        },
        &report,
    )?;
    info!("trained {} steps, final mse {}", report.steps, report.final_recon_mse);
    Ok(())
}

fn check_report(r: &EvalReport) -> Result<()> {
    let finite = r.explained_variance.is_finite()
        && r.mean_l0.is_finite()
        && r.dead_latent_fraction.is_finite()
        && r.mcc.is_none_or(f64::is_finite)
        && r.sparse_probe_top1_accuracy.is_none_or(f64::is_finite);
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite("evaluation report"))
    }
}

/// One row per `(run_id, variant, report)`; columns are the metrics present in every row.
pub fn comparison_csv(rows: &[(u64, &str, &EvalReport)]) -> Result<String> {
    let Some(first) = rows.first() else {
        return Ok(String::new());
    };
    let columns: Vec<&str> = first
        .2
        .fields()
        .into_iter()
        .map(|(k, _)| k)
        .filter(|k| rows.iter().all(|r| r.2.fields().iter().any(|(f, _)| f == k)))
        .collect();
    let mut out = format!("run_id,variant,{}\n", columns.join(","));
    for (id, variant, report) in rows {
        check_report(report)?;
        let fields = report.fields();
        let values: Vec<&str> = columns
            .iter()
            .map(|c| {
                fields
                    .iter()
                    .find(|(f, _)| f == c)
                    .map(|(_, v)| v.as_str())
                    .unwrap_or("")
            })
            .collect();
        let _ = writeln!(out, "{id},{variant},{}", values.join(","));
    }
    Ok(out)
}

fn eval(common: &Common, model_path: &Path, dir: &Path) -> Result<()> {
    let cfg = common.prepare(dataset_preset(dir).unwrap_or(Preset::Sparse))?;
    let file = formats::load_model(model_path)?;
    let data = formats::read_dataset(dir)?;
    let report = experiments::evaluate(&file.model, &data, cfg.seed)?;
    check_report(&report)?;
    let variant = if file.model.whitener().is_some() {
        "whitened"
    } else {
        "raw"
    };
    formats::write_text(&common.out.join(EVAL_TEXT_FILE), &report.to_key_value())?;
    formats::write_text(
        &common.out.join(EVAL_CSV_FILE),
        &comparison_csv(&[(cfg.seed, variant, &report)])?,
    )?;
    info!("{}", report.to_key_value().replace('\n', " "));
    Ok(())
}

pub fn grid_file_stem(g: &LandscapeGrid) -> String {
    format!("{}_{}", g.metric.name(), g.data.name())
}

fn write_grids(dir: &Path, study: &LandscapeStudy, format: GridFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for g in [&study.raw.0, &study.raw.1, &study.whitened.0, &study.whitened.1] {
        let stem = grid_file_stem(g);
        if format != GridFormat::Binary {
            formats::write_text(&dir.join(format!("{stem}.csv")), &formats::grid_to_csv(g))?;
        }
        if format != GridFormat::Csv {
            let path = dir.join(format!("{stem}.bin"));
            fs::write(&path, formats::grid_to_bytes(g)).map_err(|e| Error::io(&path, e))?;
        }
    }
    formats::write_text(&dir.join(ALIGNMENT_FILE), &alignment_text(study))
}

pub fn alignment_text(study: &LandscapeStudy) -> String {
    let mut out = format!("resolution={}\n", study.raw.0.resolution);
    for (tag, s) in [("raw", &study.raw_stats), ("whitened", &study.whitened_stats)] {
        let AlignmentStats {
            argmax_sparsity_cell: (i, j),
            max_sparsity,
            recovery_at_sparsity_argmax,
            spearman_correlation,
        } = *s;
        let theta = |k| study.raw.0.theta(k);
        let _ = write!(
            out,
            "argmax_i_{tag}={i}\nargmax_j_{tag}={j}\ntheta0_{tag}={}\ntheta1_{tag}={}\nmax_sparsity_{tag}={}\n\
             recovery_at_sparsity_argmax_{tag}={}\nspearman_{tag}={}\n",
            fmt_real(theta(i)),
            fmt_real(theta(j)),
            fmt_real(max_sparsity),
            fmt_real(recovery_at_sparsity_argmax),
            fmt_real(spearman_correlation)
        );
    }
    out
}

fn landscape(common: &Common, dir: Option<&Path>, format: GridFormat) -> Result<()> {
    let fallback = dir.and_then(dataset_preset).unwrap_or(Preset::Landscape2d);
    let cfg = common.prepare(fallback)?;
    let data = match dir {
        Some(d) => formats::read_dataset(d)?,
        None => gen_landscape_2d_with(&cfg.landscape_data())?,
    };
    if data.dim() != 2 || data.num_sources() != 2 {
        return Err(Error::invalid(format!(
            "landscape needs 2D data with 2 sources, got d = {} and {} sources",
            data.dim(),
            data.num_sources()
        )));
    }
    let study = landscape_study(&data, &cfg.sweep())?;
    write_grids(&common.out, &study, format)?;
    info!(
        "spearman raw {:.4} whitened {:.4}",
        study.raw_stats.spearman_correlation, study.whitened_stats.spearman_correlation
    );
    Ok(())
}

fn export_figure_data(common: &Common) -> Result<()> {
    let cfg = common.prepare(Preset::Landscape2d)?;
    let data = gen_landscape_2d_with(&cfg.landscape_data())?;
    let study = landscape_study(&data, &cfg.sweep())?;
    write_grids(&common.out.join("landscape"), &study, GridFormat::Both)?;
    let mut reports = Vec::new();
    for seed in cfg.seed..cfg.seed + cfg.figure_pairs as u64 {
        let mut c = cfg.clone();
        c.seed = seed;
        let data = generate(&c)?;
        let pair = paired_run(&data, &data, &c.run_spec(), seed)?;
        info!("pair {seed} done");
        reports.push((seed, pair.raw.eval, pair.whitened.eval));
    }
    let rows: Vec<(u64, &str, &EvalReport)> = reports
        .iter()
        .flat_map(|(s, r, w)| [(*s, "raw", r), (*s, "whitened", w)])
        .collect();
    let pairs = common.out.join("pairs");
    fs::create_dir_all(&pairs).map_err(|e| Error::io(&pairs, e))?;
    formats::write_text(&pairs.join(COMPARISON_FILE), &comparison_csv(&rows)?)
}
