//! Paired raw-versus-whitened training runs.
//!
//! A pair trains two SAEs from the same initial parameters, on the same
//! data, with the same schedule and batch order. One sees the raw
//! observations; the other sees them whitened and is scored after mapping
//! back to input space.

use crate::error::{Error, Result};
use crate::landscape::{self, AlignmentStats, LandscapeGrid, SweepConfig};
use crate::metrics::{self, EvalReport, DEFAULT_L0_TOL};
use crate::numkit::Matrix;
use crate::pipeline::{Mode, WhitenedSae};
use crate::sae::{init_params, Arch, TrainConfig, TrainReport};
use crate::synthgen::{
    gen_landscape_2d_with, gen_sparse_sae_data_with, Landscape2dConfig, SparseDataConfig, SynthDataset,
};
use crate::whitening::{Whitener, DEFAULT_EPSILON};

/// Default number of rows used to fit a whitener.
pub const DEFAULT_WHITENER_SAMPLES: usize = 8192;

/// Space in which a whitened model's reconstruction error is measured during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhitenedLoss {
    /// Dewhiten the output and compare with the raw input.
    InputSpace,
    /// Compare decoder output with the whitened input directly.
    WhitenedSpace,
}

impl WhitenedLoss {
    pub fn name(self) -> &'static str {
        match self {
            WhitenedLoss::InputSpace => "input",
            WhitenedLoss::WhitenedSpace => "whitened",
        }
    }

    pub fn from_name(name: &str) -> Option<WhitenedLoss> {
        [WhitenedLoss::InputSpace, WhitenedLoss::WhitenedSpace]
            .into_iter()
            .find(|l| l.name() == name)
    }
}

/// Everything needed to train one SAE on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub arch: Arch,
    pub width: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub epsilon: f64,
    /// Rows (from the start of the data) used to fit the whitener.
    pub whitener_samples: usize,
    pub whitened_loss: WhitenedLoss,
}

/// Fits a whitener on the first `samples` rows of `x`.
pub fn fit_whitener(x: &Matrix, samples: usize, epsilon: f64) -> Result<Whitener> {
    let take = samples.min(x.rows());
    let idx: Vec<usize> = (0..take).collect();
    Whitener::fit(&x.select_rows(&idx), epsilon)
}

/// Trains one model, whitened or raw, from `spec.init_seed`.
pub fn train_model(data: &Matrix, spec: &RunSpec, whiten: bool) -> Result<(WhitenedSae, TrainReport)> {
    let whitener = if whiten {
        Some(fit_whitener(data, spec.whitener_samples, spec.epsilon)?)
    } else {
        None
    };
    train_model_with(data, spec, whitener)
}

/// Trains one model around an already fitted whitener, or raw when `None`.
pub fn train_model_with(
    data: &Matrix,
    spec: &RunSpec,
    whitener: Option<Whitener>,
) -> Result<(WhitenedSae, TrainReport)> {
    let p0 = init_params(data.cols(), spec.width, spec.arch, spec.init_seed)?;
    let Some(w) = whitener else {
        return WhitenedSae::passthrough(p0).train(data, &spec.train);
    };
    let model = WhitenedSae::new(p0, Mode::Whitened(w))?;
    match spec.whitened_loss {
        WhitenedLoss::InputSpace => model.train(data, &spec.train),
        WhitenedLoss::WhitenedSpace => model.train_whitened_space(data, &spec.train),
    }
}

/// Scores a model on `eval` data. The probe uses a class-balanced split of
/// the evaluation rows drawn with `probe_seed`.
pub fn evaluate(model: &WhitenedSae, eval: &SynthDataset, probe_seed: u64) -> Result<EvalReport> {
    if eval.dim() != model.sae.input_dim() {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            left: format!("model with d = {}", model.sae.input_dim()),
            right: format!("data with d = {}", eval.dim()),
        });
    }
    let (features, xhat) = model.forward(&eval.observations)?;
    let learned = model.input_space_dictionary()?;
    let mcc = if learned.rows() >= eval.dictionary.rows() && eval.dictionary.cols() == learned.cols() {
        Some(metrics::mcc(&learned, &eval.dictionary)?)
    } else {
        None
    };
    let probe = match &eval.labels {
        Some(labels) => {
            let (train, test) = metrics::balanced_split(labels, probe_seed)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<u8>>();
            Some(metrics::sparse_probe_top1(
                &features.select_rows(&train),
                &pick(&train),
                &features.select_rows(&test),
                &pick(&test),
            )?)
        }
        None => None,
    };
    Ok(EvalReport {
        explained_variance: metrics::explained_variance(&eval.observations, &xhat)?,
        mean_l0: metrics::mean_l0(&features, DEFAULT_L0_TOL),
        mcc,
        sparse_probe_top1_accuracy: probe.map(|p| p.accuracy),
        probe_latent: probe.map(|p| p.chosen_latent),
        dead_latent_fraction: metrics::dead_latent_fraction(&features, DEFAULT_L0_TOL),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub model: WhitenedSae,
    pub train: TrainReport,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub raw: TrainedRun,
    pub whitened: TrainedRun,
}

/// Trains the raw and whitened twins on `train_data` and evaluates both on `eval_data`.
pub fn paired_run(
    train_data: &SynthDataset,
    eval_data: &SynthDataset,
    spec: &RunSpec,
    probe_seed: u64,
) -> Result<PairedRun> {
    let run = |whiten: bool| -> Result<TrainedRun> {
        let (model, train) = train_model(&train_data.observations, spec, whiten)?;
        let eval = evaluate(&model, eval_data, probe_seed)?;
        Ok(TrainedRun { model, train, eval })
    };
    Ok(PairedRun {
        raw: run(false)?,
        whitened: run(true)?,
    })
}

/// Top-K, `k = 1`, two latents on the 2D landscape data.
#[derive(Debug, Clone, PartialEq)]
pub struct TopkRecoveryConfig {
    pub data: Landscape2dConfig,
    pub run: RunSpec,
}

impl Default for TopkRecoveryConfig {
    fn default() -> Self {
        let arch = Arch::TopK { k: 1 };
        TopkRecoveryConfig {
            data: Landscape2dConfig::default(),
            run: RunSpec {
                arch,
                width: 2,
                init_seed: 0,
                train: TrainConfig {
                    steps: 5_000,
                    batch_size: 64,
                    learning_rate: 0.05,
                    lr_warmup_steps: 500,
                    sparsity_warmup_steps: 0,
                    lr_decay_fraction: 0.2,
                    seed: 0,
                    normalize_decoder: false,
                    // a positive bias lets one latent fire on every sample
                    freeze_encoder_bias: true,
                },
                epsilon: DEFAULT_EPSILON,
                whitener_samples: DEFAULT_WHITENER_SAMPLES,
                whitened_loss: WhitenedLoss::WhitenedSpace,
            },
        }
    }
}

pub fn topk_2d_recovery(cfg: &TopkRecoveryConfig) -> Result<PairedRun> {
    let data = gen_landscape_2d_with(&cfg.data)?;
    paired_run(&data, &data, &cfg.run, cfg.data.seed)
}

/// ReLU SAEs on labeled spike-and-slab data; one pair per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingConfig {
    pub seeds: Vec<u64>,
    /// Data shape; `n` is the training row count and `seed` is overridden per pair.
    pub data: SparseDataConfig,
    /// Extra rows generated alongside the training rows and used only for evaluation.
    pub eval_rows: usize,
    pub run: RunSpec,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        let arch = Arch::Relu { lambda: 2.0 };
        ProbingConfig {
            seeds: (0..10).collect(),
            data: SparseDataConfig {
                n: 8192,
                d: 16,
                m: 64,
                source_sparsity: 0.03,
                labeled: true,
                shared_direction: 1.0,
                ..SparseDataConfig::default()
            },
            eval_rows: 32_768,
            run: RunSpec {
                arch,
                width: 64,
                init_seed: 0,
                train: TrainConfig {
                    steps: 5_000,
                    batch_size: 128,
                    learning_rate: 0.03,
                    lr_warmup_steps: 250,
                    sparsity_warmup_steps: 500,
                    lr_decay_fraction: 0.2,
                    seed: 0,
                    normalize_decoder: true,
                    freeze_encoder_bias: false,
                },
                epsilon: DEFAULT_EPSILON,
                whitener_samples: DEFAULT_WHITENER_SAMPLES,
                whitened_loss: WhitenedLoss::InputSpace,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbingPair {
    pub seed: u64,
    pub raw: EvalReport,
    pub whitened: EvalReport,
}

/// Splits one generated dataset into its first `n_train` rows and the rest.
pub fn split_rows(data: &SynthDataset, n_train: usize) -> (SynthDataset, SynthDataset) {
    let n = data.len();
    let head: Vec<usize> = (0..n_train.min(n)).collect();
    let tail: Vec<usize> = (n_train.min(n)..n).collect();
    let part = |idx: &[usize]| SynthDataset {
        observations: data.observations.select_rows(idx),
        sources: data.sources.select_rows(idx),
        dictionary: data.dictionary.clone(),
        labels: data.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        seed: data.seed,
    };
    (part(&head), part(&tail))
}

pub fn probing_study(cfg: &ProbingConfig) -> Result<Vec<ProbingPair>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let data = gen_sparse_sae_data_with(&SparseDataConfig {
                n: cfg.data.n + cfg.eval_rows,
                seed,
                labeled: true,
                ..cfg.data.clone()
            })?;
            let (train, eval) = split_rows(&data, cfg.data.n);
            let spec = RunSpec {
                init_seed: seed,
                train: TrainConfig {
                    seed,
                    ..cfg.run.train.clone()
                },
                ..cfg.run.clone()
            };
            let pair = paired_run(&train, &eval, &spec, seed)?;
            Ok(ProbingPair {
                seed,
                raw: pair.raw.eval,
                whitened: pair.whitened.eval,
            })
        })
        .collect()
}

/// Raw and whitened landscape grids plus their alignment statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeStudy {
    pub raw: (LandscapeGrid, LandscapeGrid),
    pub whitened: (LandscapeGrid, LandscapeGrid),
    pub raw_stats: AlignmentStats,
    pub whitened_stats: AlignmentStats,
}

pub fn landscape_study(data: &SynthDataset, cfg: &SweepConfig) -> Result<LandscapeStudy> {
    let raw = landscape::sweep_with(
        data,
        &SweepConfig {
            whitened: false,
            ..*cfg
        },
    )?;
    let whitened = landscape::sweep_with(data, &SweepConfig { whitened: true, ..*cfg })?;
    let raw_stats = landscape::alignment_stats(&raw.0, &raw.1)?;
    let whitened_stats = landscape::alignment_stats(&whitened.0, &whitened.1)?;
    Ok(LandscapeStudy {
        raw,
        whitened,
        raw_stats,
        whitened_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::gen_landscape_2d;

    #[test]
    fn split_rows_keeps_alignment() {
        let d = gen_sparse_sae_data_with(&SparseDataConfig {
            n: 100,
            labeled: true,
            ..SparseDataConfig::default()
        })
        .unwrap();
        let (a, b) = split_rows(&d, 60);
        assert_eq!((a.len(), b.len()), (60, 40));
        assert_eq!(b.observations.row(0), d.observations.row(60));
        assert_eq!(b.labels.as_ref().unwrap()[0], d.labels.as_ref().unwrap()[60]);
    }

    #[test]
    fn short_pair_runs_and_evaluates() {
        let data = gen_landscape_2d(1000, 2).unwrap();
        let mut cfg = TopkRecoveryConfig::default();
        cfg.run.train.steps = 50;
        cfg.run.train.lr_warmup_steps = 5;
        let pair = paired_run(&data, &data, &cfg.run, 0).unwrap();
        for run in [&pair.raw, &pair.whitened] {
            assert!(run.eval.mcc.unwrap() <= 1.0 + 1e-12);
            assert!(run.eval.mean_l0 <= 1.0);
            assert!(run.eval.sparse_probe_top1_accuracy.is_none());
        }
        assert!(pair.raw.model.whitener().is_none());
        assert!(pair.whitened.model.whitener().is_some());
    }

    #[test]
    fn train_mse_agrees_with_explained_variance() {
        let data = gen_landscape_2d(1000, 3).unwrap();
        let mut spec = TopkRecoveryConfig::default().run;
        spec.train.steps = 30;
        spec.train.lr_warmup_steps = 3;
        spec.whitened_loss = WhitenedLoss::InputSpace;
        let (_, cov) = data.observations.covariance().unwrap();
        let n = data.len() as f64;
        let total_var = (0..2).map(|k| cov[(k, k)]).sum::<f64>() * (n - 1.0) / n;
        for whiten in [false, true] {
            let (model, report) = train_model(&data.observations, &spec, whiten).unwrap();
            let ev = evaluate(&model, &data, 0).unwrap().explained_variance;
            assert!((ev - (1.0 - report.final_recon_mse / total_var)).abs() < 1e-10);
        }
    }
}
