//! Run configuration as a flat `key=value` file.
//!
//! A config starts from the defaults of its preset, then applies keys from
//! a file and finally from command-line flags. Unknown keys are rejected.
//! [`RunConfig::to_text`] writes every key, so the output can be fed back
//! in to reproduce a run.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::{ProbingConfig, RunSpec, TopkRecoveryConfig, WhitenedLoss};
use crate::formats::parse_key_values;
use crate::landscape::{SparsityForm, SweepConfig};
use crate::sae::{Arch, TrainConfig};
use crate::synthgen::{Landscape2dConfig, SparseDataConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two heavy-tailed sources mixed by a 2x2 dictionary.
    Landscape2d,
    /// Spike-and-slab sources in `d` dimensions.
    Sparse,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Landscape2d => "landscape2d",
            Preset::Sparse => "sparse",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        match s {
            "landscape2d" => Ok(Preset::Landscape2d),
            "sparse" => Ok(Preset::Sparse),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (expected landscape2d or sparse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Relu,
    TopK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    /// Drives data generation, initialization, batch order and the probe split.
    pub seed: u64,
    pub n: usize,
    pub landscape: Landscape2dConfig,
    pub sparse: SparseDataConfig,
    pub arch: ArchKind,
    pub lambda: f64,
    pub k: usize,
    pub width: usize,
    pub whiten: bool,
    pub whitened_loss: WhitenedLoss,
    pub epsilon: f64,
    pub whitener_samples: usize,
    pub train: TrainConfig,
    pub resolution: usize,
    pub normalize_whitener_scale: bool,
    pub sparsity_form: SparsityForm,
    /// Seeds used for paired runs by `export-figure-data`.
    pub figure_pairs: usize,
}

pub const KEYS: &[&str] = &[
    "preset",
    "seed",
    "n",
    "rotation",
    "power",
    "dictionary_offset",
    "d",
    "m",
    "source_sparsity",
    "labeled",
    "label_source",
    "shared_direction",
    "max_coherence",
    "max_retries",
    "arch",
    "lambda",
    "k",
    "width",
    "whiten",
    "whitened_loss",
    "epsilon",
    "whitener_samples",
    "steps",
    "batch_size",
    "learning_rate",
    "lr_warmup_steps",
    "sparsity_warmup_steps",
    "lr_decay_fraction",
    "normalize_decoder",
    "freeze_encoder_bias",
    "resolution",
    "normalize_whitener_scale",
    "sparsity_form",
    "figure_pairs",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn defaults(preset: Preset) -> RunConfig {
        let (run, n, seed) = match preset {
            Preset::Landscape2d => {
                let c = TopkRecoveryConfig::default();
                (c.run, c.data.n, c.data.seed)
            }
            Preset::Sparse => {
                let c = ProbingConfig::default();
                (c.run, c.data.n, 0)
            }
        };
        let RunSpec {
            arch,
            width,
            train,
            epsilon,
            whitener_samples,
            whitened_loss,
            ..
        } = run;
        let (arch, lambda, k) = match arch {
            Arch::Relu { lambda } => (ArchKind::Relu, lambda, 1),
            Arch::TopK { k } => (ArchKind::TopK, 2.0, k),
        };
        RunConfig {
            preset,
            seed,
            n,
            landscape: Landscape2dConfig::default(),
            sparse: ProbingConfig::default().data,
            arch,
            lambda,
            k,
            width,
            whiten: true,
            whitened_loss,
            epsilon,
            whitener_samples,
            train,
            resolution: SweepConfig::default().resolution,
            normalize_whitener_scale: false,
            sparsity_form: SparsityForm::default(),
            figure_pairs: 3,
        }
    }

    /// Resolves `pairs` (in order, later wins) over the defaults of the
    /// preset they name, or `fallback` when none is named.
    pub fn resolve(pairs: &[(String, String)], fallback: Preset) -> Result<RunConfig> {
        let preset = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse()?,
            None => fallback,
        };
        let mut cfg = RunConfig::defaults(preset);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str, fallback: Preset) -> Result<RunConfig> {
        RunConfig::resolve(&parse_key_values(text)?, fallback)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "preset" => {
                if value.parse::<Preset>()? != self.preset {
                    return Err(Error::Config(
                        "preset can only be chosen when resolving a config".into(),
                    ));
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "rotation" => self.landscape.rotation = parse(key, value)?,
            "power" => self.landscape.power = parse(key, value)?,
            "dictionary_offset" => self.landscape.dictionary_offset = parse(key, value)?,
            "d" => self.sparse.d = parse(key, value)?,
            "m" => self.sparse.m = parse(key, value)?,
            "source_sparsity" => self.sparse.source_sparsity = parse(key, value)?,
            "labeled" => self.sparse.labeled = parse_bool(key, value)?,
            "label_source" => self.sparse.label_source = parse(key, value)?,
            "shared_direction" => self.sparse.shared_direction = parse(key, value)?,
            "max_coherence" => self.sparse.max_coherence = parse(key, value)?,
            "max_retries" => self.sparse.max_retries = parse(key, value)?,
            "arch" => {
                self.arch = match value {
                    "relu" => ArchKind::Relu,
                    "topk" => ArchKind::TopK,
                    _ => return Err(Error::Config(format!("arch: expected relu or topk, got {value:?}"))),
                }
            }
            "lambda" => self.lambda = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "whiten" => self.whiten = parse_bool(key, value)?,
            "whitened_loss" => {
                self.whitened_loss = WhitenedLoss::from_name(value)
                    .ok_or_else(|| Error::Config(format!("whitened_loss: expected input or whitened, got {value:?}")))?
            }
            "epsilon" => self.epsilon = parse(key, value)?,
            "whitener_samples" => self.whitener_samples = parse(key, value)?,
            "steps" => t.steps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "lr_warmup_steps" => t.lr_warmup_steps = parse(key, value)?,
            "sparsity_warmup_steps" => t.sparsity_warmup_steps = parse(key, value)?,
            "lr_decay_fraction" => t.lr_decay_fraction = parse(key, value)?,
            "normalize_decoder" => t.normalize_decoder = parse_bool(key, value)?,
            "freeze_encoder_bias" => t.freeze_encoder_bias = parse_bool(key, value)?,
            "resolution" => self.resolution = parse(key, value)?,
            "normalize_whitener_scale" => self.normalize_whitener_scale = parse_bool(key, value)?,
            "sparsity_form" => {
                self.sparsity_form = match value {
                    "inverse" => SparsityForm::InverseDictionary,
                    "direct" => SparsityForm::Direct,
                    _ => {
                        return Err(Error::Config(format!(
                            "sparsity_form: expected inverse or direct, got {value:?}"
                        )))
                    }
                }
            }
            "figure_pairs" => self.figure_pairs = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.width == 0 {
            return Err(Error::Config("n and width must be positive".into()));
        }
        if self.arch == ArchKind::TopK && (self.k == 0 || self.k > self.width) {
            return Err(Error::Config(format!("k = {} must be in 1..={}", self.k, self.width)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda = {} must be finite and non-negative",
                self.lambda
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) || self.whitener_samples < 2 {
            return Err(Error::Config(
                "epsilon must be positive and whitener_samples at least 2".into(),
            ));
        }
        self.train.validate()
    }

    pub fn arch(&self) -> Arch {
        match self.arch {
            ArchKind::Relu => Arch::Relu { lambda: self.lambda },
            ArchKind::TopK => Arch::TopK { k: self.k },
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            arch: self.arch(),
            width: self.width,
            init_seed: self.seed,
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
            epsilon: self.epsilon,
            whitener_samples: self.whitener_samples,
            whitened_loss: self.whitened_loss,
        }
    }

    pub fn landscape_data(&self) -> Landscape2dConfig {
        Landscape2dConfig {
            n: self.n,
            seed: self.seed,
            ..self.landscape.clone()
        }
    }

    pub fn sparse_data(&self) -> SparseDataConfig {
        SparseDataConfig {
            n: self.n,
            seed: self.seed,
            ..self.sparse.clone()
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            resolution: self.resolution,
            whitened: false,
            normalize_whitener_scale: self.normalize_whitener_scale,
            sparsity_form: self.sparsity_form,
            epsilon: self.epsilon,
        }
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let real = |v: f64| format!("{v:?}");
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "preset" => self.preset.name().to_string(),
                    "seed" => self.seed.to_string(),
                    "n" => self.n.to_string(),
                    "rotation" => real(self.landscape.rotation),
                    "power" => real(self.landscape.power),
                    "dictionary_offset" => real(self.landscape.dictionary_offset),
                    "d" => self.sparse.d.to_string(),
                    "m" => self.sparse.m.to_string(),
                    "source_sparsity" => real(self.sparse.source_sparsity),
                    "labeled" => self.sparse.labeled.to_string(),
                    "label_source" => self.sparse.label_source.to_string(),
                    "shared_direction" => real(self.sparse.shared_direction),
                    "max_coherence" => real(self.sparse.max_coherence),
                    "max_retries" => self.sparse.max_retries.to_string(),
                    "arch" => match self.arch {
                        ArchKind::Relu => "relu".into(),
                        ArchKind::TopK => "topk".into(),
                    },
                    "lambda" => real(self.lambda),
                    "k" => self.k.to_string(),
                    "width" => self.width.to_string(),
                    "whiten" => self.whiten.to_string(),
                    "whitened_loss" => self.whitened_loss.name().to_string(),
                    "epsilon" => real(self.epsilon),
                    "whitener_samples" => self.whitener_samples.to_string(),
                    "steps" => t.steps.to_string(),
                    "batch_size" => t.batch_size.to_string(),
                    "learning_rate" => real(t.learning_rate),
                    "lr_warmup_steps" => t.lr_warmup_steps.to_string(),
                    "sparsity_warmup_steps" => t.sparsity_warmup_steps.to_string(),
                    "lr_decay_fraction" => real(t.lr_decay_fraction),
                    "normalize_decoder" => t.normalize_decoder.to_string(),
                    "freeze_encoder_bias" => t.freeze_encoder_bias.to_string(),
                    "resolution" => self.resolution.to_string(),
                    "normalize_whitener_scale" => self.normalize_whitener_scale.to_string(),
                    "sparsity_form" => match self.sparsity_form {
                        SparsityForm::InverseDictionary => "inverse".into(),
                        SparsityForm::Direct => "direct".into(),
                    },
                    "figure_pairs" => self.figure_pairs.to_string(),
                    _ => unreachable!("key list and writer disagree on {k}"),
                };
                (k.to_string(), v)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        crate::formats::format_key_values(&self.to_pairs())
    }

    /// The keys that determine the generated dataset.
    pub fn data_pairs(&self) -> Vec<(String, String)> {
        let keys: &[&str] = match self.preset {
            Preset::Landscape2d => &["preset", "seed", "n", "rotation", "power", "dictionary_offset"],
            Preset::Sparse => &[
                "preset",
                "seed",
                "n",
                "d",
                "m",
                "source_sparsity",
                "labeled",
                "label_source",
                "shared_direction",
                "max_coherence",
                "max_retries",
            ],
        };
        self.to_pairs()
            .into_iter()
            .filter(|(k, _)| keys.contains(&k.as_str()))
            .collect()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::defaults(Preset::Sparse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for preset in [Preset::Landscape2d, Preset::Sparse] {
            let mut cfg = RunConfig::defaults(preset);
            cfg.landscape.rotation = 0.1 + 0.2;
            cfg.train.learning_rate = 1e-3 / 7.0;
            let back = RunConfig::from_text(&cfg.to_text(), Preset::Sparse).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn every_key_is_settable_and_written() {
        let pairs = RunConfig::default().to_pairs();
        assert_eq!(pairs.len(), KEYS.len());
        let mut cfg = RunConfig::default();
        for (k, v) in &pairs {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::from_text("steps=10\nstepz=3\n", Preset::Sparse).unwrap_err();
        assert!(err.to_string().contains("stepz"), "{err}");
    }

    #[test]
    fn later_values_win_and_preset_selects_defaults() {
        let pairs = vec![
            ("seed".to_string(), "3".to_string()),
            ("preset".to_string(), "landscape2d".to_string()),
            ("seed".to_string(), "5".to_string()),
        ];
        let cfg = RunConfig::resolve(&pairs, Preset::Sparse).unwrap();
        assert_eq!(cfg.preset, Preset::Landscape2d);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.arch(), Arch::TopK { k: 1 });
        assert_eq!(cfg.run_spec().train.seed, 5);
    }

    #[test]
    fn invalid_values() {
        assert!(RunConfig::from_text("arch=gelu", Preset::Sparse).is_err());
        assert!(RunConfig::from_text("whiten=maybe", Preset::Sparse).is_err());
        assert!(RunConfig::from_text("arch=topk\nk=0", Preset::Sparse).is_err());
        assert!(RunConfig::from_text("batch_size=0", Preset::Sparse).is_err());
    }
}
