//! Whiten, encode, decode, dewhiten.
//!
//! The SAE sees whitened inputs and its sparsity penalty is taken on those
//! features, while the reconstruction error is measured after dewhitening,
//! in the original input space. The whitener is fixed and receives no
//! gradient.

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::sae::{self, LossParts, ParamGrads, SaeParams, TrainConfig, TrainReport};
use crate::whitening::Whitener;

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Whitened(Whitener),
    /// No preprocessing; every call forwards to [`crate::sae`] unchanged.
    Passthrough,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSae {
    pub sae: SaeParams,
    pub mode: Mode,
}

impl WhitenedSae {
    pub fn new(sae: SaeParams, mode: Mode) -> Result<WhitenedSae> {
        if let Mode::Whitened(w) = &mode {
            if w.dim() != sae.input_dim() {
                return Err(Error::DimensionMismatch {
                    op: "WhitenedSae::new",
                    left: format!("whitener of dimension {}", w.dim()),
                    right: format!("SAE with d = {}", sae.input_dim()),
                });
            }
        }
        Ok(WhitenedSae { sae, mode })
    }

    pub fn passthrough(sae: SaeParams) -> WhitenedSae {
        WhitenedSae {
            sae,
            mode: Mode::Passthrough,
        }
    }

    pub fn whitener(&self) -> Option<&Whitener> {
        match &self.mode {
            Mode::Whitened(w) => Some(w),
            Mode::Passthrough => None,
        }
    }

    /// Applies the preprocessing step (identity in passthrough mode).
    pub fn preprocess(&self, x: &Matrix) -> Result<Matrix> {
        match &self.mode {
            Mode::Whitened(w) => w.whiten(x),
            Mode::Passthrough => Ok(x.clone()),
        }
    }

    /// Features (in whitened space when whitening) and the input-space reconstruction.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        match &self.mode {
            Mode::Whitened(w) => {
                let z = w.whiten(x)?;
                let f = sae::encode(&self.sae, &z)?;
                let zhat = sae::decode(&self.sae, &f)?;
                let xhat = w.dewhiten(&zhat)?;
                Ok((f, xhat))
            }
            Mode::Passthrough => {
                let f = sae::encode(&self.sae, x)?;
                let xhat = sae::decode(&self.sae, &f)?;
                Ok((f, xhat))
            }
        }
    }

    pub fn loss(&self, x: &Matrix, sparsity_scale: f64) -> Result<LossParts> {
        self.loss_and_grad(x, sparsity_scale).map(|(l, _)| l)
    }

    /// Gradient with respect to the SAE parameters only.
    pub fn grad(&self, x: &Matrix, sparsity_scale: f64) -> Result<ParamGrads> {
        self.loss_and_grad(x, sparsity_scale).map(|(_, g)| g)
    }

    pub fn loss_and_grad(&self, x: &Matrix, sparsity_scale: f64) -> Result<(LossParts, ParamGrads)> {
        match &self.mode {
            Mode::Whitened(w) => {
                let z = w.whiten(x)?;
                sae::loss_and_grad_mapped(&self.sae, &z, x, w, sparsity_scale)
            }
            Mode::Passthrough => sae::loss_and_grad(&self.sae, x, sparsity_scale),
        }
    }

    /// Trains the SAE parameters on `data` (original space). The whitener is
    /// carried through untouched.
    pub fn train(&self, data: &Matrix, cfg: &TrainConfig) -> Result<(WhitenedSae, TrainReport)> {
        let (sae, report) = match &self.mode {
            Mode::Passthrough => sae::train(&self.sae, data, cfg)?,
            Mode::Whitened(w) => {
                let z = w.whiten(data)?;
                sae::run_training(
                    &self.sae,
                    data.rows(),
                    cfg,
                    |p, idx, scale| sae::loss_and_grad_mapped(p, &z.select_rows(idx), &data.select_rows(idx), w, scale),
                    |p| {
                        let f = sae::encode(p, &z)?;
                        let xhat = w.dewhiten(&sae::decode(p, &f)?)?;
                        Ok((sae::mean_squared_distance(data, &xhat), f))
                    },
                )?
            }
        };
        Ok((
            WhitenedSae {
                sae,
                mode: self.mode.clone(),
            },
            report,
        ))
    }

    /// Trains with the reconstruction error taken in whitened space, i.e.
    /// plain SAE training on `whiten(data)`. Passthrough mode is unaffected.
    pub fn train_whitened_space(&self, data: &Matrix, cfg: &TrainConfig) -> Result<(WhitenedSae, TrainReport)> {
        let z = self.preprocess(data)?;
        let (sae, report) = sae::train(&self.sae, &z, cfg)?;
        Ok((
            WhitenedSae {
                sae,
                mode: self.mode.clone(),
            },
            report,
        ))
    }

    /// Learned dictionary atoms in the original input space, one row per latent.
    ///
    /// In whitened mode the decoder columns are mapped back through `W^-1`
    /// (directions only, no mean).
    pub fn input_space_dictionary(&self) -> Result<Matrix> {
        let atoms = self.sae.dictionary();
        match &self.mode {
            Mode::Whitened(w) => w.dewhiten_directions(&atoms),
            Mode::Passthrough => Ok(atoms),
        }
    }
}
