//! Synthetic data with known ground truth.
//!
//! All generators use the row convention `observations = sources * dictionary`,
//! so each dictionary row is one feature direction in observation space.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkit::{dot, matmul, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    /// `n x d` observations `y`.
    pub observations: Matrix,
    /// `n x m` latent sources `z`.
    pub sources: Matrix,
    /// `m x d` mixing dictionary `A`; rows are feature directions.
    pub dictionary: Matrix,
    /// Optional binary concept label per sample.
    pub labels: Option<Vec<u8>>,
    pub seed: u64,
}

impl SynthDataset {
    pub fn len(&self) -> usize {
        self.observations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.observations.cols()
    }

    pub fn num_sources(&self) -> usize {
        self.sources.cols()
    }
}

/// Knobs for the 2D landscape dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape2dConfig {
    pub n: usize,
    pub seed: u64,
    /// Rotation applied to the grid before the nonlinearity.
    pub rotation: f64,
    /// Exponent of the signed power `sign(u) |u|^p`.
    pub power: f64,
    /// Added to the diagonal of the Gaussian dictionary draw.
    pub dictionary_offset: f64,
}

impl Default for Landscape2dConfig {
    fn default() -> Self {
        Landscape2dConfig {
            n: 10_000,
            seed: 0,
            rotation: PI / 6.0,
            power: 3.0,
            dictionary_offset: 1.0,
        }
    }
}

/// The 2D landscape dataset with default shape parameters.
pub fn gen_landscape_2d(n: usize, seed: u64) -> Result<SynthDataset> {
    gen_landscape_2d_with(&Landscape2dConfig {
        n,
        seed,
        ..Landscape2dConfig::default()
    })
}

/// Heavy-tailed 2D sources from a rotated, sparsified uniform grid, mixed by
/// a shifted Gaussian dictionary.
///
/// The grid has `ceil(sqrt(n))` points per side over `[-1, 1]`. When it holds
/// more than `n` points a seeded subset of exactly `n` is kept, in grid order.
pub fn gen_landscape_2d_with(cfg: &Landscape2dConfig) -> Result<SynthDataset> {
    let n = cfg.n;
    if n < 100 {
        return Err(Error::invalid(format!(
            "landscape dataset needs n >= 100 samples, got {n}"
        )));
    }
    if !(cfg.power > 0.0) {
        return Err(Error::invalid(format!("power must be positive, got {}", cfg.power)));
    }
    let mut rng = SeededRng::new(cfg.seed);

    let side = (n as f64).sqrt().ceil() as usize;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (side - 1) as f64;
    let mut picked: Vec<usize> = (0..side * side).collect();
    if picked.len() > n {
        rng.shuffle(&mut picked);
        picked.truncate(n);
        picked.sort_unstable();
    }

    let (c, s) = (cfg.rotation.cos(), cfg.rotation.sin());
    let sparsify = |u: f64| u.signum() * u.abs().powf(cfg.power);
    let mut sources = Matrix::zeros(n, 2);
    for (row, &cell) in picked.iter().enumerate() {
        let (g0, g1) = (coord(cell / side), coord(cell % side));
        let (u0, u1) = (c * g0 - s * g1, s * g0 + c * g1);
        sources[(row, 0)] = sparsify(u0);
        sources[(row, 1)] = sparsify(u1);
    }

    let mut dictionary = Matrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            dictionary[(i, j)] = rng.normal() + if i == j { cfg.dictionary_offset } else { 0.0 };
        }
    }
    let observations = matmul(&sources, &dictionary)?;
    Ok(SynthDataset {
        observations,
        sources,
        dictionary,
        labels: None,
        seed: cfg.seed,
    })
}

/// Knobs for the d-dimensional spike-and-slab dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataConfig {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    /// Probability that a source entry is active.
    pub source_sparsity: f64,
    pub seed: u64,
    pub labeled: bool,
    /// Source whose activity defines the binary label.
    pub label_source: usize,
    /// Weight of a direction shared by all dictionary rows before
    /// normalization. Zero gives isotropic random directions; larger values
    /// correlate the features and make the observations anisotropic.
    pub shared_direction: f64,
    /// Upper bound on pairwise `|cos|` between dictionary rows.
    pub max_coherence: f64,
    /// Dictionary redraws allowed before giving up.
    pub max_retries: usize,
}

impl Default for SparseDataConfig {
    fn default() -> Self {
        SparseDataConfig {
            n: 8192,
            d: 16,
            m: 64,
            source_sparsity: 0.03,
            seed: 0,
            labeled: false,
            label_source: 0,
            shared_direction: 0.0,
            max_coherence: 0.95,
            max_retries: 100,
        }
    }
}

/// Spike-and-slab sources with default knobs for everything but the listed
/// arguments.
pub fn gen_sparse_sae_data(
    n: usize,
    d: usize,
    m: usize,
    source_sparsity: f64,
    seed: u64,
    labeled: bool,
) -> Result<SynthDataset> {
    gen_sparse_sae_data_with(&SparseDataConfig {
        n,
        d,
        m,
        source_sparsity,
        seed,
        labeled,
        ..SparseDataConfig::default()
    })
}

/// Each source entry is active with probability `source_sparsity` and then
/// drawn from a unit Laplace. Dictionary rows are unit vectors with pairwise
/// `|cos| < max_coherence`. With `labeled`, `label_i = 1` iff source
/// `label_source` is active in sample `i`.
pub fn gen_sparse_sae_data_with(cfg: &SparseDataConfig) -> Result<SynthDataset> {
    let SparseDataConfig { n, d, m, .. } = *cfg;
    if d == 0 || n == 0 {
        return Err(Error::invalid("n and d must be positive"));
    }
    if m < d {
        return Err(Error::invalid(format!("need m >= d latents, got m = {m}, d = {d}")));
    }
    if !(cfg.source_sparsity > 0.0 && cfg.source_sparsity < 1.0) {
        return Err(Error::invalid(format!(
            "source_sparsity must lie in (0, 1), got {}",
            cfg.source_sparsity
        )));
    }
    if cfg.labeled && cfg.label_source >= m {
        return Err(Error::invalid(format!(
            "label_source {} out of range for {m} sources",
            cfg.label_source
        )));
    }
    let mut rng = SeededRng::new(cfg.seed);

    let shared = rng.unit_vector(d);
    let mut dictionary = None;
    for _ in 0..=cfg.max_retries {
        let candidate = draw_dictionary(&mut rng, m, d, &shared, cfg.shared_direction);
        if max_pairwise_coherence(&candidate) < cfg.max_coherence {
            dictionary = Some(candidate);
            break;
        }
    }
    let dictionary = dictionary.ok_or_else(|| {
        Error::invalid(format!(
            "no dictionary with pairwise |cos| < {} after {} retries",
            cfg.max_coherence, cfg.max_retries
        ))
    })?;

    let mut sources = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            if rng.bernoulli(cfg.source_sparsity) {
                sources[(i, j)] = rng.laplace();
            }
        }
    }
    let labels = cfg.labeled.then(|| {
        (0..n)
            .map(|i| u8::from(sources[(i, cfg.label_source)] != 0.0))
            .collect()
    });
    let observations = matmul(&sources, &dictionary)?;
    Ok(SynthDataset {
        observations,
        sources,
        dictionary,
        labels,
        seed: cfg.seed,
    })
}

fn draw_dictionary(rng: &mut SeededRng, m: usize, d: usize, shared: &[f64], weight: f64) -> Matrix {
    let mut dict = Matrix::zeros(m, d);
    let scale = 1.0 / (d as f64).sqrt();
    for i in 0..m {
        let row = dict.row_mut(i);
        for (v, &s) in row.iter_mut().zip(shared) {
            *v = rng.normal() * scale + weight * s;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    dict
}

/// Largest `|cos|` between distinct rows (rows assumed unit norm).
pub fn max_pairwise_coherence(dict: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dict.rows() {
        for j in (i + 1)..dict.rows() {
            worst = worst.max(dot(dict.row(i), dict.row(j)).abs());
        }
    }
    worst
}

/// Sample excess kurtosis of one column.
pub fn excess_kurtosis(x: &Matrix, col: usize) -> f64 {
    let v = x.col(col);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}
