//! Exhaustive two-angle landscape of 2D dictionaries.
//!
//! A candidate dictionary has unit rows at angles `theta0` and `theta1`.
//! Every cell of a `res x res` grid over `[0, 2pi)^2` is scored twice: by how
//! sparse the sources it reconstructs are, and by how well it matches the
//! true dictionary. Comparing where the two landscapes peak, on raw versus
//! whitened observations, is the point of the exercise.
//!
//! Cell `(i, j)` holds `theta0 = 2 pi i / res`, `theta1 = 2 pi j / res`;
//! values are stored row-major over `i`.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::{invert_2x2_with_floor, Matrix, SINGULAR_FLOOR};
use crate::parallel;
use crate::synthgen::SynthDataset;
use crate::whitening::{Whitener, DEFAULT_EPSILON};

/// Cells whose dictionary has `|det| = |sin(theta1 - theta0)|` below this are masked.
pub const MASK_DET_FLOOR: f64 = 1e-6;
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricTag {
    Sparsity,
    Recovery,
}

impl MetricTag {
    pub fn name(self) -> &'static str {
        match self {
            MetricTag::Sparsity => "sparsity",
            MetricTag::Recovery => "recovery",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            MetricTag::Sparsity => 0,
            MetricTag::Recovery => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<MetricTag> {
        match code {
            0 => Some(MetricTag::Sparsity),
            1 => Some(MetricTag::Recovery),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<MetricTag> {
        [MetricTag::Sparsity, MetricTag::Recovery]
            .into_iter()
            .find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataTag {
    Raw,
    Whitened,
}

impl DataTag {
    pub fn name(self) -> &'static str {
        match self {
            DataTag::Raw => "raw",
            DataTag::Whitened => "whitened",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DataTag::Raw => 0,
            DataTag::Whitened => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<DataTag> {
        match code {
            0 => Some(DataTag::Raw),
            1 => Some(DataTag::Whitened),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<DataTag> {
        [DataTag::Raw, DataTag::Whitened].into_iter().find(|t| t.name() == name)
    }
}

/// Which quantity the sparsity score inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SparsityForm {
    /// `1 / mean_i |W^-1 y_i|_1` with `y_i` a column vector: sources
    /// reconstructed through the inverse dictionary.
    #[default]
    InverseDictionary,
    /// `1 / mean_i |W y_i|_1`: the dictionary itself used as the unmixing map.
    Direct,
}

/// One metric over the full angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub resolution: usize,
    /// `resolution^2` values, row-major; NaN exactly where `mask` is set.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub metric: MetricTag,
    pub data: DataTag,
}

impl LandscapeGrid {
    /// Checks lengths and that every unmasked value is finite. Masked
    /// values are normalized to NaN.
    pub fn new(
        resolution: usize,
        mut values: Vec<f64>,
        mask: Vec<bool>,
        metric: MetricTag,
        data: DataTag,
    ) -> Result<LandscapeGrid> {
        let cells = resolution * resolution;
        if values.len() != cells || mask.len() != cells {
            return Err(Error::Malformed(format!(
                "grid of resolution {resolution} needs {cells} values and mask bytes, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite("unmasked landscape cell"));
            }
        }
        Ok(LandscapeGrid {
            resolution,
            values,
            mask,
            metric,
            data,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.resolution + j;
        (!self.mask[idx]).then(|| self.values[idx])
    }

    pub fn theta(&self, index: usize) -> f64 {
        grid_angle(index, self.resolution)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Grid with the two angle axes exchanged.
    pub fn transposed(&self) -> LandscapeGrid {
        let r = self.resolution;
        let mut values = vec![0.0; r * r];
        let mut mask = vec![false; r * r];
        for i in 0..r {
            for j in 0..r {
                values[j * r + i] = self.values[i * r + j];
                mask[j * r + i] = self.mask[i * r + j];
            }
        }
        LandscapeGrid {
            values,
            mask,
            ..self.clone()
        }
    }

    /// Bitwise comparison that treats the NaNs in masked cells as equal.
    pub fn bit_eq(&self, other: &LandscapeGrid) -> bool {
        self.resolution == other.resolution
            && self.metric == other.metric
            && self.data == other.data
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

/// `2 pi index / resolution`, with the index wrapped into `0..resolution`.
pub fn grid_angle(index: usize, resolution: usize) -> f64 {
    TAU * (index % resolution) as f64 / resolution as f64
}

/// Dictionary with unit rows `[cos t0, sin t0]` and `[cos t1, sin t1]`.
/// Angles are wrapped into `[0, 2pi)` first.
pub fn dictionary_at(theta0: f64, theta1: f64) -> Matrix {
    let (s0, c0) = theta0.rem_euclid(TAU).sin_cos();
    let (s1, c1) = theta1.rem_euclid(TAU).sin_cos();
    Matrix::from_vec(2, 2, vec![c0, s0, c1, s1]).expect("finite angles")
}

/// Dictionary of grid cell `(i, j)`; periodic in both indices exactly.
pub fn cell_dictionary(i: usize, j: usize, resolution: usize) -> Matrix {
    dictionary_at(grid_angle(i, resolution), grid_angle(j, resolution))
}

fn check_2d(op: &'static str, m: &Matrix) -> Result<()> {
    if m.cols() != 2 {
        return Err(Error::DimensionMismatch {
            op,
            left: format!("{}x{}", m.rows(), m.cols()),
            right: "2 columns".into(),
        });
    }
    Ok(())
}

/// Sparsity score of `w` against observations `y` (`n x 2`), using the
/// default [`SparsityForm::InverseDictionary`]. Errors if `w` is singular.
pub fn sparsity_metric(w: &Matrix, y: &Matrix) -> Result<f64> {
    sparsity_metric_with(w, y, SparsityForm::default(), SINGULAR_FLOOR)
}

pub fn sparsity_metric_with(w: &Matrix, y: &Matrix, form: SparsityForm, floor: f64) -> Result<f64> {
    check_2d("sparsity_metric", y)?;
    if w.shape() != (2, 2) {
        return Err(Error::NotSquare {
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    if y.rows() == 0 {
        return Err(Error::invalid("sparsity_metric needs at least one sample"));
    }
    let map = match form {
        SparsityForm::InverseDictionary => invert_2x2_with_floor(w, floor)?,
        SparsityForm::Direct => w.clone(),
    };
    let m = map.as_slice();
    Ok(inverse_mean_l1([m[0], m[1], m[2], m[3]], y.as_slice()))
}

/// `1 / mean_i (|m00 y0 + m01 y1| + |m10 y0 + m11 y1|)` over interleaved `ys`.
fn inverse_mean_l1(m: [f64; 4], ys: &[f64]) -> f64 {
    let mut total = 0.0;
    for y in ys.chunks_exact(2) {
        total += (m[0] * y[0] + m[1] * y[1]).abs() + (m[2] * y[0] + m[3] * y[1]).abs();
    }
    let n = (ys.len() / 2) as f64;
    1.0 / (total / n)
}

/// Permutation- and sign-invariant match between two 2x2 dictionaries.
/// Rows of both are normalized first.
pub fn recovery_metric(w: &Matrix, a: &Matrix) -> Result<f64> {
    for (name, m) in [("candidate", w), ("truth", a)] {
        if m.shape() != (2, 2) {
            return Err(Error::invalid(format!(
                "recovery_metric needs 2x2 matrices, {name} is {}x{}",
                m.rows(),
                m.cols()
            )));
        }
    }
    let w = w.normalize_rows()?;
    let a = a.normalize_rows()?;
    Ok(recovery_unit(w.as_slice(), a.as_slice()))
}

/// Recovery score for row-major 2x2 inputs whose rows already have unit norm.
pub(crate) fn recovery_unit(w: &[f64], a: &[f64]) -> f64 {
    let c = |p: usize, q: usize| (a[2 * p] * w[2 * q] + a[2 * p + 1] * w[2 * q + 1]).abs();
    let a_term = (c(0, 0) + c(1, 1)) / 2.0;
    let b_term = (c(0, 1) + c(1, 0)) / 2.0;
    a_term.max(b_term)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub resolution: usize,
    pub whitened: bool,
    /// Rescale whitened observations by `sqrt(mean eigenvalue)` so their
    /// overall magnitude matches the raw data. Affects sparsity values only.
    pub normalize_whitener_scale: bool,
    pub sparsity_form: SparsityForm,
    pub epsilon: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            resolution: 256,
            whitened: false,
            normalize_whitener_scale: false,
            sparsity_form: SparsityForm::default(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Sparsity and recovery grids for a 2D dataset, on raw or whitened observations.
pub fn sweep(
    data: &SynthDataset,
    resolution: usize,
    whitened: bool,
    normalize_whitener_scale: bool,
) -> Result<(LandscapeGrid, LandscapeGrid)> {
    sweep_with(
        data,
        &SweepConfig {
            resolution,
            whitened,
            normalize_whitener_scale,
            ..SweepConfig::default()
        },
    )
}

pub fn sweep_with(data: &SynthDataset, cfg: &SweepConfig) -> Result<(LandscapeGrid, LandscapeGrid)> {
    check_2d("sweep observations", &data.observations)?;
    if data.dictionary.shape() != (2, 2) {
        return Err(Error::invalid(format!(
            "landscape sweep needs a 2x2 dictionary, got {}x{}",
            data.dictionary.rows(),
            data.dictionary.cols()
        )));
    }
    let (y, a, tag) = if cfg.whitened {
        let w = Whitener::fit(&data.observations, cfg.epsilon)?;
        let mut y = w.whiten(&data.observations)?;
        if cfg.normalize_whitener_scale {
            let mean_l = w.eigenvalues().iter().sum::<f64>() / w.dim() as f64;
            y = y.scale(mean_l.sqrt());
        }
        // y = s A + mu  =>  whiten(y) = s (A W^T)
        (y, w.whiten_directions(&data.dictionary)?, DataTag::Whitened)
    } else {
        (data.observations.clone(), data.dictionary.clone(), DataTag::Raw)
    };
    sweep_observations(&y, &a, cfg.resolution, cfg.sparsity_form, tag)
}

/// Sweeps given observations `y` (`n x 2`) against a true dictionary `a` (2x2, rows are atoms).
pub fn sweep_observations(
    y: &Matrix,
    a: &Matrix,
    resolution: usize,
    form: SparsityForm,
    tag: DataTag,
) -> Result<(LandscapeGrid, LandscapeGrid)> {
    check_2d("sweep_observations", y)?;
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "landscape resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    if y.rows() == 0 {
        return Err(Error::invalid("landscape sweep needs at least one observation"));
    }
    let a_unit = a.normalize_rows()?;
    let a_unit = a_unit.as_slice();
    let ys = y.as_slice();
    let r = resolution;

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)> = parallel::install(|| {
        (0..r)
            .into_par_iter()
            .map(|i| {
                let mut spars = vec![f64::NAN; r];
                let mut recov = vec![f64::NAN; r];
                let mut mask = vec![false; r];
                for j in 0..r {
                    let w = cell_dictionary(i, j, r);
                    let wm = w.as_slice();
                    let det = wm[0] * wm[3] - wm[1] * wm[2];
                    if det.abs() < MASK_DET_FLOOR {
                        mask[j] = true;
                        continue;
                    }
                    let map = match form {
                        SparsityForm::InverseDictionary => [wm[3] / det, -wm[1] / det, -wm[2] / det, wm[0] / det],
                        SparsityForm::Direct => [wm[0], wm[1], wm[2], wm[3]],
                    };
                    spars[j] = inverse_mean_l1(map, ys);
                    recov[j] = recovery_unit(wm, a_unit);
                }
                (spars, recov, mask)
            })
            .collect()
    });

    let mut spars = Vec::with_capacity(r * r);
    let mut recov = Vec::with_capacity(r * r);
    let mut mask = Vec::with_capacity(r * r);
    for (s, v, m) in rows {
        spars.extend(s);
        recov.extend(v);
        mask.extend(m);
    }
    Ok((
        LandscapeGrid::new(r, spars, mask.clone(), MetricTag::Sparsity, tag)?,
        LandscapeGrid::new(r, recov, mask, MetricTag::Recovery, tag)?,
    ))
}

/// How well the sparsity landscape points at good dictionaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentStats {
    /// Cell `(i, j)` of maximal sparsity.
    pub argmax_sparsity_cell: (usize, usize),
    pub max_sparsity: f64,
    pub recovery_at_sparsity_argmax: f64,
    /// Spearman rank correlation of the two grids over unmasked cells.
    pub spearman_correlation: f64,
}

pub fn alignment_stats(sparsity: &LandscapeGrid, recovery: &LandscapeGrid) -> Result<AlignmentStats> {
    if sparsity.resolution != recovery.resolution || sparsity.mask != recovery.mask {
        return Err(Error::invalid(
            "alignment_stats needs grids with matching resolution and mask",
        ));
    }
    let cells: Vec<usize> = (0..sparsity.values.len()).filter(|&c| !sparsity.mask[c]).collect();
    if cells.is_empty() {
        return Err(Error::invalid("alignment_stats on an all-masked grid"));
    }
    let mut best = cells[0];
    for &c in &cells[1..] {
        // strict comparison keeps the lowest linear index on ties
        if sparsity.values[c] > sparsity.values[best] {
            best = c;
        }
    }
    let s: Vec<f64> = cells.iter().map(|&c| sparsity.values[c]).collect();
    let v: Vec<f64> = cells.iter().map(|&c| recovery.values[c]).collect();
    let r = sparsity.resolution;
    Ok(AlignmentStats {
        argmax_sparsity_cell: (best / r, best % r),
        max_sparsity: sparsity.values[best],
        recovery_at_sparsity_argmax: recovery.values[best],
        spearman_correlation: spearman(&s, &v),
    })
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs must have equal length");
    pearson(&average_ranks(a), &average_ranks(b))
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&p, &q| x[p].total_cmp(&x[q]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}
