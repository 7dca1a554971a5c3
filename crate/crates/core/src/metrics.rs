//! Evaluation metrics: explained variance, L0, dictionary recovery (MCC)
//! and a single-latent threshold probe.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, SeededRng};

pub const DEFAULT_L0_TOL: f64 = 1e-10;

/// `1 - |x - xhat|_F^2 / |x - mean(x)|_F^2`.
pub fn explained_variance(x: &Matrix, xhat: &Matrix) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::DimensionMismatch {
            op: "explained_variance",
            left: format!("{}x{}", x.rows(), x.cols()),
            right: format!("{}x{}", xhat.rows(), xhat.cols()),
        });
    }
    let mean = x.column_means();
    let mut total = 0.0;
    let mut resid = 0.0;
    for (row, hrow) in x.row_iter().zip(xhat.row_iter()) {
        for k in 0..row.len() {
            total += (row[k] - mean[k]).powi(2);
            resid += (row[k] - hrow[k]).powi(2);
        }
    }
    if total == 0.0 {
        return Err(Error::invalid("explained_variance: x has zero total variance"));
    }
    Ok(1.0 - resid / total)
}

/// Mean per-row count of entries with `|v| > tol`.
pub fn mean_l0(features: &Matrix, tol: f64) -> f64 {
    if features.rows() == 0 {
        return 0.0;
    }
    let active = features.as_slice().iter().filter(|v| v.abs() > tol).count();
    active as f64 / features.rows() as f64
}

/// Fraction of latents (columns) that never exceed `tol` in magnitude.
pub fn dead_latent_fraction(features: &Matrix, tol: f64) -> f64 {
    let (n, m) = features.shape();
    if m == 0 {
        return 0.0;
    }
    let mut alive = vec![false; m];
    for i in 0..n {
        for (a, v) in alive.iter_mut().zip(features.row(i)) {
            *a |= v.abs() > tol;
        }
    }
    alive.iter().filter(|a| !**a).count() as f64 / m as f64
}

/// Mean absolute cosine between truth atoms and their optimally assigned
/// learned atoms. Rows are atoms; `learned` may have more rows than `truth`.
pub fn mcc(learned: &Matrix, truth: &Matrix) -> Result<f64> {
    mcc_with_assignment(learned, truth).map(|(v, _)| v)
}

/// Like [`mcc`], also returning the learned row matched to each truth row.
pub fn mcc_with_assignment(learned: &Matrix, truth: &Matrix) -> Result<(f64, Vec<usize>)> {
    if learned.cols() != truth.cols() || learned.rows() < truth.rows() || truth.rows() == 0 {
        return Err(Error::DimensionMismatch {
            op: "mcc",
            left: format!("learned {}x{}", learned.rows(), learned.cols()),
            right: format!("truth {}x{}", truth.rows(), truth.cols()),
        });
    }
    let l = learned.normalize_rows()?;
    let t = truth.normalize_rows()?;
    let (nt, nl, d) = (t.rows(), l.rows(), t.cols());
    let mut sim = vec![0.0; nt * nl];
    for p in 0..nt {
        for q in 0..nl {
            let mut s = 0.0;
            for k in 0..d {
                s += t[(p, k)] * l[(q, k)];
            }
            sim[p * nl + q] = s.abs();
        }
    }
    let assignment = max_weight_assignment(&sim, nt, nl);
    let mut total = 0.0;
    for (p, &q) in assignment.iter().enumerate() {
        total += sim[p * nl + q];
    }
    Ok((total / nt as f64, assignment))
}

/// Assigns each of `rows` rows a distinct column (`rows <= cols`) maximizing
/// the summed weight. Shortest augmenting paths with potentials, O(rows^2 cols).
pub fn max_weight_assignment(weights: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols && weights.len() == rows * cols);
    let cost = |i: usize, j: usize| -weights[(i - 1) * cols + (j - 1)];
    // 1-based with a virtual column 0
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub chosen_latent: usize,
    pub threshold: f64,
    /// True when larger activations predict label 1.
    pub positive_above: bool,
}

/// Picks the latent with the largest `|mean_1 - mean_0| / pooled_sd` on the
/// training split, fits a single threshold on it, and scores the test split.
pub fn sparse_probe_top1(
    features_train: &Matrix,
    labels_train: &[u8],
    features_test: &Matrix,
    labels_test: &[u8],
) -> Result<ProbeResult> {
    if features_train.rows() != labels_train.len() || features_test.rows() != labels_test.len() {
        return Err(Error::invalid("probe features and labels differ in length"));
    }
    if features_train.cols() != features_test.cols() {
        return Err(Error::DimensionMismatch {
            op: "sparse_probe_top1",
            left: format!("train {} latents", features_train.cols()),
            right: format!("test {} latents", features_test.cols()),
        });
    }
    if labels_train.iter().chain(labels_test).any(|&l| l > 1) {
        return Err(Error::invalid("probe labels must be 0 or 1"));
    }
    let n1 = labels_train.iter().filter(|&&l| l == 1).count();
    if n1 == 0 || n1 == labels_train.len() {
        return Err(Error::invalid("probe training labels contain a single class"));
    }

    let mut best = (0, f64::NEG_INFINITY, true);
    for j in 0..features_train.cols() {
        let (score, up) = separation(features_train, labels_train, j);
        if score > best.1 {
            best = (j, score, up);
        }
    }
    let (latent, _, up) = best;
    let values = features_train.col(latent);
    let threshold = fit_threshold(&values, labels_train, up);
    let test = features_test.col(latent);
    let correct = test
        .iter()
        .zip(labels_test)
        .filter(|(&v, &l)| ((v > threshold) == up) == (l == 1))
        .count();
    let accuracy = if labels_test.is_empty() {
        0.0
    } else {
        correct as f64 / labels_test.len() as f64
    };
    Ok(ProbeResult {
        accuracy,
        chosen_latent: latent,
        threshold,
        positive_above: up,
    })
}

/// Standardized class-mean difference of column `j` and its sign.
fn separation(f: &Matrix, labels: &[u8], j: usize) -> (f64, bool) {
    let mut sum = [0.0; 2];
    let mut count = [0.0; 2];
    for (i, &l) in labels.iter().enumerate() {
        sum[l as usize] += f[(i, j)];
        count[l as usize] += 1.0;
    }
    let mean = [sum[0] / count[0], sum[1] / count[1]];
    let mut ss = [0.0; 2];
    for (i, &l) in labels.iter().enumerate() {
        ss[l as usize] += (f[(i, j)] - mean[l as usize]).powi(2);
    }
    let pooled = ((ss[0] / count[0] + ss[1] / count[1]) / 2.0).sqrt();
    let diff = mean[1] - mean[0];
    let score = if diff == 0.0 {
        0.0
    } else if pooled == 0.0 {
        f64::INFINITY
    } else {
        diff.abs() / pooled
    };
    (score, diff >= 0.0)
}

/// Threshold maximizing training accuracy among midpoints between
/// consecutive distinct values plus one cut below and one above all values.
/// Ties resolve to the lowest threshold.
fn fit_threshold(values: &[f64], labels: &[u8], up: bool) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total_pos = labels.iter().filter(|&&l| l == 1).count() as i64;
    let total_neg = labels.len() as i64 - total_pos;
    // cut below everything: all samples sit above the threshold
    let correct_at = |pos_below: i64, neg_below: i64| {
        if up {
            neg_below + (total_pos - pos_below)
        } else {
            pos_below + (total_neg - neg_below)
        }
    };
    let first = values[order[0]];
    let mut best_t = first - 1.0 - first.abs();
    let mut best_c = correct_at(0, 0);
    let (mut pos_below, mut neg_below) = (0i64, 0i64);
    let mut k = 0;
    while k < order.len() {
        let v = values[order[k]];
        while k < order.len() && values[order[k]] == v {
            if labels[order[k]] == 1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            k += 1;
        }
        let t = if k < order.len() {
            (v + values[order[k]]) / 2.0
        } else {
            v + 1.0 + v.abs()
        };
        let c = correct_at(pos_below, neg_below);
        if c > best_c {
            best_c = c;
            best_t = t;
        }
    }
    best_t
}

/// Class-balanced train/test split: the majority class is subsampled to the
/// minority count, then each class is halved. Indices are sorted.
pub fn balanced_split(labels: &[u8], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        by_class[l as usize].push(i);
    }
    let per_class = by_class[0].len().min(by_class[1].len());
    if per_class < 2 {
        return Err(Error::invalid(format!(
            "balanced split needs at least 2 samples per class, minority has {per_class}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in by_class.iter_mut() {
        rng.shuffle(class);
        let kept = &class[..per_class];
        let half = per_class / 2;
        train.extend_from_slice(&kept[..half]);
        test.extend_from_slice(&kept[half..2 * half]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Metrics of one trained model on one dataset. Optional fields are absent
/// when the dataset lacks the needed ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub explained_variance: f64,
    pub mean_l0: f64,
    pub mcc: Option<f64>,
    pub sparse_probe_top1_accuracy: Option<f64>,
    pub probe_latent: Option<usize>,
    pub dead_latent_fraction: f64,
}

impl EvalReport {
    /// `(name, value)` pairs, absent optionals skipped.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("explained_variance", fmt_real(self.explained_variance)),
            ("mean_l0", fmt_real(self.mean_l0)),
        ];
        if let Some(v) = self.mcc {
            out.push(("mcc", fmt_real(v)));
        }
        if let Some(v) = self.sparse_probe_top1_accuracy {
            out.push(("sparse_probe_top1_accuracy", fmt_real(v)));
        }
        if let Some(v) = self.probe_latent {
            out.push(("probe_latent", v.to_string()));
        }
        out.push(("dead_latent_fraction", fmt_real(self.dead_latent_fraction)));
        out
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        self.fields().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Round-trippable decimal formatting (17 significant digits).
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}
