//! ReLU and Top-K sparse autoencoders with hand-derived gradients and a
//! plain mini-batch gradient-descent trainer.
//!
//! Shapes, with samples as rows:
//!
//! ```text
//! pre  = x W_e^T + b_e           (n x m)
//! f    = ReLU(pre)               or TopK-then-ReLU(pre, k)
//! xhat = f W_d^T + b_d           (n x d)
//! loss = mean_i |x_i - xhat_i|^2 + lambda * scale * mean_i |f_i|_1   (ReLU)
//! loss = mean_i |x_i - xhat_i|^2                                     (TopK)
//! ```

use crate::error::{Error, Result};
use crate::numkit::{matmul, matmul_transposed, transposed_matmul, Matrix, SeededRng};

/// Architecture tag together with its sparsity hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arch {
    /// Soft sparsity via an L1 penalty of weight `lambda`.
    Relu { lambda: f64 },
    /// Hard sparsity: keep the `k` largest pre-activations per sample.
    TopK { k: usize },
}

impl Arch {
    pub fn name(&self) -> &'static str {
        match self {
            Arch::Relu { .. } => "relu",
            Arch::TopK { .. } => "topk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    /// `m x d` encoder weights.
    pub enc_weights: Matrix,
    pub enc_bias: Vec<f64>,
    /// `d x m` decoder weights; column `j` is the dictionary atom of latent `j`.
    pub dec_weights: Matrix,
    pub dec_bias: Vec<f64>,
    pub arch: Arch,
}

impl SaeParams {
    /// Assembles parameters after checking that all shapes agree.
    pub fn new(
        enc_weights: Matrix,
        enc_bias: Vec<f64>,
        dec_weights: Matrix,
        dec_bias: Vec<f64>,
        arch: Arch,
    ) -> Result<SaeParams> {
        let (m, d) = enc_weights.shape();
        if dec_weights.shape() != (d, m) || enc_bias.len() != m || dec_bias.len() != d {
            return Err(Error::DimensionMismatch {
                op: "SaeParams::new",
                left: format!("encoder {m}x{d}, b_e {}", enc_bias.len()),
                right: format!(
                    "decoder {}x{}, b_d {}",
                    dec_weights.rows(),
                    dec_weights.cols(),
                    dec_bias.len()
                ),
            });
        }
        validate_arch(&arch, m)?;
        Ok(SaeParams {
            enc_weights,
            enc_bias,
            dec_weights,
            dec_bias,
            arch,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_weights.cols()
    }

    pub fn num_latents(&self) -> usize {
        self.enc_weights.rows()
    }

    pub fn num_params(&self) -> usize {
        let (m, d) = self.enc_weights.shape();
        2 * m * d + m + d
    }

    pub fn is_finite(&self) -> bool {
        self.enc_weights.is_finite()
            && self.dec_weights.is_finite()
            && self.enc_bias.iter().chain(&self.dec_bias).all(|v| v.is_finite())
    }

    /// Flattens as `[W_e, b_e, W_d, b_d]`, all row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.enc_weights.as_slice());
        out.extend_from_slice(&self.enc_bias);
        out.extend_from_slice(self.dec_weights.as_slice());
        out.extend_from_slice(&self.dec_bias);
        out
    }

    /// Inverse of [`SaeParams::to_flat`], keeping this instance's shapes and arch.
    pub fn with_flat(&self, flat: &[f64]) -> SaeParams {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let (m, d) = self.enc_weights.shape();
        let mut rest = flat;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        SaeParams {
            enc_weights: Matrix::from_vec(m, d, take(m * d)).expect("finite flat weights"),
            enc_bias: take(m),
            dec_weights: Matrix::from_vec(d, m, take(d * m)).expect("finite flat weights"),
            dec_bias: take(d),
            arch: self.arch,
        }
    }

    /// Reorders latents so that new latent `j` is old latent `perm[j]`.
    pub fn permute_latents(&self, perm: &[usize]) -> SaeParams {
        let m = self.num_latents();
        assert_eq!(perm.len(), m);
        let enc_weights = self.enc_weights.select_rows(perm);
        let enc_bias = perm.iter().map(|&p| self.enc_bias[p]).collect();
        let mut dec_weights = Matrix::zeros(self.input_dim(), m);
        for (j, &p) in perm.iter().enumerate() {
            for i in 0..self.input_dim() {
                dec_weights[(i, j)] = self.dec_weights[(i, p)];
            }
        }
        SaeParams {
            enc_weights,
            enc_bias,
            dec_weights,
            dec_bias: self.dec_bias.clone(),
            arch: self.arch,
        }
    }

    /// Dictionary atoms as rows (`m x d`), i.e. the decoder transposed.
    pub fn dictionary(&self) -> Matrix {
        self.dec_weights.transpose()
    }
}

fn validate_arch(arch: &Arch, m: usize) -> Result<()> {
    match *arch {
        Arch::Relu { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
            Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")))
        }
        Arch::TopK { k } if k == 0 || k > m => {
            Err(Error::invalid(format!("top-k needs 1 <= k <= m = {m}, got k = {k}")))
        }
        _ => Ok(()),
    }
}

/// Gradient with the same layout as [`SaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub enc_weights: Matrix,
    pub enc_bias: Vec<f64>,
    pub dec_weights: Matrix,
    pub dec_bias: Vec<f64>,
}

impl ParamGrads {
    /// Flattened in the same order as [`SaeParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.enc_weights.as_slice());
        out.extend_from_slice(&self.enc_bias);
        out.extend_from_slice(self.dec_weights.as_slice());
        out.extend_from_slice(&self.dec_bias);
        out
    }
}

/// Loss split into its two terms; `total == recon + sparsity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub sparsity: f64,
}

impl LossParts {
    fn new(recon: f64, sparsity: f64) -> Self {
        LossParts {
            total: recon + sparsity,
            recon,
            sparsity,
        }
    }
}

/// Tied initialization: encoder rows uniform on the unit sphere, decoder the
/// encoder transpose, zero biases.
pub fn init_params(d: usize, m: usize, arch: Arch, seed: u64) -> Result<SaeParams> {
    if d == 0 || m == 0 {
        return Err(Error::invalid(format!("need d >= 1 and m >= 1, got d = {d}, m = {m}")));
    }
    validate_arch(&arch, m)?;
    let mut rng = SeededRng::new(seed);
    let mut enc = Matrix::zeros(m, d);
    for j in 0..m {
        enc.row_mut(j).copy_from_slice(&rng.unit_vector(d));
    }
    let dec = enc.transpose();
    Ok(SaeParams {
        enc_weights: enc,
        enc_bias: vec![0.0; m],
        dec_weights: dec,
        dec_bias: vec![0.0; d],
        arch,
    })
}

fn check_input(op: &'static str, p: &SaeParams, x: &Matrix) -> Result<()> {
    if x.cols() != p.input_dim() {
        return Err(Error::DimensionMismatch {
            op,
            left: format!("input {}x{}", x.rows(), x.cols()),
            right: format!("SAE with d = {}, m = {}", p.input_dim(), p.num_latents()),
        });
    }
    Ok(())
}

/// `x W_e^T + b_e`.
pub fn pre_activations(p: &SaeParams, x: &Matrix) -> Result<Matrix> {
    check_input("pre_activations", p, x)?;
    matmul_transposed(x, &p.enc_weights)?.add_row_vector(&p.enc_bias)
}

/// Active-set mask for one row of pre-activations.
///
/// Top-K ranks by value (ties to the lowest index), then keeps only the
/// positive survivors.
fn row_mask(arch: &Arch, pre: &[f64], mask: &mut [bool], order: &mut Vec<usize>) {
    match *arch {
        Arch::Relu { .. } => {
            for (m, &v) in mask.iter_mut().zip(pre) {
                *m = v > 0.0;
            }
        }
        Arch::TopK { k } => {
            mask.iter_mut().for_each(|m| *m = false);
            order.clear();
            order.extend(0..pre.len());
            // stable sort keeps lower indices first among equal values
            order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]));
            for &j in order.iter().take(k) {
                mask[j] = pre[j] > 0.0;
            }
        }
    }
}

struct Forward {
    mask: Vec<bool>,
    features: Matrix,
    output: Matrix,
}

fn forward(p: &SaeParams, x: &Matrix) -> Result<Forward> {
    let pre = pre_activations(p, x)?;
    let (n, m) = pre.shape();
    let mut mask = vec![false; n * m];
    let mut features = Matrix::zeros(n, m);
    let mut order = Vec::with_capacity(m);
    for i in 0..n {
        let row_m = &mut mask[i * m..(i + 1) * m];
        row_mask(&p.arch, pre.row(i), row_m, &mut order);
        let frow = features.row_mut(i);
        for j in 0..m {
            if row_m[j] {
                frow[j] = pre[(i, j)];
            }
        }
    }
    let output = decode(p, &features)?;
    Ok(Forward { mask, features, output })
}

/// Sparse feature activations, `n x m`.
pub fn encode(p: &SaeParams, x: &Matrix) -> Result<Matrix> {
    check_input("encode", p, x)?;
    let pre = pre_activations(p, x)?;
    let (n, m) = pre.shape();
    let mut features = Matrix::zeros(n, m);
    let mut mask = vec![false; m];
    let mut order = Vec::with_capacity(m);
    for i in 0..n {
        row_mask(&p.arch, pre.row(i), &mut mask, &mut order);
        let frow = features.row_mut(i);
        for j in 0..m {
            if mask[j] {
                frow[j] = pre[(i, j)];
            }
        }
    }
    Ok(features)
}

/// `f W_d^T + b_d`, `n x d`.
pub fn decode(p: &SaeParams, f: &Matrix) -> Result<Matrix> {
    if f.cols() != p.num_latents() {
        return Err(Error::DimensionMismatch {
            op: "decode",
            left: format!("features {}x{}", f.rows(), f.cols()),
            right: format!("SAE with m = {}", p.num_latents()),
        });
    }
    matmul_transposed(f, &p.dec_weights)?.add_row_vector(&p.dec_bias)
}

/// Mean over rows of the squared Euclidean distance.
pub(crate) fn mean_squared_distance(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows() as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// L1 coefficient that multiplies `mean_i |f_i|_1` in the loss.
pub(crate) fn l1_weight(arch: &Arch, sparsity_scale: f64) -> f64 {
    match *arch {
        Arch::Relu { lambda } => lambda * sparsity_scale,
        Arch::TopK { .. } => 0.0,
    }
}

pub(crate) fn sparsity_term(arch: &Arch, features: &Matrix, sparsity_scale: f64) -> f64 {
    match arch {
        Arch::Relu { .. } => {
            let n = features.rows() as f64;
            let l1: f64 = features.as_slice().iter().map(|v| v.abs()).sum();
            l1_weight(arch, sparsity_scale) * l1 / n
        }
        Arch::TopK { .. } => 0.0,
    }
}

fn check_scale(sparsity_scale: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sparsity_scale) {
        return Err(Error::invalid(format!(
            "sparsity_scale must lie in [0, 1], got {sparsity_scale}"
        )));
    }
    Ok(())
}

/// Loss on a batch; `sparsity_scale` is the warmup multiplier on the penalty.
pub fn loss(p: &SaeParams, x: &Matrix, sparsity_scale: f64) -> Result<LossParts> {
    check_scale(sparsity_scale)?;
    let fwd = forward(p, x)?;
    Ok(LossParts::new(
        mean_squared_distance(x, &fwd.output),
        sparsity_term(&p.arch, &fwd.features, sparsity_scale),
    ))
}

/// Exact gradient of [`loss`]. The ReLU kink uses subgradient 0 and the
/// Top-K selection is held fixed, so gradient only reaches kept latents.
pub fn grad(p: &SaeParams, x: &Matrix, sparsity_scale: f64) -> Result<ParamGrads> {
    loss_and_grad(p, x, sparsity_scale).map(|(_, g)| g)
}

pub fn loss_and_grad(p: &SaeParams, x: &Matrix, sparsity_scale: f64) -> Result<(LossParts, ParamGrads)> {
    check_scale(sparsity_scale)?;
    let fwd = forward(p, x)?;
    let n = x.rows() as f64;
    let parts = LossParts::new(
        mean_squared_distance(x, &fwd.output),
        sparsity_term(&p.arch, &fwd.features, sparsity_scale),
    );
    let mut g_out = fwd.output.sub(x)?;
    g_out.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0 / n);
    let grads = backward(p, x, &fwd, &g_out, l1_weight(&p.arch, sparsity_scale) / n)?;
    Ok((parts, grads))
}

/// Loss and gradient when the decoder output passes through a fixed linear
/// map before the reconstruction error is taken:
/// `xhat = decode(encode(z)) M^T + offset`, compared against `target`.
pub(crate) fn loss_and_grad_mapped(
    p: &SaeParams,
    z: &Matrix,
    target: &Matrix,
    output_map: &crate::whitening::Whitener,
    sparsity_scale: f64,
) -> Result<(LossParts, ParamGrads)> {
    check_scale(sparsity_scale)?;
    let fwd = forward(p, z)?;
    let xhat = output_map.dewhiten(&fwd.output)?;
    let n = z.rows() as f64;
    let parts = LossParts::new(
        mean_squared_distance(target, &xhat),
        sparsity_term(&p.arch, &fwd.features, sparsity_scale),
    );
    let mut g_xhat = xhat.sub(target)?;
    g_xhat.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0 / n);
    // xhat = zhat (W^-1)^T + mu, so dL/dzhat = dL/dxhat W^-1
    let g_out = matmul(&g_xhat, output_map.dewhiten_matrix())?;
    let grads = backward(p, z, &fwd, &g_out, l1_weight(&p.arch, sparsity_scale) / n)?;
    Ok((parts, grads))
}

/// Backpropagates `g_out = dL/d(decoder output)` plus an L1 term with
/// per-entry weight `l1` on active features.
fn backward(p: &SaeParams, x: &Matrix, fwd: &Forward, g_out: &Matrix, l1: f64) -> Result<ParamGrads> {
    let dec_weights = transposed_matmul(g_out, &fwd.features)?;
    let dec_bias = column_sums(g_out);
    let mut g_pre = matmul(g_out, &p.dec_weights)?;
    for (g, &active) in g_pre.as_mut_slice().iter_mut().zip(&fwd.mask) {
        // features are >= 0, so d|f|/df = 1 on the active set
        *g = if active { *g + l1 } else { 0.0 };
    }
    let enc_weights = transposed_matmul(&g_pre, x)?;
    let enc_bias = column_sums(&g_pre);
    Ok(ParamGrads {
        enc_weights,
        enc_bias,
        dec_weights,
        dec_bias,
    })
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Mini-batch gradient-descent schedule and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Linear ramp of the learning rate from 0.
    pub lr_warmup_steps: usize,
    /// Linear ramp of the sparsity penalty from 0.
    pub sparsity_warmup_steps: usize,
    /// Fraction of final steps over which the learning rate decays linearly to 0.
    pub lr_decay_fraction: f64,
    pub seed: u64,
    /// Keep decoder columns on the unit sphere (projected gradient + renormalization).
    pub normalize_decoder: bool,
    /// Hold the encoder bias at its initial value.
    pub freeze_encoder_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 5_000,
            batch_size: 64,
            learning_rate: 0.01,
            lr_warmup_steps: 100,
            sparsity_warmup_steps: 500,
            lr_decay_fraction: 0.2,
            seed: 0,
            normalize_decoder: true,
            freeze_encoder_bias: false,
        }
    }
}

impl TrainConfig {
    /// Defaults with decoder normalization on for ReLU and off for Top-K.
    pub fn for_arch(arch: &Arch) -> Self {
        TrainConfig {
            normalize_decoder: matches!(arch, Arch::Relu { .. }),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.lr_warmup_steps > self.steps {
            return Err(Error::Config(format!(
                "lr_warmup_steps ({}) exceeds steps ({})",
                self.lr_warmup_steps, self.steps
            )));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_fraction) {
            return Err(Error::Config(format!(
                "lr_decay_fraction must lie in [0, 1], got {}",
                self.lr_decay_fraction
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Learning rate used at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let mut factor = 1.0;
        if self.lr_warmup_steps > 0 {
            factor = ((step + 1) as f64 / self.lr_warmup_steps as f64).min(1.0);
        }
        let decay_steps = (self.lr_decay_fraction * self.steps as f64).round() as usize;
        let decay_start = self.steps - decay_steps.min(self.steps);
        if decay_steps > 0 && step >= decay_start {
            factor *= (self.steps - step) as f64 / decay_steps as f64;
        }
        self.learning_rate * factor
    }

    /// Sparsity-penalty multiplier used at `step`.
    pub fn sparsity_scale_at(&self, step: usize) -> f64 {
        if self.sparsity_warmup_steps == 0 {
            1.0
        } else {
            ((step + 1) as f64 / self.sparsity_warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Batch loss before each update; one entry per step.
    pub loss_trace: Vec<LossParts>,
    /// Reconstruction MSE on the full training data after training.
    pub final_recon_mse: f64,
    pub final_mean_l0: f64,
    pub steps: usize,
    /// Latents that never fire on the training data after training.
    pub dead_latents: usize,
}

/// Trains on `data` (rows are samples).
pub fn train(p0: &SaeParams, data: &Matrix, cfg: &TrainConfig) -> Result<(SaeParams, TrainReport)> {
    check_input("train", p0, data)?;
    run_training(
        p0,
        data.rows(),
        cfg,
        |p, idx, scale| loss_and_grad(p, &data.select_rows(idx), scale),
        |p| {
            let fwd = forward(p, data)?;
            Ok((mean_squared_distance(data, &fwd.output), fwd.features))
        },
    )
}

/// Shared descent loop. `batch` returns loss and gradient for the given row
/// indices; `evaluate` returns the full-data reconstruction MSE and features.
pub(crate) fn run_training<B, E>(
    p0: &SaeParams,
    n_rows: usize,
    cfg: &TrainConfig,
    mut batch: B,
    evaluate: E,
) -> Result<(SaeParams, TrainReport)>
where
    B: FnMut(&SaeParams, &[usize], f64) -> Result<(LossParts, ParamGrads)>,
    E: Fn(&SaeParams) -> Result<(f64, Matrix)>,
{
    cfg.validate()?;
    if n_rows < cfg.batch_size {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {n_rows} available rows",
            cfg.batch_size
        )));
    }
    let mut params = p0.clone();
    let mut rng = SeededRng::new(cfg.seed);
    let mut order = rng.permutation(n_rows);
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        if cursor + cfg.batch_size > n_rows {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;

        let (parts, mut g) = batch(&params, idx, cfg.sparsity_scale_at(step))?;
        if !parts.total.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: parts.total,
            });
        }
        trace.push(parts);

        let lr = cfg.lr_at(step);
        if lr == 0.0 {
            continue;
        }
        if cfg.normalize_decoder {
            project_to_tangent(&params.dec_weights, &mut g.dec_weights);
        }
        apply_step(&mut params, &g, lr, cfg.freeze_encoder_bias);
        if cfg.normalize_decoder {
            normalize_columns(&mut params.dec_weights);
        }
        if !params.is_finite() {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
    }

    let (final_recon_mse, features) = evaluate(&params)?;
    let (n, m) = features.shape();
    let active: usize = features.as_slice().iter().filter(|v| v.abs() > 0.0).count();
    let dead_latents = (0..m).filter(|&j| (0..n).all(|i| features[(i, j)] == 0.0)).count();
    Ok((
        params,
        TrainReport {
            loss_trace: trace,
            final_recon_mse,
            final_mean_l0: active as f64 / n.max(1) as f64,
            steps: cfg.steps,
            dead_latents,
        },
    ))
}

fn apply_step(p: &mut SaeParams, g: &ParamGrads, lr: f64, freeze_encoder_bias: bool) {
    let axpy = |dst: &mut [f64], src: &[f64]| {
        for (d, s) in dst.iter_mut().zip(src) {
            *d -= lr * s;
        }
    };
    axpy(p.enc_weights.as_mut_slice(), g.enc_weights.as_slice());
    if !freeze_encoder_bias {
        axpy(&mut p.enc_bias, &g.enc_bias);
    }
    axpy(p.dec_weights.as_mut_slice(), g.dec_weights.as_slice());
    axpy(&mut p.dec_bias, &g.dec_bias);
}

/// Removes from each gradient column its component along the matching weight column.
fn project_to_tangent(w: &Matrix, g: &mut Matrix) {
    let (d, m) = w.shape();
    for j in 0..m {
        let norm_sq: f64 = (0..d).map(|i| w[(i, j)] * w[(i, j)]).sum();
        if norm_sq == 0.0 {
            continue;
        }
        let along: f64 = (0..d).map(|i| w[(i, j)] * g[(i, j)]).sum::<f64>() / norm_sq;
        for i in 0..d {
            g[(i, j)] -= along * w[(i, j)];
        }
    }
}

fn normalize_columns(w: &mut Matrix) {
    let (d, m) = w.shape();
    for j in 0..m {
        let norm = (0..d).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..d {
                w[(i, j)] /= norm;
            }
        }
    }
}
