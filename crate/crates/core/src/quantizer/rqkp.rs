//! Residual k-means codebooks refined with a reconstruction objective.
//!
//! The encoder is `e(x) = W_e x + b_e + x` and starts as the identity. The
//! latent is quantized greedily level by level, and the decoder
//! `x_hat = W_d q + b_d` maps the summed centroids back. Training minimizes
//!
//! ```text
//! |x - x_hat|^2 + sum_l |sg(r_l) - c_l|^2 + beta * sum_l |r_l - sg(c_l)|^2
//! ```
//!
//! with a straight-through estimator across quantization. Residuals are
//! formed from detached centroids, so centroids only learn from the codebook
//! term and the encoder only from reconstruction and commitment.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::kmeans::kmeans_fit;
use super::metrics::Assignments;
use super::rq::{encode_residuals, Codebook};
use super::{CodePath, EmbeddingCorpus};
use crate::error::{GprError, Result};
use crate::rng;

/// How level codebooks are seeded before refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodebookInit {
    /// k-means++ and Lloyd on each level's residual stream.
    KMeans,
    /// Uniform draws inside the bounding box of each level's residual stream.
    RandomUniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RqkpModel {
    pub enc_weight: Array2<f64>,
    pub enc_bias: Array1<f64>,
    pub codebook: Codebook,
    pub dec_weight: Array2<f64>,
    pub dec_bias: Array1<f64>,
    pub beta: f64,
}

pub const DEFAULT_BETA: f64 = 0.25;

impl RqkpModel {
    /// Identity encoder and decoder around a given codebook.
    pub fn identity(codebook: Codebook, beta: f64) -> Result<Self> {
        let d = codebook.dim();
        let model = RqkpModel {
            enc_weight: Array2::zeros((d, d)),
            enc_bias: Array1::zeros(d),
            codebook,
            dec_weight: Array2::eye(d),
            dec_bias: Array1::zeros(d),
            beta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.codebook.dim();
        if self.enc_weight.dim() != (d, d)
            || self.dec_weight.dim() != (d, d)
            || self.enc_bias.len() != d
            || self.dec_bias.len() != d
        {
            return Err(GprError::invalid("encoder/decoder shapes do not match the codebook dimension"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(GprError::invalid(format!("commitment coefficient {} must be positive", self.beta)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }

    pub fn latent(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.enc_weight.dot(&x) + &self.enc_bias + x
    }

    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<CodePath> {
        if x.len() != self.dim() {
            return Err(GprError::invalid(format!(
                "vector dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let (codes, _, _) = encode_residuals(self.latent(x).view(), &self.codebook);
        Ok(CodePath(codes))
    }

    pub fn reconstruct(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let (_, q, _) = encode_residuals(self.latent(x).view(), &self.codebook);
        self.dec_weight.dot(&q) + &self.dec_bias
    }

    /// Semantic IDs for every item of a corpus.
    pub fn assign(&self, corpus: &EmbeddingCorpus) -> Result<Assignments> {
        corpus
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| Ok((id.clone(), self.encode(corpus.row(i))?)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RqkpLoss {
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
}

impl RqkpLoss {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook + self.commitment
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("reconstruction", self.reconstruction),
            ("codebook", self.codebook),
            ("commitment", self.commitment),
        ] {
            if !v.is_finite() {
                return Err(GprError::numerical(format!("rqkp {name} loss"), format!("value {v}")));
            }
        }
        Ok(())
    }
}

/// Batch-mean gradients of the straight-through objective.
#[derive(Clone, Debug, PartialEq)]
pub struct RqkpGradients {
    pub enc_weight: Array2<f64>,
    pub enc_bias: Array1<f64>,
    pub centroids: Vec<Array2<f64>>,
    pub dec_weight: Array2<f64>,
    pub dec_bias: Array1<f64>,
}

pub fn rqkp_gradients(model: &RqkpModel, batch: ArrayView2<'_, f64>) -> Result<(RqkpLoss, RqkpGradients)> {
    let d = model.dim();
    if batch.ncols() != d {
        return Err(GprError::invalid(format!(
            "batch dimension {} does not match model dimension {d}",
            batch.ncols()
        )));
    }
    if batch.nrows() == 0 {
        return Err(GprError::invalid("empty training batch"));
    }
    let mut grads = RqkpGradients {
        enc_weight: Array2::zeros((d, d)),
        enc_bias: Array1::zeros(d),
        centroids: model.codebook.levels().iter().map(|m| Array2::zeros(m.raw_dim())).collect(),
        dec_weight: Array2::zeros((d, d)),
        dec_bias: Array1::zeros(d),
    };
    let mut loss = RqkpLoss::default();
    for x in batch.outer_iter() {
        let z = model.latent(x);
        let (codes, q, residuals) = encode_residuals(z.view(), &model.codebook);
        let x_hat = model.dec_weight.dot(&q) + &model.dec_bias;
        let err = &x_hat - &x;
        loss.reconstruction += err.dot(&err);

        grads.dec_weight += &outer(&err.mapv(|v| 2.0 * v), &q);
        grads.dec_bias.scaled_add(2.0, &err);

        // straight-through: dL/dz picks up the decoder gradient as if q = z
        let mut g_z = model.dec_weight.t().dot(&err) * 2.0;
        for (l, (&code, r)) in codes.iter().zip(&residuals).enumerate() {
            let c = model.codebook.level(l).row(code as usize);
            let diff = r - &c;
            let sq = diff.dot(&diff);
            loss.codebook += sq;
            loss.commitment += model.beta * sq;
            g_z.scaled_add(2.0 * model.beta, &diff);
            let mut g_c = grads.centroids[l].row_mut(code as usize);
            g_c.scaled_add(-2.0, &diff);
        }
        grads.enc_weight += &outer(&g_z, &x.to_owned());
        grads.enc_bias += &g_z;
    }
    let inv = 1.0 / batch.nrows() as f64;
    loss.reconstruction *= inv;
    loss.codebook *= inv;
    loss.commitment *= inv;
    loss.check()?;
    grads.enc_weight *= inv;
    grads.enc_bias *= inv;
    grads.dec_weight *= inv;
    grads.dec_bias *= inv;
    for g in &mut grads.centroids {
        *g *= inv;
    }
    Ok((loss, grads))
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

/// One gradient-descent step. Returns the next model and the loss at the input model.
pub fn rqkp_train_step(model: &RqkpModel, batch: ArrayView2<'_, f64>, lr: f64) -> Result<(RqkpModel, RqkpLoss)> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(GprError::invalid(format!("learning rate {lr} must be non-negative")));
    }
    let (loss, g) = rqkp_gradients(model, batch)?;
    let mut next = model.clone();
    next.enc_weight.scaled_add(-lr, &g.enc_weight);
    next.enc_bias.scaled_add(-lr, &g.enc_bias);
    next.dec_weight.scaled_add(-lr, &g.dec_weight);
    next.dec_bias.scaled_add(-lr, &g.dec_bias);
    for (l, gc) in g.centroids.iter().enumerate() {
        next.codebook.level_mut(l).scaled_add(-lr, gc);
    }
    Ok((next, loss))
}

pub fn rqkp_init(corpus: &EmbeddingCorpus, level_sizes: &[usize], seed: u64) -> Result<RqkpModel> {
    rqkp_init_with(corpus, level_sizes, seed, CodebookInit::KMeans)
}

/// Builds codebooks on the residual stream of the identity-encoded corpus.
/// Level `l` draws from `derive_seed(seed, l)`.
pub fn rqkp_init_with(
    corpus: &EmbeddingCorpus,
    level_sizes: &[usize],
    seed: u64,
    init: CodebookInit,
) -> Result<RqkpModel> {
    if corpus.is_empty() {
        return Err(GprError::invalid("cannot initialize codebooks from an empty corpus"));
    }
    if level_sizes.is_empty() {
        return Err(GprError::invalid("at least one codebook level is required"));
    }
    let n = corpus.len();
    if let Some(&k) = level_sizes.iter().find(|&&k| k == 0 || k > n) {
        return Err(GprError::invalid(format!("codebook size {k} must lie in 1..={n}")));
    }
    let mut residual = corpus.vectors().to_owned();
    let mut levels = Vec::with_capacity(level_sizes.len());
    for (l, &k) in level_sizes.iter().enumerate() {
        let level_seed = rng::derive_seed(seed, l as u64);
        let centroids = match init {
            CodebookInit::KMeans => kmeans_fit(residual.view(), k, level_seed)?.centroids,
            CodebookInit::RandomUniform => uniform_in_box(residual.view(), k, level_seed),
        };
        for mut row in residual.outer_iter_mut() {
            let (code, _) = super::nearest(centroids.view(), row.view());
            row -= &centroids.row(code);
        }
        levels.push(centroids);
    }
    RqkpModel::identity(Codebook::new(levels)?, DEFAULT_BETA)
}

fn uniform_in_box(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::seeded(seed);
    let lo: Vec<f64> = points.axis_iter(Axis(1)).map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
    let hi: Vec<f64> = points.axis_iter(Axis(1)).map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
    Array2::from_shape_fn((k, points.ncols()), |(_, j)| {
        if hi[j] > lo[j] {
            rng.random_range(lo[j]..hi[j])
        } else {
            lo[j]
        }
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RqkpFitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RqkpFitConfig {
    fn default() -> Self {
        RqkpFitConfig {
            epochs: 5,
            batch_size: 256,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Minibatch refinement over shuffled epochs. Returns the model and per-step losses.
pub fn rqkp_fit(model: &RqkpModel, corpus: &EmbeddingCorpus, cfg: &RqkpFitConfig) -> Result<(RqkpModel, Vec<RqkpLoss>)> {
    if cfg.batch_size == 0 {
        return Err(GprError::invalid("batch size must be positive"));
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut current = model.clone();
    let mut trace = Vec::new();
    let data = corpus.vectors();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let (next, loss) = rqkp_train_step(&current, batch.view(), cfg.lr)?;
            current = next;
            trace.push(loss);
        }
    }
    Ok((current, trace))
}
