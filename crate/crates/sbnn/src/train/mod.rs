//! Training: a binary-network backbone (sign-quantized latent weights,
//! straight-through gradients, batchnorm, Adamax) extended with a learnable
//! per-layer affine weight domain and a global sparsity penalty whose
//! multiplier is re-solved every iteration from a fixed loss fraction.

mod adamax;
mod bn;
mod checkpoint;

pub use adamax::{adamax_step_f32, adamax_step_f64, AdamaxParams, AdamaxState};
pub use bn::{BatchNorm1d, BnCache};
pub use checkpoint::{read_latent_file, write_latent_file, LatentCheckpoint};

use crate::data::Dataset;
use crate::domain::AffineBinaryDomain;
use crate::error::{Result, SbnnError};
use crate::infer::{fuse_batchnorm_threshold, BitActivations};
use crate::model::{ModelMetadata, OutputAffine, SbnnLayer, SbnnModel};
use crate::PackedBitMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Elementwise sign with the tie broken upward: sign(0) = +1.
pub fn sign_ste_forward(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

/// Straight-through window: upstream gradient passes where |x| <= 1.
pub fn sign_ste_mask(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| if v.abs() <= 1.0 { 1.0 } else { 0.0 })
}

/// Fraction of +1 entries over a set of antipodal tensors: (mean + 1) / 2.
pub fn measure_ones_fraction(tensors: &[&Array2<f32>]) -> Result<f64> {
    let total: usize = tensors.iter().map(|t| t.len()).sum();
    if total == 0 {
        return Err(SbnnError::Size("no weights to measure".into()));
    }
    let mut sum = 0.0f64;
    for t in tensors {
        for &v in t.iter() {
            if v != 1.0 && v != -1.0 {
                return Err(SbnnError::Domain(format!("entry {v} is not antipodal")));
            }
            sum += v as f64;
        }
    }
    Ok((sum / total as f64 + 1.0) / 2.0)
}

/// Sparsity penalty: how far the fraction of one-valued weights exceeds the
/// target, clamped at zero (the subgradient at the kink is zero).
pub fn h_penalty(tensors: &[&Array2<f32>], target_ec: f64) -> Result<f64> {
    let fraction = measure_ones_fraction(tensors)?;
    Ok(penalty_from_fraction(fraction, target_ec))
}

pub fn penalty_from_fraction(fraction: f64, target_ec: f64) -> f64 {
    (fraction - target_ec).max(0.0)
}

/// The unique multiplier making the penalty term a fixed fraction `gamma`
/// of the total loss: lambda * h / (task + lambda * h) = gamma, solved as
/// lambda = gamma * task / ((1 - gamma) * h). Zero when the penalty is
/// inactive or gamma is zero.
pub fn lambda_from_gamma(task_loss: f64, h: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(SbnnError::Config(format!(
            "gamma must be in [0, 1), got {gamma}"
        )));
    }
    if task_loss < 0.0 {
        return Err(SbnnError::Config(format!(
            "task loss must be non-negative, got {task_loss}"
        )));
    }
    if h <= 0.0 || gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma * task_loss / ((1.0 - gamma) * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub target_ec: f32,
    pub gamma: f32,
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f32,
    pub lr_decay_factor: f32,
    pub lr_decay_every: u32,
    pub adamax: AdamaxParams,
    pub seed: u64,
}

impl TrainConfig {
    /// The linear-topology schedule: lr 0.01, batch 32, decay x0.1 every
    /// 15 epochs, 40 epochs.
    pub fn mnist_default() -> Self {
        Self {
            target_ec: 1.0,
            gamma: 0.0,
            epochs: 40,
            batch_size: 32,
            lr: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_every: 15,
            adamax: AdamaxParams::default(),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_ec.is_nan() || self.target_ec <= 0.0 || self.target_ec > 1.0 {
            return Err(SbnnError::Config(format!(
                "target EC must be in (0, 1], got {}",
                self.target_ec
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SbnnError::Config(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(SbnnError::Config("batch size must be positive".into()));
        }
        let lr_ok = self.lr.is_finite() && self.lr > 0.0;
        let factor_ok = self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0;
        if !lr_ok || !factor_ok || self.lr_decay_every == 0 {
            return Err(SbnnError::Config("bad learning-rate schedule".into()));
        }
        Ok(())
    }
}

/// One trainable layer: full-precision latent weights, the learnable
/// antipodal domain, and batchnorm state.
#[derive(Debug, Clone)]
pub struct LatentLayer {
    pub latent: Array2<f32>,
    pub alpha: f32,
    pub beta: f32,
    pub bn: BatchNorm1d,
}

impl LatentLayer {
    pub fn out_dim(&self) -> usize {
        self.latent.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.latent.ncols()
    }

    pub fn domain(&self) -> Result<AffineBinaryDomain> {
        AffineBinaryDomain::antipodal(self.alpha, self.beta)
    }

    /// Real-valued weights used in the forward pass:
    /// sign(latent) * beta'' + alpha''.
    pub fn quantize_weights(&self) -> Array2<f32> {
        let pos = self.beta + self.alpha;
        let neg = -self.beta + self.alpha;
        self.latent.mapv(|v| if v >= 0.0 { pos } else { neg })
    }

    fn ones_count(&self) -> usize {
        self.latent.iter().filter(|&&v| v >= 0.0).count()
    }
}

#[derive(Debug, Clone)]
pub struct LatentModel {
    pub layers: Vec<LatentLayer>,
    pub input_dim: usize,
}

impl LatentModel {
    /// Fully-connected model with Glorot-uniform latent weights (which land
    /// inside the clip interval for any layer this container can hold) and
    /// the identity domain alpha''=0, beta''=1, so training starts as a
    /// plain binary network.
    pub fn new_mlp(chain: &[usize], rng: &mut ChaCha20Rng) -> Result<Self> {
        if chain.len() < 2 {
            return Err(SbnnError::Config("topology needs at least two dims".into()));
        }
        let mut layers = Vec::new();
        for w in chain.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f32).sqrt().min(1.0);
            let latent =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a));
            layers.push(LatentLayer {
                latent,
                alpha: 0.0,
                beta: 1.0,
                bn: BatchNorm1d::new(fan_out),
            });
        }
        Ok(Self {
            layers,
            input_dim: chain[0],
        })
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(|l| l.latent.len()).sum()
    }

    /// Fraction of +1 signs over all latent weights.
    pub fn ones_fraction(&self) -> f64 {
        let ones: usize = self.layers.iter().map(|l| l.ones_count()).sum();
        ones as f64 / self.total_weights().max(1) as f64
    }

    /// Evaluation-mode logits for a batch.
    pub fn forward_eval(&self, x: &ArrayView2<f32>) -> Array2<f32> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = layer.quantize_weights();
            let z = a.dot(&w.t());
            let y = layer.bn.forward_eval(&z);
            a = if i == last { y } else { sign_ste_forward(&y) };
        }
        a
    }

    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        let mut correct = 0usize;
        for start in (0..ds.len()).step_by(512) {
            let end = (start + 512).min(ds.len());
            let x = ds.batch_view(start, end);
            let logits = self.forward_eval(&x);
            for (row, i) in logits.rows().into_iter().zip(start..end) {
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                correct += usize::from(pred == ds.labels[i] as usize);
            }
        }
        correct as f64 / ds.len() as f64
    }

    /// Float reference forward for one sample in f64: quantized weights,
    /// evaluation-mode batchnorm, sign activations; returns hidden-layer
    /// sign patterns and the output scores. The independent route the fused
    /// popcount path is checked against.
    pub fn reference_forward(&self, input: &[f32]) -> (Vec<BitActivations>, Vec<f64>) {
        let mut hidden = Vec::new();
        let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
        let last = self.layers.len() - 1;
        let mut scores = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let w_pos = layer.beta as f64 + layer.alpha as f64;
            let w_neg = -layer.beta as f64 + layer.alpha as f64;
            let bn = &layer.bn;
            let y: Vec<f64> = (0..out_dim)
                .map(|r| {
                    let mut acc = 0.0f64;
                    for (c, &xv) in x.iter().enumerate().take(in_dim) {
                        let w = if layer.latent[(r, c)] >= 0.0 { w_pos } else { w_neg };
                        acc += w * xv;
                    }
                    let inv = 1.0 / (bn.running_var[r] as f64 + bn.eps as f64).sqrt();
                    bn.gamma[r] as f64 * (acc - bn.running_mean[r] as f64) * inv
                        + bn.beta[r] as f64
                })
                .collect();
            if li == last {
                scores = y;
            } else {
                let acts = BitActivations::from_signs(y.iter().map(|&v| v >= 0.0), out_dim);
                x = (0..out_dim)
                    .map(|i| if acts.bit(i) { 1.0 } else { -1.0 })
                    .collect();
                hidden.push(acts);
            }
        }
        (hidden, scores)
    }
}

/// Converts the trained model to the packed 0/1 inference form: weights as
/// bits, the domain re-expressed over {0, 1}, batchnorm+sign fused into
/// thresholds, and the output batchnorm folded to per-class scale/bias.
pub fn export_sbnn(model: &LatentModel, metadata: ModelMetadata) -> Result<SbnnModel> {
    let mut layers = Vec::with_capacity(model.layers.len());
    let last = model.layers.len() - 1;
    for (i, layer) in model.layers.iter().enumerate() {
        let domain = layer.domain()?.to_zero_one()?;
        let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
        let bits = PackedBitMatrix::from_bit_iter(
            &[out_dim, in_dim],
            layer.latent.iter().map(|&v| v >= 0.0),
        )?;
        let bn = &layer.bn;
        let sbnn_layer = if i == last {
            let mut scale = Vec::with_capacity(out_dim);
            let mut bias = Vec::with_capacity(out_dim);
            for j in 0..out_dim {
                let inv = 1.0 / (bn.running_var[j] as f64 + bn.eps as f64).sqrt();
                scale.push((bn.gamma[j] as f64 * inv) as f32);
                bias.push(
                    (bn.beta[j] as f64 - bn.gamma[j] as f64 * bn.running_mean[j] as f64 * inv)
                        as f32,
                );
            }
            SbnnLayer::output(bits, domain, OutputAffine { scale, bias })?
        } else {
            let (thresholds, comparators) = fuse_batchnorm_threshold(
                &bn.gamma,
                &bn.beta,
                &bn.running_mean,
                &bn.running_var,
                bn.eps,
                domain.beta(),
            );
            SbnnLayer::hidden(bits, domain, thresholds, comparators)?
        };
        layers.push(sbnn_layer);
    }
    SbnnModel::new(layers, metadata)
}

struct LayerOpt {
    latent: AdamaxState,
    alpha: AdamaxState,
    beta: AdamaxState,
    bn_gamma: AdamaxState,
    bn_beta: AdamaxState,
}

struct LayerCache {
    x: Array2<f32>,
    w: Array2<f32>,
    bn_cache: BnCache,
    mask: Option<Array2<f32>>,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub mean_task_loss: f64,
    pub mean_total_loss: f64,
    pub penalty: f64,
    pub ones_fraction: f64,
    pub last_lambda: f64,
    pub lr: f32,
}

pub struct Trainer {
    pub model: LatentModel,
    cfg: TrainConfig,
    opt: Vec<LayerOpt>,
    shuffle_rng: ChaCha20Rng,
    epoch: u32,
}

impl Trainer {
    pub fn new(model: LatentModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = model
            .layers
            .iter()
            .map(|l| LayerOpt {
                latent: AdamaxState::new(l.latent.len()),
                alpha: AdamaxState::new(1),
                beta: AdamaxState::new(1),
                bn_gamma: AdamaxState::new(l.out_dim()),
                bn_beta: AdamaxState::new(l.out_dim()),
            })
            .collect();
        let shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(0x005b_ff1e));
        Ok(Self {
            model,
            cfg,
            opt,
            shuffle_rng,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> u32 {
        self.epoch
    }

    pub fn set_epochs_done(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    pub fn current_lr(&self) -> f32 {
        let decays = self.epoch / self.cfg.lr_decay_every;
        self.cfg.lr * self.cfg.lr_decay_factor.powi(decays as i32)
    }

    /// One pass over the dataset: forward with quantized weights, task loss
    /// as negative log-likelihood of the log-softmax, penalty multiplier
    /// re-solved every iteration, Adamax update, latent clip.
    pub fn train_epoch(&mut self, ds: &Dataset) -> Result<EpochStats> {
        if ds.is_empty() {
            return Err(SbnnError::Data("empty batch stream".into()));
        }
        if ds.dim != self.model.input_dim {
            return Err(SbnnError::Size(format!(
                "dataset dim {} vs model input {}",
                ds.dim, self.model.input_dim
            )));
        }
        let lr = self.current_lr();
        let n = ds.len();
        let mut order: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut self.shuffle_rng);

        let mut sum_task = 0.0f64;
        let mut sum_total = 0.0f64;
        let mut seen = 0usize;
        let mut last_lambda = 0.0f64;

        let total_weights = self.model.total_weights() as f64;
        // running count of +1 signs, updated after each optimizer step
        let mut ones: usize = self.model.layers.iter().map(|l| l.ones_count()).sum();

        for batch in order.chunks(self.cfg.batch_size) {
            let b = batch.len();
            let mut x0 = Array2::<f32>::zeros((b, ds.dim));
            for (r, &i) in batch.iter().enumerate() {
                x0.row_mut(r).assign(&ndarray::ArrayView1::from(ds.image(i)));
            }

            // forward
            let mut caches: Vec<LayerCache> = Vec::with_capacity(self.model.layers.len());
            let last = self.model.layers.len() - 1;
            let mut a = x0;
            for (i, layer) in self.model.layers.iter_mut().enumerate() {
                let w = layer.quantize_weights();
                let z = a.dot(&w.t());
                let (y, bn_cache) = layer.bn.forward_train(&z);
                let (next, mask) = if i == last {
                    (y, None)
                } else {
                    (sign_ste_forward(&y), Some(sign_ste_mask(&y)))
                };
                caches.push(LayerCache {
                    x: a,
                    w,
                    bn_cache,
                    mask,
                });
                a = next;
            }
            let logits = a;

            // log-softmax + negative log-likelihood, and its gradient
            let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
            let mut task_loss = 0.0f64;
            for (r, &i) in batch.iter().enumerate() {
                let row = logits.row(r);
                let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
                let mut sum_exp = 0.0f64;
                for &v in row.iter() {
                    sum_exp += ((v - max) as f64).exp();
                }
                let log_z = max as f64 + sum_exp.ln();
                let label = ds.labels[i] as usize;
                task_loss += log_z - row[label] as f64;
                for (c, &v) in row.iter().enumerate() {
                    let softmax = (((v - max) as f64).exp() / sum_exp) as f32;
                    dlogits[(r, c)] =
                        (softmax - if c == label { 1.0 } else { 0.0 }) / b as f32;
                }
            }
            task_loss /= b as f64;
            if !task_loss.is_finite() {
                return Err(SbnnError::Numeric(format!(
                    "task loss became {task_loss} at epoch {} after {seen} samples",
                    self.epoch
                )));
            }

            let fraction = ones as f64 / total_weights;
            let h = penalty_from_fraction(fraction, self.cfg.target_ec as f64);
            let lambda = lambda_from_gamma(task_loss, h, self.cfg.gamma as f64)?;
            last_lambda = lambda;
            sum_task += task_loss * b as f64;
            sum_total += (task_loss + lambda * h) * b as f64;
            seen += b;

            // backward
            let penalty_coeff = if lambda > 0.0 {
                (lambda / (2.0 * total_weights)) as f32
            } else {
                0.0
            };
            let mut upstream = dlogits;
            for i in (0..self.model.layers.len()).rev() {
                let cache = &caches[i];
                let dy = match &cache.mask {
                    Some(mask) => &upstream * mask,
                    None => upstream.clone(),
                };
                let layer = &mut self.model.layers[i];
                let (dz, dgamma, dbeta_bn) = layer.bn.backward(&dy, &cache.bn_cache);
                let dw = dz.t().dot(&cache.x);
                if i > 0 {
                    upstream = dz.dot(&cache.w);
                }

                // domain gradients: d w = w'' d beta'' + d alpha''; straight
                // through to the latent weights inside the clip window, plus
                // the penalty's 1/(2N) push on every active latent
                let mut dalpha = 0.0f32;
                let mut dbeta = 0.0f32;
                let mut dlatent = Array2::<f32>::zeros(layer.latent.raw_dim());
                ndarray::Zip::from(&mut dlatent)
                    .and(&dw)
                    .and(&layer.latent)
                    .for_each(|dl, &dwv, &lv| {
                        let sign = if lv >= 0.0 { 1.0f32 } else { -1.0 };
                        dalpha += dwv;
                        dbeta += dwv * sign;
                        let inside = (lv.abs() <= 1.0) as u8 as f32;
                        *dl = (dwv * layer.beta + penalty_coeff) * inside;
                    });

                let opt = &mut self.opt[i];
                opt.latent.step(
                    layer.latent.as_slice_mut().unwrap(),
                    dlatent.as_slice().unwrap(),
                    lr,
                    &self.cfg.adamax,
                );
                let mut av = [layer.alpha];
                opt.alpha.step(&mut av, &[dalpha], lr, &self.cfg.adamax);
                layer.alpha = av[0];
                let mut bv = [layer.beta];
                opt.beta.step(&mut bv, &[dbeta], lr, &self.cfg.adamax);
                layer.beta = bv[0];
                opt.bn_gamma
                    .step(&mut layer.bn.gamma, &dgamma, lr, &self.cfg.adamax);
                opt.bn_beta
                    .step(&mut layer.bn.beta, &dbeta_bn, lr, &self.cfg.adamax);

                layer.latent.mapv_inplace(|v| v.clamp(-1.0, 1.0));
            }

            ones = self.model.layers.iter().map(|l| l.ones_count()).sum();
        }

        self.epoch += 1;
        Ok(EpochStats {
            mean_task_loss: sum_task / seen as f64,
            mean_total_loss: sum_total / seen as f64,
            penalty: penalty_from_fraction(
                ones as f64 / total_weights,
                self.cfg.target_ec as f64,
            ),
            ones_fraction: ones as f64 / total_weights,
            last_lambda,
            lr,
        })
    }
}
