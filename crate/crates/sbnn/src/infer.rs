//! Bit-packed inference: popcount-only hidden layers with batchnorm+sign
//! fused into per-neuron threshold comparisons.
//!
//! Hidden activations are +/-1 encoded as bits (1 -> +1). For a weight row
//! with one-bits S and a bit-encoded input x, the signed dot product over
//! the connected inputs is 2*popcount(row AND x) - popcount(row), and the
//! input sum q = 2*popcount(x) - |x| is shared by every neuron of the
//! layer. The first layer sees real-valued inputs, so it accumulates the
//! inputs selected by the one-bits instead of popcounting.

use crate::bits::{PackedBitMatrix, WORD_BITS};
use crate::error::{Result, SbnnError};
use crate::model::{Comparator, SbnnModel};
use rayon::prelude::*;

/// A layer input (or hidden activation) in the +/-1 domain, bit-encoded:
/// set bit means +1. Pad bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitActivations {
    words: Vec<u64>,
    len: usize,
}

impl BitActivations {
    pub fn from_signs<I>(signs: I, len: usize) -> Self
    where
        I: IntoIterator<Item = bool>,
    {
        let mut words = vec![0u64; len.div_ceil(WORD_BITS)];
        let mut count = 0usize;
        for (i, positive) in signs.into_iter().enumerate() {
            if positive {
                words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
            }
            count = i + 1;
        }
        assert_eq!(count, len, "sign iterator length mismatch");
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }
}

/// Row-aligned copy of a packed weight matrix: each row starts on a word
/// boundary so the popcount kernel can AND whole words. Pad bits are zero.
#[derive(Debug, Clone)]
pub struct RowAlignedBits {
    words: Vec<u64>,
    words_per_row: usize,
    rows: usize,
    row_len: usize,
    ones_per_row: Vec<u32>,
}

impl RowAlignedBits {
    pub fn from_matrix(m: &PackedBitMatrix) -> Self {
        let rows = m.dims()[0];
        let row_len = m.submatrix_len();
        let words_per_row = row_len.div_ceil(WORD_BITS);
        let mut words = vec![0u64; rows * words_per_row];
        let mut ones_per_row = Vec::with_capacity(rows);
        for r in 0..rows {
            let base = r * row_len;
            let dst = &mut words[r * words_per_row..(r + 1) * words_per_row];
            let mut ones = 0u32;
            for i in 0..row_len {
                if m.bit(base + i) {
                    dst[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
                    ones += 1;
                }
            }
            ones_per_row.push(ones);
        }
        Self {
            words,
            words_per_row,
            rows,
            row_len,
            ones_per_row,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub fn row_ones(&self, r: usize) -> u32 {
        self.ones_per_row[r]
    }
}

/// Signed dot product of a weight row with a bit-encoded input:
/// sum over connected inputs of x_i, as 2*popcount(row AND x) - popcount(row).
pub fn popcount_dot(row_words: &[u64], row_len: usize, x: &BitActivations) -> Result<i64> {
    if row_len != x.len() {
        return Err(SbnnError::Size(format!(
            "row length {row_len} vs input length {}",
            x.len()
        )));
    }
    debug_assert_eq!(row_words.len(), x.words().len());
    let mut and_pc = 0u32;
    let mut row_pc = 0u32;
    for (&w, &xv) in row_words.iter().zip(x.words()) {
        and_pc += (w & xv).count_ones();
        row_pc += w.count_ones();
    }
    Ok(2 * and_pc as i64 - row_pc as i64)
}

/// Input sum shared by every neuron of a layer: q = 2*popcount(x) - |x|.
pub fn compute_q(x: &BitActivations) -> i64 {
    2 * x.popcount() as i64 - x.len() as i64
}

/// Folds evaluation-mode batchnorm and the sign activation into a
/// per-neuron threshold on z' and a comparison direction.
///
/// sign(batchnorm(z)) flips at delta = mu - bn_beta * sqrt(var + eps) / bn_gamma;
/// with z = beta' z' + beta' alpha' q the stored value is delta / beta' and the
/// input-dependent alpha' * q lands on the comparison's right-hand side at run
/// time. The direction is Ge when bn_gamma * beta' > 0, Le otherwise. A zero
/// bn_gamma pins the neuron to sign(bn_beta): Ge against -inf (always +1) or
/// +inf (always -1).
pub fn fuse_batchnorm_threshold(
    bn_gamma: &[f32],
    bn_beta: &[f32],
    bn_mean: &[f32],
    bn_var: &[f32],
    bn_eps: f32,
    beta_prime: f32,
) -> (Vec<f32>, Vec<Comparator>) {
    let n = bn_gamma.len();
    let mut thresholds = Vec::with_capacity(n);
    let mut comparators = Vec::with_capacity(n);
    for i in 0..n {
        if bn_gamma[i] == 0.0 {
            let pinned_positive = bn_beta[i] >= 0.0;
            thresholds.push(if pinned_positive {
                f32::NEG_INFINITY
            } else {
                f32::INFINITY
            });
            comparators.push(Comparator::Ge);
            continue;
        }
        let sigma = (bn_var[i] as f64 + bn_eps as f64).sqrt();
        let delta = bn_mean[i] as f64 - bn_beta[i] as f64 * sigma / bn_gamma[i] as f64;
        thresholds.push((delta / beta_prime as f64) as f32);
        comparators.push(if bn_gamma[i] * beta_prime > 0.0 {
            Comparator::Ge
        } else {
            Comparator::Le
        });
    }
    (thresholds, comparators)
}

/// Weight rows and per-layer constants prepared once per model so repeated
/// forward passes skip re-aligning bits.
pub struct PreparedModel<'a> {
    model: &'a SbnnModel,
    rows: Vec<RowAlignedBits>,
}

impl<'a> PreparedModel<'a> {
    pub fn new(model: &'a SbnnModel) -> Self {
        let rows = model
            .layers()
            .iter()
            .map(|l| RowAlignedBits::from_matrix(l.weights()))
            .collect();
        Self { model, rows }
    }

    pub fn model(&self) -> &SbnnModel {
        self.model
    }

    /// Class scores for one input.
    pub fn forward(&self, input: &[f32]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.scores)
    }

    /// Scores plus the hidden-layer bit activations, for equivalence checks.
    pub fn forward_trace(&self, input: &[f32]) -> Result<Trace> {
        if input.len() != self.model.input_dim() {
            return Err(SbnnError::Size(format!(
                "input length {} vs model input dim {}",
                input.len(),
                self.model.input_dim()
            )));
        }
        let mut hidden = Vec::new();
        let mut scores = Vec::new();
        let mut real_input: Option<&[f32]> = Some(input);
        let mut bit_input: Option<BitActivations> = None;

        for (layer, rows) in self.model.layers().iter().zip(&self.rows) {
            let out_dim = layer.out_dim();
            let alpha = layer.domain().alpha() as f64;
            let beta = layer.domain().beta() as f64;

            // z' per neuron and the shared input sum q
            let (zprime, q): (Vec<f64>, f64) = if let Some(x) = real_input {
                let q: f64 = x.iter().map(|&v| v as f64).sum();
                let z = (0..out_dim)
                    .map(|r| {
                        let mut acc = 0.0f64;
                        for (wi, &w) in rows.row_words(r).iter().enumerate() {
                            let mut bitsw = w;
                            while bitsw != 0 {
                                let b = bitsw.trailing_zeros() as usize;
                                acc += x[wi * WORD_BITS + b] as f64;
                                bitsw &= bitsw - 1;
                            }
                        }
                        acc
                    })
                    .collect();
                (z, q)
            } else {
                let x = bit_input.as_ref().unwrap();
                let q = compute_q(x) as f64;
                let z = (0..out_dim)
                    .map(|r| popcount_dot(rows.row_words(r), rows.row_len(), x).map(|v| v as f64))
                    .collect::<Result<_>>()?;
                (z, q)
            };

            if layer.is_output() {
                let affine = layer.output_affine().unwrap();
                scores = (0..out_dim)
                    .map(|i| {
                        let z = beta * zprime[i] + beta * alpha * q;
                        affine.scale[i] as f64 * z + affine.bias[i] as f64
                    })
                    .collect();
            } else {
                let acts = BitActivations::from_signs(
                    (0..out_dim).map(|i| {
                        let rhs = layer.thresholds()[i] as f64 - alpha * q;
                        layer.comparators()[i].holds(zprime[i], rhs)
                    }),
                    out_dim,
                );
                hidden.push(acts.clone());
                bit_input = Some(acts);
                real_input = None;
            }
        }
        Ok(Trace { hidden, scores })
    }

    /// Accuracy over a batch of inputs; parallel over samples.
    pub fn accuracy(&self, inputs: &[f32], labels: &[u8], dim: usize) -> Result<f64> {
        let n = labels.len();
        if inputs.len() != n * dim {
            return Err(SbnnError::Size("inputs/labels disagree".into()));
        }
        let correct: usize = (0..n)
            .into_par_iter()
            .map(|i| {
                let scores = self.forward(&inputs[i * dim..(i + 1) * dim]).unwrap();
                usize::from(argmax(&scores) == labels[i] as usize)
            })
            .sum();
        Ok(correct as f64 / n as f64)
    }
}

pub struct Trace {
    pub hidden: Vec<BitActivations>,
    pub scores: Vec<f64>,
}

/// One-shot fused forward pass. Callers looping over many inputs should
/// build a [`PreparedModel`] once instead.
pub fn forward_fused(model: &SbnnModel, input: &[f32]) -> Result<Vec<f64>> {
    PreparedModel::new(model).forward(input)
}

pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

/// Float-route check on the exported model: unpacked real weights, a dense
/// dot product, and the same threshold decisions reached through division
/// instead of popcount. Exercises packing, popcount, and threshold algebra
/// against ordinary arithmetic.
pub fn forward_float_check(model: &SbnnModel, input: &[f32]) -> Result<Trace> {
    if input.len() != model.input_dim() {
        return Err(SbnnError::Size("input length mismatch".into()));
    }
    let mut hidden = Vec::new();
    let mut scores = Vec::new();
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();

    for layer in model.layers() {
        let out_dim = layer.out_dim();
        let in_dim = layer.in_dim();
        let alpha = layer.domain().alpha() as f64;
        let beta = layer.domain().beta() as f64;
        let w_of = |bit: bool| layer.domain().map_bit_f64(bit);
        let q: f64 = x.iter().sum();
        let z: Vec<f64> = (0..out_dim)
            .map(|r| {
                let mut acc = 0.0f64;
                for (c, &xv) in x.iter().enumerate().take(in_dim) {
                    acc += w_of(layer.weights().bit(r * in_dim + c)) * xv;
                }
                acc
            })
            .collect();

        if layer.is_output() {
            let affine = layer.output_affine().unwrap();
            scores = (0..out_dim)
                .map(|i| affine.scale[i] as f64 * z[i] + affine.bias[i] as f64)
                .collect();
        } else {
            let acts = BitActivations::from_signs(
                (0..out_dim).map(|i| {
                    let lhs = z[i] / beta - alpha * q;
                    layer.comparators()[i]
                        .holds(lhs, layer.thresholds()[i] as f64 - alpha * q)
                }),
                out_dim,
            );
            x = (0..out_dim)
                .map(|i| if acts.bit(i) { 1.0 } else { -1.0 })
                .collect();
            hidden.push(acts);
        }
    }
    Ok(Trace { hidden, scores })
}

#[derive(Debug, Clone, Copy)]
pub struct LayerOpCounts {
    /// Popcount positions: the number of one-valued weights.
    pub popcount_ops: u64,
    /// One popcount pass over the layer input to form q.
    pub q_ops: u64,
    pub sbnn_ops: u64,
    /// Dense xnor+popcount baseline: two ops per weight.
    pub bnn_ops: u64,
    pub gain: f64,
}

/// Per-layer binary-operation counts against the dense baseline.
pub fn count_binary_ops(model: &SbnnModel) -> Vec<LayerOpCounts> {
    model
        .layers()
        .iter()
        .map(|l| {
            let n = l.weights().len() as u64;
            let popcount_ops = l.weights().popcount_total() as u64;
            let q_ops = l.in_dim() as u64;
            let sbnn_ops = popcount_ops + q_ops;
            let bnn_ops = 2 * n;
            LayerOpCounts {
                popcount_ops,
                q_ops,
                sbnn_ops,
                bnn_ops,
                gain: bnn_ops as f64 / sbnn_ops as f64,
            }
        })
        .collect()
}
