//! The exported inference model: per-layer packed 0/1 weights, the
//! zero/one affine domain, and batchnorm+sign fused into per-neuron
//! threshold comparisons.

use crate::bits::PackedBitMatrix;
use crate::domain::{AffineBinaryDomain, DomainFlavor};
use crate::error::{Result, SbnnError};

/// Direction of a fused threshold comparison. Degenerate neurons (zero
/// batchnorm scale) are pinned by an infinite threshold: Ge with -inf is
/// always true, Ge with +inf always false.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Ge,
    Le,
}

impl Comparator {
    pub fn bit(self) -> bool {
        matches!(self, Comparator::Ge)
    }

    pub fn from_bit(b: bool) -> Self {
        if b {
            Comparator::Ge
        } else {
            Comparator::Le
        }
    }

    #[inline]
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Ge => lhs >= rhs,
            Comparator::Le => lhs <= rhs,
        }
    }
}

/// Evaluation-mode batchnorm of the output layer folded to per-class
/// scale and bias; the output layer has no sign activation, so its scores
/// stay real.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputAffine {
    pub scale: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct SbnnLayer {
    weights: PackedBitMatrix,
    domain: AffineBinaryDomain,
    thresholds: Vec<f32>,
    comparators: Vec<Comparator>,
    is_output: bool,
    output_affine: Option<OutputAffine>,
}

impl SbnnLayer {
    pub fn hidden(
        weights: PackedBitMatrix,
        domain: AffineBinaryDomain,
        thresholds: Vec<f32>,
        comparators: Vec<Comparator>,
    ) -> Result<Self> {
        if domain.flavor() != DomainFlavor::ZeroOne {
            return Err(SbnnError::Domain("layer domain must be zero/one".into()));
        }
        let out = weights.dims()[0];
        if thresholds.len() != out || comparators.len() != out {
            return Err(SbnnError::Size(format!(
                "layer with {out} outputs got {} thresholds / {} comparators",
                thresholds.len(),
                comparators.len()
            )));
        }
        Ok(Self {
            weights,
            domain,
            thresholds,
            comparators,
            is_output: false,
            output_affine: None,
        })
    }

    pub fn output(
        weights: PackedBitMatrix,
        domain: AffineBinaryDomain,
        affine: OutputAffine,
    ) -> Result<Self> {
        if domain.flavor() != DomainFlavor::ZeroOne {
            return Err(SbnnError::Domain("layer domain must be zero/one".into()));
        }
        let out = weights.dims()[0];
        if affine.scale.len() != out || affine.bias.len() != out {
            return Err(SbnnError::Size(format!(
                "output layer with {out} classes got {} scales / {} biases",
                affine.scale.len(),
                affine.bias.len()
            )));
        }
        Ok(Self {
            weights,
            domain,
            thresholds: Vec::new(),
            comparators: Vec::new(),
            is_output: true,
            output_affine: Some(affine),
        })
    }

    pub fn weights(&self) -> &PackedBitMatrix {
        &self.weights
    }

    pub fn domain(&self) -> &AffineBinaryDomain {
        &self.domain
    }

    pub fn thresholds(&self) -> &[f32] {
        &self.thresholds
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn is_output(&self) -> bool {
        self.is_output
    }

    pub fn output_affine(&self) -> Option<&OutputAffine> {
        self.output_affine.as_ref()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.len() / self.out_dim().max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMetadata {
    pub target_ec: f32,
    pub gamma: f32,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for ModelMetadata {
    fn default() -> Self {
        Self {
            target_ec: 1.0,
            gamma: 0.0,
            epochs: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SbnnModel {
    layers: Vec<SbnnLayer>,
    input_dim: usize,
    metadata: ModelMetadata,
}

impl SbnnModel {
    pub fn new(layers: Vec<SbnnLayer>, metadata: ModelMetadata) -> Result<Self> {
        if layers.is_empty() {
            return Err(SbnnError::Size("model needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(SbnnError::Size(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
            if w[0].is_output() {
                return Err(SbnnError::Size(format!("layer {i} marked output but is not last")));
            }
        }
        if !layers.last().unwrap().is_output() {
            return Err(SbnnError::Size("last layer must be the output layer".into()));
        }
        let input_dim = layers[0].in_dim();
        Ok(Self {
            layers,
            input_dim,
            metadata,
        })
    }

    pub fn layers(&self) -> &[SbnnLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// Fraction of one-valued weights over all layers.
    pub fn achieved_ec(&self) -> f64 {
        let ones: usize = self.layers.iter().map(|l| l.weights().popcount_total()).sum();
        let total: usize = self.layers.iter().map(|l| l.weights().len()).sum();
        ones as f64 / total.max(1) as f64
    }
}
