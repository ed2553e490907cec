//! Design tools: closed-form size bounds for the index and run-length
//! encoders, full-precision model size accounting, measured compression
//! rates, and bound-vs-measured validation reports.
//!
//! The bounds let a topology's compression rate be predicted from the
//! target connection fraction before any training happens.

use crate::bits::PackedBitMatrix;
use crate::codecs::{self, Codec, EncodedLayer};
use crate::error::{Result, SbnnError};
use crate::model::SbnnModel;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct LayerTopo {
    pub dims: Vec<usize>,
    pub compressible: bool,
    /// Full-precision scalars kept per layer (one per batchnorm neuron).
    pub bn_scales: usize,
}

#[derive(Debug, Clone)]
pub struct TopologySpec {
    pub layers: Vec<LayerTopo>,
}

impl TopologySpec {
    /// Fully-connected topology from a dimension chain; every linear layer
    /// is compressible and carries one batchnorm scalar per output neuron.
    pub fn mlp(chain: &[usize]) -> Result<Self> {
        if chain.len() < 2 {
            return Err(SbnnError::Config("topology needs at least two dims".into()));
        }
        let layers = chain
            .windows(2)
            .map(|w| LayerTopo {
                dims: vec![w[1], w[0]],
                compressible: true,
                bn_scales: w[1],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn weight_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.dims.iter().product::<usize>() as u64)
            .sum()
    }

    fn bn_scalar_bits(&self) -> u64 {
        32 * self
            .layers
            .iter()
            .map(|l| l.bn_scales as u64)
            .sum::<u64>()
    }

    /// Size in bits of everything that stays full precision in the
    /// compressed model: batchnorm scalars plus any uncompressed layers.
    pub fn uncompressed_fp_bits(&self) -> u64 {
        self.bn_scalar_bits()
            + self
                .layers
                .iter()
                .filter(|l| !l.compressible)
                .map(|l| 32 * l.dims.iter().product::<usize>() as u64)
                .sum::<u64>()
    }
}

/// Full-precision model size: 32 bits per weight plus 32 bits per
/// batchnorm scalar.
pub fn fp_model_size_bits(t: &TopologySpec) -> u64 {
    32 * t.weight_count() + t.bn_scalar_bits()
}

fn ec_ok(ec: f64) -> Result<()> {
    if ec.is_nan() || ec <= 0.0 || ec > 1.0 {
        return Err(SbnnError::Config(format!("EC must be in (0, 1], got {ec}")));
    }
    Ok(())
}

/// Expected index-encoded size in bits at connection fraction `ec`, summed
/// over compressible layers: per layer
/// n_bits * ec * N + (n_bits + 1) * N / n_last + 16 * D + 64 with
/// n_bits = ceil(log2(n_last)).
pub fn bound_ie_bits_exact(t: &TopologySpec, ec: f64) -> Result<f64> {
    ec_ok(ec)?;
    let mut total = 0.0f64;
    for l in t.layers.iter().filter(|l| l.compressible) {
        let n: u64 = l.dims.iter().product::<usize>() as u64;
        let n_last = *l.dims.last().unwrap() as u64;
        if n_last == 0 || n == 0 {
            return Err(SbnnError::Config(format!("degenerate layer dims {:?}", l.dims)));
        }
        let n_bits = codecs::ceil_log2(n_last).max(1) as f64;
        let rows = (n / n_last) as f64;
        total += n_bits * ec * n as f64
            + (n_bits + 1.0) * rows
            + 16.0 * l.dims.len() as f64
            + 64.0;
    }
    Ok(total)
}

pub fn bound_ie_bits(t: &TopologySpec, ec: f64) -> Result<u64> {
    Ok(bound_ie_bits_exact(t, ec)?.round() as u64)
}

fn rle_word_bits(n: u64, r: u64, denom: u64) -> u32 {
    if n == r || denom == 0 {
        return 0;
    }
    let ratio = (n - r).div_ceil(denom);
    codecs::ceil_log2(ratio)
}

fn bound_rle_bits_with(t: &TopologySpec, ec: f64, proof_denominator: bool) -> Result<u64> {
    ec_ok(ec)?;
    let mut total = 0u64;
    for l in t.layers.iter().filter(|l| l.compressible) {
        let n: u64 = l.dims.iter().product::<usize>() as u64;
        let r = (ec * n as f64).floor() as u64;
        if r < 2 {
            return Err(SbnnError::Config(format!(
                "RLE bound needs floor(EC*N) >= 2 per layer; layer {:?} at EC={ec} gives {r}",
                l.dims
            )));
        }
        let denom = if proof_denominator { r } else { r - 1 };
        let n_bits = rle_word_bits(n, r, denom) as u64;
        total += n_bits * r
            + 32 * l.dims[0] as u64
            + 16 * (l.dims.len() as u64 + 1)
            + 64;
    }
    Ok(total)
}

/// Minimum run-length-encoded size in bits at connection fraction `ec`:
/// per layer n_bits * floor(ec*N) + 32 * n1 + 16 * (D + 1) + 64 with
/// n_bits = ceil(log2(ceil((N - R) / (R - 1)))), R = floor(ec*N).
pub fn bound_rle_bits(t: &TopologySpec, ec: f64) -> Result<u64> {
    bound_rle_bits_with(t, ec, false)
}

/// Variant with the pigeonhole denominator R instead of R - 1; reported
/// alongside the primary bound for comparison.
pub fn bound_rle_bits_proof(t: &TopologySpec, ec: f64) -> Result<u64> {
    bound_rle_bits_with(t, ec, true)
}

/// Compression rate for a compressed-weight size, both sides carrying the
/// uncompressed full-precision scalars.
pub fn cr_from_size(t: &TopologySpec, compressed_weight_bits: u64) -> f64 {
    let fp = fp_model_size_bits(t) as f64;
    let ubar = t.uncompressed_fp_bits() as f64;
    fp / (compressed_weight_bits as f64 + ubar)
}

/// Measured compression rate of a set of encoded layers covering all
/// compressible layers of the topology.
pub fn measured_cr(t: &TopologySpec, encoded: &[EncodedLayer]) -> Result<f64> {
    let n_compressible = t.layers.iter().filter(|l| l.compressible).count();
    if encoded.len() != n_compressible {
        return Err(SbnnError::Size(format!(
            "{} encoded layers for {} compressible layers",
            encoded.len(),
            n_compressible
        )));
    }
    let size: u64 = encoded.iter().map(codecs::encoded_size_bits).sum();
    Ok(cr_from_size(t, size))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecMeasurement {
    pub size_bits: u64,
    pub cr: f64,
}

/// Bound-vs-measured report for one model (or one set of weight matrices)
/// at its achieved connection fraction.
#[derive(Debug, Clone)]
pub struct CrReport {
    pub ec: f64,
    pub per_layer_ec: Vec<f64>,
    pub bound_ie_bits: u64,
    pub bound_ie_cr: f64,
    pub bound_rle_bits: Option<u64>,
    pub bound_rle_proof_bits: Option<u64>,
    pub bound_rle_cr: Option<f64>,
    pub measured: BTreeMap<Codec, CodecMeasurement>,
    /// measured CR / bound CR, keyed IE -> IE bound, RLE -> RLE bound,
    /// HE -> RLE bound (the RLE bound doubles as the HE estimate).
    pub ratios: BTreeMap<Codec, f64>,
}

impl CrReport {
    pub fn from_matrices(t: &TopologySpec, weights: &[PackedBitMatrix]) -> Result<Self> {
        let n_compressible = t.layers.iter().filter(|l| l.compressible).count();
        if weights.len() != n_compressible {
            return Err(SbnnError::Size(format!(
                "{} weight matrices for {} compressible layers",
                weights.len(),
                n_compressible
            )));
        }
        let total: u64 = weights.iter().map(|m| m.len() as u64).sum();
        let ones: u64 = weights.iter().map(|m| m.popcount_total() as u64).sum();
        if total == 0 {
            return Err(SbnnError::Size("no weights to report on".into()));
        }
        let ec = ones as f64 / total as f64;
        let per_layer_ec = weights
            .iter()
            .map(|m| m.popcount_total() as f64 / m.len().max(1) as f64)
            .collect();

        let bound_ie = bound_ie_bits(t, ec)?;
        let bound_rle = bound_rle_bits(t, ec).ok();
        let bound_rle_proof = bound_rle_bits_proof(t, ec).ok();

        let mut measured = BTreeMap::new();
        for codec in codecs::ALL_CODECS {
            let encoded: Vec<EncodedLayer> = weights
                .iter()
                .map(|m| codecs::encode(m, codec))
                .collect::<Result<_>>()?;
            let size_bits: u64 = encoded.iter().map(codecs::encoded_size_bits).sum();
            let cr = cr_from_size(t, size_bits);
            measured.insert(codec, CodecMeasurement { size_bits, cr });
        }

        let bound_ie_cr = cr_from_size(t, bound_ie);
        let bound_rle_cr = bound_rle.map(|b| cr_from_size(t, b));
        let mut ratios = BTreeMap::new();
        ratios.insert(Codec::Ie, measured[&Codec::Ie].cr / bound_ie_cr);
        if let Some(rle_cr) = bound_rle_cr {
            ratios.insert(Codec::Rle, measured[&Codec::Rle].cr / rle_cr);
            ratios.insert(Codec::He, measured[&Codec::He].cr / rle_cr);
        }

        Ok(CrReport {
            ec,
            per_layer_ec,
            bound_ie_bits: bound_ie,
            bound_ie_cr,
            bound_rle_bits: bound_rle,
            bound_rle_proof_bits: bound_rle_proof,
            bound_rle_cr,
            measured,
            ratios,
        })
    }

    /// Machine-readable key=value lines, one metric per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("ec={}\n", self.ec));
        for (i, f) in self.per_layer_ec.iter().enumerate() {
            s.push_str(&format!("layer{i}_ec={f}\n"));
        }
        s.push_str(&format!("bound_ie_bits={}\n", self.bound_ie_bits));
        s.push_str(&format!("bound_ie_cr={}\n", self.bound_ie_cr));
        if let Some(b) = self.bound_rle_bits {
            s.push_str(&format!("bound_rle_bits={b}\n"));
        }
        if let Some(b) = self.bound_rle_proof_bits {
            s.push_str(&format!("bound_rle_proof_bits={b}\n"));
        }
        if let Some(c) = self.bound_rle_cr {
            s.push_str(&format!("bound_rle_cr={c}\n"));
        }
        for (codec, m) in &self.measured {
            s.push_str(&format!("{}_size_bits={}\n", codec.name(), m.size_bits));
            s.push_str(&format!("{}_cr={}\n", codec.name(), m.cr));
        }
        for (codec, r) in &self.ratios {
            s.push_str(&format!("{}_bound_ratio={r}\n", codec.name()));
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("achieved EC: {:.4}\n", self.ec));
        s.push_str("codec    size [bits]      CR      CR/bound\n");
        for (codec, m) in &self.measured {
            let ratio = self
                .ratios
                .get(codec)
                .map_or("-".to_string(), |r| format!("{r:.3}"));
            s.push_str(&format!(
                "{:<8} {:>12} {:>8.1} {:>9}\n",
                codec.name(),
                m.size_bits,
                m.cr,
                ratio
            ));
        }
        s.push_str(&format!(
            "bounds: IE {} bits (CR {:.1}), RLE {} (CR {})\n",
            self.bound_ie_bits,
            self.bound_ie_cr,
            self.bound_rle_bits
                .map_or("-".into(), |b| b.to_string()),
            self.bound_rle_cr
                .map_or("-".into(), |c| format!("{c:.1}")),
        ));
        s
    }
}

/// Validation entry point used after training: topology comes from the
/// exported model itself.
pub fn validate_bounds(t: &TopologySpec, model: &SbnnModel) -> Result<CrReport> {
    let weights: Vec<PackedBitMatrix> = model
        .layers()
        .iter()
        .map(|l| l.weights().clone())
        .collect();
    CrReport::from_matrices(t, &weights)
}
