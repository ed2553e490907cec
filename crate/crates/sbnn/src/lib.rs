//! Sparse binary neural networks: training with a sparsity-controlled
//! penalty, export to a 0/1 weight domain, a popcount-only fused-threshold
//! inference engine, bit-exact compression codecs, and closed-form
//! compression-rate bounds for network design.

pub mod bitio;
pub mod bits;
pub mod codecs;
pub mod container;
pub mod data;
pub mod design;
pub mod domain;
pub mod error;
pub mod infer;
pub mod model;
pub mod train;

pub use bits::PackedBitMatrix;
pub use domain::{AffineBinaryDomain, DomainFlavor};
pub use error::{Result, SbnnError};
pub use model::{Comparator, ModelMetadata, OutputAffine, SbnnLayer, SbnnModel};
