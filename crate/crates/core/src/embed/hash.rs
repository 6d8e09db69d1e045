use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::model::cue_key;
use crate::remote::TransportError;

use super::EmbeddingBackend;

pub const HASH_EMBEDDER_MODEL_ID: &str = "emocue-hash-v1";

/// Offline embedder: the SHA-256 of the normalized text seeds a ChaCha8
/// stream of Gaussian coordinates.
///
/// Equal normalized texts give equal vectors. Distinct texts give independent
/// random directions whose cosine concentrates around 0 with standard
/// deviation `1/sqrt(dim)`; at `dim >= 256` a cosine above 0.3 is a
/// better-than-4.8-sigma event per pair.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let seed: [u8; 32] = Sha256::digest(cue_key(text).as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
