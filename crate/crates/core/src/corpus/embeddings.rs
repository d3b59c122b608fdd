use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Vocab;
use crate::error::{Error, Result};

const OOV_RANGE: f64 = 0.25;

/// One vector per vocabulary entry, rows aligned with `Vocab` ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    /// How many vocabulary words were found in the vector file.
    pub found: usize,
}

/// Reads a `word v1 ... vd` text file, keeping only the words `keep` accepts.
/// Returns the inferred dimension (None for an empty file).
pub fn read_vectors(
    path: impl AsRef<Path>,
    mut keep: impl FnMut(&str) -> bool,
) -> Result<(Option<usize>, HashMap<String, Vec<f64>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut vectors = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let values: Vec<&str> = parts.collect();
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(format!(
                    "vector has {} dimensions, expected {d}",
                    values.len()
                )))
            }
            _ => {}
        }
        if !keep(word) {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(format!("bad value `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        vectors.insert(word.to_string(), vector);
    }
    Ok((dim, vectors))
}

/// Per-word seeded vector, so a word gets the same OOV vector regardless of
/// vocabulary order.
fn oov_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.gen_range(-OOV_RANGE..=OOV_RANGE)).collect()
}

impl EmbeddingTable {
    /// Every word gets a seeded uniform vector.
    pub fn random(vocab: &Vocab, dim: usize, seed: u64) -> Self {
        Self::from_map(vocab, dim, &HashMap::new(), seed)
    }

    pub fn from_map(
        vocab: &Vocab,
        dim: usize,
        known: &HashMap<String, Vec<f64>>,
        seed: u64,
    ) -> Self {
        let mut found = 0;
        let vectors = vocab
            .words()
            .iter()
            .map(|w| match known.get(w) {
                Some(v) => {
                    found += 1;
                    v.clone()
                }
                None => oov_vector(w, dim, seed),
            })
            .collect();
        Self { dim, vectors, found }
    }
}

/// Loads vectors for `vocab`; words missing from the file get seeded
/// uniform vectors in [-0.25, 0.25]. An empty file yields an all-OOV table of
/// `default_dim`.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocab,
    default_dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let (dim, known) = read_vectors(path, |w| vocab.contains(w))?;
    let dim = match dim {
        Some(d) => d,
        None => {
            log::warn!(
                "embedding file {} is empty; all {} words are out of vocabulary",
                path.display(),
                vocab.len()
            );
            default_dim
        }
    };
    Ok(EmbeddingTable::from_map(vocab, dim, &known, seed))
}
