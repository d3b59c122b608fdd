use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

/// Named trainable tensors of one model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.params.push(Param {
            name,
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            params: self
                .params
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: [p.value.rows(), p.value.cols()],
                    values: p.value.data().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&ckpt)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Overwrites parameter values from a checkpoint. Every parameter must be
    /// present with a matching shape.
    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        for param in &mut self.params {
            let entry = ckpt
                .params
                .iter()
                .find(|e| e.name == param.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", param.name)))?;
            let [rows, cols] = entry.shape;
            if (rows, cols) != param.value.shape() || entry.values.len() != rows * cols {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {rows}x{cols}, model expects {}x{}",
                    param.name,
                    param.value.rows(),
                    param.value.cols()
                )));
            }
            param.value = Matrix::from_vec(rows, cols, entry.values.clone());
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

/// Gradient buffers shaped like the parameters of a store.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Self {
            grads: store
                .params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_in_place(s);
        }
    }

    pub fn global_norm(&self, store: &ParamStore) -> f64 {
        self.grads
            .iter()
            .zip(&store.params)
            .filter(|(_, p)| p.trainable)
            .map(|(g, _)| g.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm over trainable parameters is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, store: &ParamStore, max_norm: f64) -> f64 {
        let norm = self.global_norm(store);
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

/// Glorot-uniform matrix.
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let a = store.add("a", glorot(3, 4, &mut rng));
        store.add("b", Matrix::zeros(1, 4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        store.save_checkpoint(&path).unwrap();

        let mut other = store.clone();
        other.value_mut(a).fill(9.0);
        other.load_checkpoint(&path).unwrap();
        assert_eq!(other.value(a), store.value(a));

        let mut mismatched = ParamStore::new();
        mismatched.add("a", Matrix::zeros(2, 2));
        assert!(mismatched.load_checkpoint(&path).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::zeros(1, 2));
        let mut grads = Gradients::for_store(&store);
        grads.get_mut(a).data_mut().copy_from_slice(&[30.0, 40.0]);
        let before = grads.clip_global_norm(&store, 5.0);
        assert_eq!(before, 50.0);
        assert!((grads.global_norm(&store) - 5.0).abs() < 1e-12);
    }
}
