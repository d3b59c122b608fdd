//! Dense numeric layer: matrices, reverse-mode graph, BiLSTM encoder, Adam
//! and a finite-difference gradient checker. Everything is `f64`.

mod adam;
mod gradcheck;
mod graph;
mod lstm;
mod matrix;
mod ops;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, RELATIVE_FLOOR};
pub use graph::{sigmoid, Graph, Var};
pub use lstm::{BiLstm, LstmDirection};
pub use matrix::{dot, Matrix};
pub use ops::{cross_entropy, dropout, dropout_mask, softmax, softmax_in_place, Mode, LOG_CLAMP};
pub use params::{glorot, Gradients, Param, ParamId, ParamStore, CHECKPOINT_VERSION};
