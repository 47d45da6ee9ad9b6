//! Spatio-temporal graph convolution (STGC) for skeleton action recognition.
//!
//! A layer runs the recursion
//!
//! ```text
//! Y_{t+1} = Σ_{k<K1} ψ_k(L) Y_t W_k + X_t V_0
//! O_{t+1} = Y_{t+1} + Σ_{1≤k<K2} ψ_k(L) X_t V_k
//! ```
//!
//! over a fixed skeleton graph, where `ψ_k(L)` is the `k`-th power of the
//! scaled normalized Laplacian. Keeping `Σ_k ‖W_k‖_∞ < 1` with non-negative
//! diagonals makes the recursion converge for constant input; [`stability`]
//! computes the limit in the graph frequency domain.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); data
//! handling, training and checkpoints work in `f64`.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod graph;
pub mod layer;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod spectral;
pub mod stability;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result, StabilityViolation};
pub use graph::StaticGraph;
pub use layer::{FilterBank, Mode, SignalSequence};
pub use matrix::Matrix;
pub use model::{DeepStgc, HeadInput, ModelConfig};
pub use scalar::Scalar;
pub use trainer::TrainConfig;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Graph64 = StaticGraph<f64>;
pub type Graph32 = StaticGraph<f32>;
pub type FilterBank64 = FilterBank<f64>;
pub type FilterBank32 = FilterBank<f32>;
pub type Signal64 = SignalSequence<f64>;
pub type Signal32 = SignalSequence<f32>;
pub type Network64 = DeepStgc<f64>;
pub type Network32 = DeepStgc<f32>;
