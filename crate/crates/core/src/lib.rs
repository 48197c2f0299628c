//! Online multi-kernel learning of nodal functions over graphs.
//!
//! Nodes are described by their connectivity patterns, encoded with random
//! Fourier features of shift-invariant kernels, and learned online with
//! per-kernel gradient descent combined through multiplicative weights.

pub mod baselines;
pub mod error;
pub mod features;
pub mod graph;
pub mod kernel;
pub mod learner;
pub mod mkl;
pub mod regret;
pub mod seed;

pub use error::{Error, Result};
pub use features::{RfMap, RfVector};
pub use graph::{Graph, PatternMode, SamplingPlan};
pub use kernel::{GraphKernelSpec, KernelFamily, KernelSpec, LaplacianSpectrum};
pub use learner::{Loss, LossKind, SingleKernelState};
pub use mkl::{EncodedNode, MklModel};
