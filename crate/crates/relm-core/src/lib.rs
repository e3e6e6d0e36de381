//! Non-iterative training engine for six recurrent architectures.
//!
//! The pipeline: draw fixed random weights, build the hidden-state tensor
//! `H` (`n x M x Q`) with one of three execution backends (sequential,
//! flat-parallel, tiled-parallel), solve for the readout by QR least
//! squares, and score. A small gradient-descent trainer with full
//! backpropagation through time provides the iterative baseline, and a
//! counting interpreter validates the closed-form memory/FLOP cost model
//! against the executed kernels.

pub mod arch;
pub mod bptt;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod hgen;
pub mod model_io;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use arch::{ArchKind, ArchitectureSpec, WeightSet};
pub use dataset::{load_csv, normalize_split, window, RawSeries, TimeSeriesDataset};
pub use error::{Error, Result};
pub use hgen::{Backend, ExecConfig, HiddenTensor};
pub use tensor::{Activation, DenseTensor, SeededRng};
pub use trainer::{evaluate, fit, predict, EvalReport, TrainedModel};
