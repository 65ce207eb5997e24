//! Gradient-guided composition of asymmetric input context windows for
//! frame classifiers running on reverberated speech-like signals.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`acoustics`]: impulse responses (image method, exponential decay),
//!   convolution, noise mixing, Schroeder T60 and correlation analytics.
//! - [`synthdata`]: labeled toy corpora and their Rev / Rev&Noise versions.
//! - [`features`]: framing, FBANK/MFCC extraction, deltas, normalization and
//!   context-window splicing.
//! - [`nn`]: sigmoid MLP with exact backpropagation down to the inputs and a
//!   newbob-style SGD schedule.
//! - [`probe`]: per-offset input-gradient norm profiles.
//! - [`compose`]: greedy window composition, the linear AutoCW sweep and the
//!   quadratic grid-search oracle.
//! - [`task`]: a ready-made train/dev/test setup for one reverberation level,
//!   with disjoint IR sets for training and evaluation.
//!
//! ```text
//! gen_corpus -> contaminate -> extract_features -> probe (1 epoch, CW_max)
//!            -> compose_window per CW_len -> train_sgd -> dev FER -> best
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod compose;
pub mod error;
pub mod features;
pub mod nn;
pub mod probe;
pub mod rng;
pub mod synthdata;
pub mod task;

pub use acoustics::{CorrelationSeries, ImpulseResponse, RoomSpec, Signal};

pub use compose::{SearchConfig, SearchRecord, SearchResult};
pub use error::{Error, Result};
pub use features::{ContextWindowSpec, FeatureConfig, FeatureKind, FrameMatrix, NormStats};
pub use nn::{MlpConfig, MlpModel, TrainConfig, TrainReport};
pub use probe::GradientProfile;
pub use synthdata::{Condition, Corpus, CorpusConfig, NamedIr};
pub use task::{prepare_task, Task, TaskConfig};
