//! Character-level CNN with squeeze-and-excitation blocks.
//!
//! The network is generic over the float type so gradients can be checked
//! in double precision against the same code that trains in `f32`.

mod artifact;
mod config;
mod gradcheck;
mod network;
mod params;
mod train;
mod vocab;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub use artifact::{is_cnn_file, CnnArtifact};
pub use config::{CnnConfig, ConvBlockConfig};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use network::{
    argmax, backward, features_gradient, forward, forward_trace, loss_and_gradient, se_block, softmax,
    BlockTrace, DenseTrace, ForwardTrace, Mode,
};
pub use params::{CnnParameters, ConvLayer, Dense, ParamGroup, SeLayer};
pub use train::{train_cnn, EpochRecord, TrainHistory, TrainOptions};
pub use vocab::{build_vocab, encode, CharVocab, PAD, UNK};

pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}
