//! Text encoders `x = f(s)`: averaged word vectors, CNN and LSTM, plus
//! softmax pre-training and parameter checkpoints.

pub mod checkpoint;
mod forward;
mod params;
mod pretrain;
mod train;

pub use forward::{encode, encode_all, encode_average, forward, head_logits, input};
pub use params::{
    Bound, EncoderConfig, EncoderKind, EncoderParams, EMBEDDINGS, FORGET_BIAS, HEAD_BIAS,
    HEAD_WEIGHT, INIT_RANGE,
};
pub use pretrain::{pretrain, PretrainOptions, PretrainOutcome};
pub use train::{batch_gradients, Optimizer};
