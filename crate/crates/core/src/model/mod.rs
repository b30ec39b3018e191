//! Toy-scale encoder-adaptor-fusion-classifier model.

pub mod config;
pub mod net;
pub mod ops;
pub mod params;

pub use config::ModelConfig;
pub use net::{
    adapt, backward, classify, encode_audio, encode_text, encode_video, forward, forward_cached,
    fuse, ForwardCache, Logits, TokenBatch,
};
pub use params::{init_params, Gradients, ParamStore};
