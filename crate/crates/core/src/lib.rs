//! Dense "when to speak" prediction over synchronized video/audio/text.
//!
//! The crate covers the full desk-scale pipeline: sliding-window clip
//! extraction, signal frontends, diarization-based corpus construction,
//! a self-attention multimodal fusion classifier with hand-written
//! reverse-mode gradients, focal-loss training with AdamW, streaming
//! decision inference and a per-class evaluation harness.

pub mod corpus;
pub mod error;
pub mod frontend;
pub mod label;
pub mod modality;
pub mod model;
pub mod timeline;

pub use error::{Error, Result};
pub use frontend::{ClipFeatures, FrontendConfig};
pub use label::{ResponseLabel, NUM_LABELS};
pub use modality::{Modality, ModalityMask};
pub use timeline::{
    clip_end_time, extract_clip, iter_clips, window_count, AudioTrack, Clip, FrameTrack,
    MediaTimeline, TimedToken, TimelineManifestEntry, WindowConfig,
};
