//! Converts raw modality data into the numeric inputs the encoders consume:
//! log-mel spectrograms, sampled frame tensors and token id sequences.

pub mod audio;
pub mod text;
pub mod video;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::modality::ModalityMask;
use crate::timeline::Clip;

pub use audio::{
    compute_log_mel, load_wav, resample_linear, save_wav, AudioBuffer, LogMelSpectrogram, MelConfig,
};
pub use text::{detokenize, split_tokens, tokenize, TokenSequence, Vocab, OOV_BUCKETS};
pub use video::{
    load_feature_file, load_frame_track, sample_frames, save_feature_file, save_frame_track,
    FrameSequence,
};

/// Frontend parameters shared by corpus building, training and inference.
/// Both sides of a checkpoint must agree on these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub mel: MelConfig,
    pub video_fps: f64,
    pub max_text_tokens: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate: 16000,
            mel: MelConfig::default(),
            video_fps: 2.0,
            max_text_tokens: 64,
        }
    }
}

/// Numeric views of one clip. `None` marks a missing or disabled modality;
/// the fusion stage masks those out rather than failing.
#[derive(Debug, Clone)]
pub struct ClipFeatures {
    pub video: Option<FrameSequence>,
    pub audio: Option<LogMelSpectrogram>,
    pub text: Option<TokenSequence>,
}

impl ClipFeatures {
    pub fn any_present(&self) -> bool {
        self.video.is_some() || self.audio.is_some() || self.text.is_some()
    }
}

/// Runs the per-modality frontends over one clip. Modalities that are absent
/// from the timeline, disabled by the mask, or too short to frame come back
/// as `None`.
pub fn clip_features(
    clip: &Clip,
    vocab: &Vocab,
    cfg: &FrontendConfig,
    mask: &ModalityMask,
) -> Result<ClipFeatures> {
    let video = if mask.video {
        match sample_frames(clip.timeline(), clip, cfg.video_fps) {
            Ok(seq) => Some(seq),
            Err(crate::Error::MissingModality(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let audio = if mask.audio {
        match clip.audio() {
            Some((sample_rate, samples)) => {
                let buffer = AudioBuffer { sample_rate, samples: samples.to_vec() };
                match compute_log_mel(&buffer, &cfg.mel) {
                    Ok(mel) => Some(mel),
                    Err(crate::Error::EmptySignal) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        }
    } else {
        None
    };
    let text = if mask.text {
        clip.tokens().map(|tokens| {
            let joined = tokens
                .iter()
                .map(|t| t.token.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            tokenize(&joined, vocab, cfg.max_text_tokens)
        })
    } else {
        None
    };
    Ok(ClipFeatures { video, audio, text })
}
