//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the encoder-adaptor-fusion-classifier stack.
///
/// The defaults are a desk-scale model. [`ModelConfig::reference_scale`]
/// records the configuration the architecture is scaled down from; it is far
/// too large to train here and exists for documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared embedding width across adaptors, fusion and head.
    pub d_model: usize,
    pub n_heads: usize,
    pub n_fusion_blocks: usize,
    /// Transformer depth of the audio encoder after the conv stack.
    pub n_audio_blocks: usize,
    /// Conv stack strides; their product fixes the 4x downsampling.
    pub conv_strides: [usize; 4],
    /// Tokens produced per video frame.
    pub video_tokens_per_frame: usize,
    /// Audio feature dimension (mel bands) entering the conv stack.
    pub n_mels: usize,
    pub vocab_size: usize,
    pub max_text_tokens: usize,
    /// Hidden width of the per-modality adaptor MLPs.
    pub adaptor_hidden: usize,
    /// When false the fusion stage applies modality-type embeddings but no
    /// self-attention blocks (the ablation variant).
    pub fusion_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_fusion_blocks: 2,
            n_audio_blocks: 2,
            conv_strides: [1, 2, 1, 2],
            video_tokens_per_frame: 4,
            n_mels: 40,
            vocab_size: crate::corpus::standard_vocab().size(),
            max_text_tokens: 64,
            adaptor_hidden: 64,
            fusion_attention: true,
        }
    }
}

impl ModelConfig {
    /// The full-scale configuration the toy model mirrors: 4096-wide
    /// embeddings, 256 tokens per frame, a 24-block audio encoder.
    pub fn reference_scale() -> Self {
        ModelConfig {
            d_model: 4096,
            n_heads: 32,
            n_fusion_blocks: 2,
            n_audio_blocks: 24,
            conv_strides: [1, 2, 1, 2],
            video_tokens_per_frame: 256,
            n_mels: 40,
            vocab_size: crate::corpus::standard_vocab().size(),
            max_text_tokens: 64,
            adaptor_hidden: 4096,
            fusion_attention: true,
        }
    }

    /// A deliberately small configuration for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_fusion_blocks: 1,
            n_audio_blocks: 1,
            conv_strides: [1, 2, 1, 2],
            video_tokens_per_frame: 4,
            n_mels: 8,
            vocab_size: 64,
            max_text_tokens: 16,
            adaptor_hidden: 16,
            fusion_attention: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        let downsample: usize = self.conv_strides.iter().product();
        if downsample != 4 {
            return Err(Error::InvalidConfig(format!(
                "conv strides {:?} must multiply to 4",
                self.conv_strides
            )));
        }
        if self.video_tokens_per_frame == 0
            || self.n_mels == 0
            || self.vocab_size == 0
            || self.adaptor_hidden == 0
        {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// MLP hidden width inside transformer blocks.
    pub fn mlp_hidden(&self) -> usize {
        4 * self.d_model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        ModelConfig::reference_scale().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.n_heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.conv_strides = [2, 2, 2, 1];
        assert!(cfg.validate().is_err());
    }
}
