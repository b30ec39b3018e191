//! Modality tags and enable masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Video, Modality::Audio, Modality::Text];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }

    /// Row index into the modality-type embedding table.
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which modalities a forward pass may look at. Used by ablations to drop
/// whole streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub video: bool,
    pub audio: bool,
    pub text: bool,
}

impl Default for ModalityMask {
    fn default() -> Self {
        ModalityMask::all()
    }
}

impl ModalityMask {
    pub fn all() -> Self {
        ModalityMask { video: true, audio: true, text: true }
    }

    pub fn text_only() -> Self {
        ModalityMask { video: false, audio: false, text: true }
    }

    pub fn enabled(&self, m: Modality) -> bool {
        match m {
            Modality::Video => self.video,
            Modality::Audio => self.audio,
            Modality::Text => self.text,
        }
    }

    pub fn any(&self) -> bool {
        self.video || self.audio || self.text
    }

    /// Parses a comma-separated list like `"video,audio,text"` or `"text"`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut mask = ModalityMask { video: false, audio: false, text: false };
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "video" | "v" => mask.video = true,
                "audio" | "a" => mask.audio = true,
                "text" | "t" => mask.text = true,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown modality {other:?} (expected video, audio or text)"
                    )))
                }
            }
        }
        if !mask.any() {
            return Err(Error::InvalidConfig("modality list is empty".into()));
        }
        Ok(mask)
    }

    /// Short display form like `V+A+T`.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if self.video {
            parts.push("V");
        }
        if self.audio {
            parts.push("A");
        }
        if self.text {
            parts.push("T");
        }
        parts.join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_tag() {
        assert_eq!(ModalityMask::parse("video,audio,text").unwrap(), ModalityMask::all());
        assert_eq!(ModalityMask::parse("text").unwrap(), ModalityMask::text_only());
        assert_eq!(ModalityMask::parse("audio, text").unwrap().tag(), "A+T");
        assert!(ModalityMask::parse("smell").is_err());
        assert!(ModalityMask::parse("").is_err());
    }
}
