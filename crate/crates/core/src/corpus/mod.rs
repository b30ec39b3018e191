//! Corpus construction: diarization-derived labels, reaction subtyping,
//! dataset sampling and synthetic corpus generation.

pub mod build;
pub mod diarization;
pub mod reaction;
pub mod synth;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{load_frame_track, load_wav, save_frame_track, save_wav, AudioBuffer};
use crate::timeline::{MediaTimeline, TimelineManifestEntry, WindowConfig};

pub use build::{
    build_balanced, build_full_videos, build_short_clips, dense_to_records, CorpusManifest,
    DenseLabels, LabeledClipRecord, ShortClipCounts, Split,
};
pub use diarization::{
    derive_action, load_diarization_csv, save_diarization_csv, DiarizationEvent, LabelRuleConfig,
    ListenerAction,
};
pub use reaction::{classify_reaction, ReactionCategorizer, ReactionOutcome, RuleTable};
pub use synth::{
    default_class_mix, standard_vocab, synth_corpus, ClassMix, PlantedAnchor, SynthConfig,
    LISTENER_ID, SPEAKER_ID,
};

/// One conversation plus everything needed to label it.
#[derive(Debug, Clone)]
pub struct CorpusSource {
    pub timeline: MediaTimeline,
    pub diarization: Vec<DiarizationEvent>,
    pub listener_id: String,
    /// Ground truth of synthetically planted anchors; empty for real corpora.
    pub planted: Vec<PlantedAnchor>,
}

/// A set of sources under one window geometry and labeling rule.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub window: WindowConfig,
    pub rules: LabelRuleConfig,
    pub sources: Vec<CorpusSource>,
}

impl Corpus {
    pub fn source(&self, source_id: &str) -> Option<&CorpusSource> {
        self.sources.iter().find(|s| s.timeline.source_id == source_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusMeta {
    window: WindowConfig,
    rules: LabelRuleConfig,
    sources: Vec<SourceMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SourceMeta {
    source_id: String,
    listener_id: String,
    planted: Vec<PlantedAnchor>,
}

/// Writes a corpus directory:
///
/// ```text
/// <dir>/corpus.json          window/rules/source metadata
/// <dir>/timelines.jsonl      one timeline manifest entry per source
/// <dir>/audio/<id>.wav       mono PCM16
/// <dir>/video/<id>.feat      raw f x h x w x 3 feature file
/// <dir>/diarization/<id>.csv speaker_id,onset_s,offset_s,text
/// ```
pub fn save_corpus(corpus: &Corpus, dir: &Path, config: Option<&serde_json::Value>) -> Result<()> {
    std::fs::create_dir_all(dir.join("audio"))?;
    std::fs::create_dir_all(dir.join("video"))?;
    std::fs::create_dir_all(dir.join("diarization"))?;

    let mut entries = Vec::new();
    for source in &corpus.sources {
        let id = &source.timeline.source_id;
        let audio_path = match &source.timeline.audio {
            Some(track) => {
                let rel = format!("audio/{id}.wav");
                save_wav(
                    &dir.join(&rel),
                    &AudioBuffer {
                        sample_rate: track.sample_rate,
                        samples: track.samples.clone(),
                    },
                )?;
                Some(rel)
            }
            None => None,
        };
        let video_feat_path = match &source.timeline.video {
            Some(track) => {
                let rel = format!("video/{id}.feat");
                save_frame_track(&dir.join(&rel), track)?;
                Some(rel)
            }
            None => None,
        };
        save_diarization_csv(&dir.join(format!("diarization/{id}.csv")), &source.diarization)?;
        entries.push(TimelineManifestEntry {
            source_id: id.clone(),
            duration_s: source.timeline.duration_s,
            audio_path,
            video_feat_path,
            transcript: source.timeline.transcript.clone(),
        });
    }

    let mut jsonl = std::io::BufWriter::new(std::fs::File::create(dir.join("timelines.jsonl"))?);
    for entry in &entries {
        serde_json::to_writer(&mut jsonl, entry)?;
        jsonl.write_all(b"\n")?;
    }
    jsonl.flush()?;

    let meta = CorpusMeta {
        window: corpus.window,
        rules: corpus.rules,
        sources: corpus
            .sources
            .iter()
            .map(|s| SourceMeta {
                source_id: s.timeline.source_id.clone(),
                listener_id: s.listener_id.clone(),
                planted: s.planted.clone(),
            })
            .collect(),
        config: config.cloned(),
    };
    std::fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Loads a corpus directory written by [`save_corpus`]. WAV audio is
/// resampled to `target_sample_rate` on the way in.
pub fn load_corpus(dir: &Path, target_sample_rate: u32) -> Result<Corpus> {
    let meta_raw = std::fs::read_to_string(dir.join("corpus.json"))?;
    let meta: CorpusMeta = serde_json::from_str(&meta_raw)?;
    let file = std::fs::File::open(dir.join("timelines.jsonl"))?;
    let mut sources = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TimelineManifestEntry = serde_json::from_str(&line)?;
        let source_meta = meta
            .sources
            .iter()
            .find(|s| s.source_id == entry.source_id)
            .ok_or_else(|| {
                Error::Format(format!("source {} missing from corpus.json", entry.source_id))
            })?;
        let audio = match &entry.audio_path {
            Some(rel) => {
                let buffer = load_wav(&dir.join(rel), target_sample_rate)?;
                Some(crate::timeline::AudioTrack {
                    sample_rate: buffer.sample_rate,
                    samples: buffer.samples,
                })
            }
            None => None,
        };
        let video = match &entry.video_feat_path {
            Some(rel) => Some(load_frame_track(&dir.join(rel), entry.duration_s)?),
            None => None,
        };
        let diarization = load_diarization_csv(&dir.join(format!(
            "diarization/{}.csv",
            entry.source_id
        )))?;
        let timeline = MediaTimeline {
            source_id: entry.source_id,
            duration_s: entry.duration_s,
            video,
            audio,
            transcript: entry.transcript,
        };
        timeline.validate()?;
        sources.push(CorpusSource {
            timeline,
            diarization,
            listener_id: source_meta.listener_id.clone(),
            planted: source_meta.planted.clone(),
        });
    }
    Ok(Corpus {
        window: meta.window,
        rules: meta.rules,
        sources,
    })
}
