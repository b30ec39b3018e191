//! Synthetic dyadic corpora with planted, learnable class signatures.
//!
//! Each source is a two-party conversation: `spk0` holds the floor, `spk1`
//! is the listener whose actions get labeled. Listener actions are planted
//! at "anchor" windows spaced far enough apart that their cues never bleed
//! into each other's clips. Every non-silence anchor plants a distinct
//! signature in each modality during the two seconds before its decision
//! point:
//!
//! - audio: a class-specific tone burst
//! - video: a class-specific lit patch/channel in the frame grid
//! - text: class-typical trigger words in the speaker transcript
//!
//! The `noise` knob controls both additive noise and independent per-modality
//! signature dropout, so at zero noise every label is recoverable from any
//! single modality, while at high noise only the fused modalities still
//! carry the signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::diarization::{DiarizationEvent, LabelRuleConfig};
use crate::corpus::{Corpus, CorpusSource};
use crate::error::{Error, Result};
use crate::frontend::Vocab;
use crate::label::ResponseLabel;
use crate::timeline::{
    clip_end_time, window_count, AudioTrack, FrameTrack, MediaTimeline, TimedToken, WindowConfig,
};

/// Speaker who holds the floor; their channel is the model input.
pub const SPEAKER_ID: &str = "spk0";
/// Listener whose actions define the labels.
pub const LISTENER_ID: &str = "spk1";

/// Tone burst frequency per class index (silence plants nothing).
const TONE_HZ: [f64; 8] = [350.0, 700.0, 1050.0, 1400.0, 1750.0, 2100.0, 2450.0, 2800.0];

/// Trigger words planted into the speaker transcript, per class index.
const TRIGGERS: [&[&str]; 8] = [
    &["agree", "correct", "valid"],        // affirmation
    &["gift", "favor", "generous"],        // gratitude
    &["leaving", "departure", "going"],    // farewell
    &["arrived", "newcomer", "joining"],   // greeting
    &["puzzle", "unclear", "mystery"],     // question
    &["shocking", "sudden", "unexpected"], // surprise
    &["tricky", "subtle", "intricate"],    // pondering
    &["opinion", "verdict", "stance"],     // full_response
];

/// What the listener actually says for each reaction subtype. These must
/// round-trip through the rule-table categorizer back to their own label.
const REACTION_PHRASES: [&[&str]; 7] = [
    &["yeah exactly", "right"],            // affirmation
    &["thanks so much", "thank you"],      // gratitude
    &["goodbye now", "see you"],           // farewell
    &["hello there", "hey"],               // greeting
    &["really?", "wait, what?"],           // question
    &["wow", "no way"],                    // surprise
    &["hmm", "let me think"],              // pondering
];

const FULL_RESPONSE_PHRASES: [&str; 2] = [
    "well i actually have a lot to say about this whole topic",
    "okay so from my side the story went rather differently overall",
];

const FILLERS: [&str; 14] = [
    "so", "well", "and", "then", "you", "know", "the", "point", "is", "we", "were", "talking",
    "about", "it",
];

/// Mixture weights over the nine classes for anchor planting.
pub type ClassMix = [f64; 9];

/// Evenly spread anchors: 60% reactions split across the seven subtypes,
/// 20% full responses, 20% silences.
pub fn default_class_mix() -> ClassMix {
    let mut mix = [0.6 / 7.0; 9];
    mix[ResponseLabel::FullResponse.index()] = 0.2;
    mix[ResponseLabel::Silence.index()] = 0.2;
    mix
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_sources: usize,
    pub duration_range: (f64, f64),
    pub class_mix: ClassMix,
    pub noise: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub video_fps: f64,
    pub frame_height: usize,
    pub frame_width: usize,
    /// Seconds between consecutive planted anchors.
    pub anchor_spacing_s: f64,
    pub window: WindowConfig,
    pub rules: LabelRuleConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sources: 8,
            duration_range: (60.0, 90.0),
            class_mix: default_class_mix(),
            noise: 0.0,
            seed: 0,
            sample_rate: 16000,
            video_fps: 2.0,
            frame_height: 8,
            frame_width: 8,
            anchor_spacing_s: 12.0,
            window: WindowConfig::default(),
            rules: LabelRuleConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.rules.validate()?;
        if self.duration_range.0 > self.duration_range.1 || self.duration_range.0 <= 0.0 {
            return Err(Error::InvalidConfig("bad duration range".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidConfig("noise must be in [0, 1]".into()));
        }
        if self.class_mix.iter().any(|w| *w < 0.0) || self.class_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("class mix must be nonnegative and nonzero".into()));
        }
        if self.anchor_spacing_s < self.window.window_s + 2.0 {
            return Err(Error::InvalidConfig(format!(
                "anchor spacing {} too small for window {}: neighbouring cues would bleed into each other",
                self.anchor_spacing_s, self.window.window_s
            )));
        }
        Ok(())
    }
}

/// The vocabulary shared by corpus building, training and inference: fillers,
/// trigger words, reaction phrases and common punctuation, plus the OOV hash
/// buckets every vocabulary carries.
pub fn standard_vocab() -> Vocab {
    let mut words: Vec<String> = Vec::new();
    words.extend(FILLERS.iter().map(|s| s.to_string()));
    for list in TRIGGERS {
        words.extend(list.iter().map(|s| s.to_string()));
    }
    for list in REACTION_PHRASES {
        for phrase in list {
            words.extend(crate::frontend::split_tokens(phrase));
        }
    }
    for phrase in FULL_RESPONSE_PHRASES {
        words.extend(crate::frontend::split_tokens(phrase));
    }
    for p in [",", ".", "?", "!"] {
        words.push(p.to_string());
    }
    Vocab::new(words)
}

fn draw_class(mix: &ClassMix, rng: &mut ChaCha8Rng) -> ResponseLabel {
    let total: f64 = mix.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (idx, w) in mix.iter().enumerate() {
        if x < *w {
            return ResponseLabel::from_index(idx).unwrap();
        }
        x -= w;
    }
    ResponseLabel::Silence
}

struct AnchorPlan {
    i: usize,
    t_end: f64,
    label: ResponseLabel,
    /// Listener utterance onset offset into the horizon, duration.
    onset_delta: f64,
    utter_dur: f64,
    phrase: String,
    trigger_words: [String; 3],
    drop_video: bool,
    drop_audio: bool,
    drop_text: bool,
}

struct SourcePlan {
    duration_s: f64,
    anchors: Vec<AnchorPlan>,
}

fn plan_source(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SourcePlan {
    let duration_s = rng.random_range(cfg.duration_range.0..=cfg.duration_range.1);
    let stride = cfg.window.stride_s;
    let spacing_strides = (cfg.anchor_spacing_s / stride).round().max(1.0) as usize;
    // first anchor two seconds past the first window, on the index grid
    let first_i = (2.0 / stride).round() as usize + 1;
    let max_windows = window_count(duration_s, &cfg.window);

    let mut anchors = Vec::new();
    let mut i = first_i;
    while i <= max_windows {
        let t_end = clip_end_time(i, &cfg.window).unwrap();
        // leave room for the longest planted action
        if t_end + 7.0 > duration_s {
            break;
        }
        let label = draw_class(&cfg.class_mix, rng);
        let onset_delta = rng.random_range(0.06..0.44_f64.min(cfg.rules.horizon_s));
        let (utter_dur, phrase) = match label {
            ResponseLabel::Silence => (0.0, String::new()),
            ResponseLabel::FullResponse => {
                let dur = rng.random_range(3.0..5.0);
                let k = rng.random_range(0..FULL_RESPONSE_PHRASES.len());
                (dur, FULL_RESPONSE_PHRASES[k].to_string())
            }
            reaction => {
                let dur = rng.random_range(0.4..1.4_f64.min(cfg.rules.brief_max_s));
                let list = REACTION_PHRASES[reaction.index()];
                let k = rng.random_range(0..list.len());
                (dur, list[k].to_string())
            }
        };
        let trigger_words = if label == ResponseLabel::Silence {
            [String::new(), String::new(), String::new()]
        } else {
            let list = TRIGGERS[label.index()];
            std::array::from_fn(|_| list[rng.random_range(0..list.len())].to_string())
        };
        let drop_video = rng.random_range(0.0..1.0) < cfg.noise;
        let drop_audio = rng.random_range(0.0..1.0) < cfg.noise;
        let drop_text = rng.random_range(0.0..1.0) < cfg.noise;
        anchors.push(AnchorPlan {
            i,
            t_end,
            label,
            onset_delta,
            utter_dur,
            phrase,
            trigger_words,
            drop_video,
            drop_audio,
            drop_text,
        });
        i += spacing_strides;
    }
    SourcePlan { duration_s, anchors }
}

fn synth_source(cfg: &SynthConfig, index: usize) -> CorpusSource {
    let base = cfg
        .seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(index as u64);
    let mut plan_rng = ChaCha8Rng::seed_from_u64(base);
    let plan = plan_source(cfg, &mut plan_rng);
    let duration = plan.duration_s;

    // diarization + speaker utterance spans
    let mut events = Vec::new();
    let mut speaker_spans: Vec<(f64, f64)> = Vec::new();
    for anchor in &plan.anchors {
        let t = anchor.t_end;
        let speaker_end = match anchor.label {
            ResponseLabel::Silence => t + 1.6,
            ResponseLabel::FullResponse => t + anchor.onset_delta - 0.1,
            _ => t + 1.6,
        };
        let span = ((t - 9.0).max(0.0), speaker_end);
        speaker_spans.push(span);
        events.push(DiarizationEvent {
            speaker_id: SPEAKER_ID.into(),
            onset_s: span.0,
            offset_s: span.1,
            text: None,
        });
        if anchor.label != ResponseLabel::Silence {
            let onset = t + anchor.onset_delta;
            events.push(DiarizationEvent {
                speaker_id: LISTENER_ID.into(),
                onset_s: onset,
                offset_s: onset + anchor.utter_dur,
                text: Some(anchor.phrase.clone()),
            });
        }
    }
    events.sort_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());

    // speaker transcript: fillers through each utterance, trigger words in
    // the two seconds before each non-silence anchor
    let mut word_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(0x0F1));
    let mut tokens: Vec<TimedToken> = Vec::new();
    for (a0, a1) in &speaker_spans {
        let mut t = *a0;
        while t < *a1 {
            let word = FILLERS[word_rng.random_range(0..FILLERS.len())];
            tokens.push(TimedToken {
                token: word.into(),
                onset_s: t,
                offset_s: (t + 0.25).min(*a1),
            });
            t += 0.35;
        }
    }
    for anchor in &plan.anchors {
        if anchor.label == ResponseLabel::Silence || anchor.drop_text {
            continue;
        }
        for (slot, word) in anchor.trigger_words.iter().enumerate() {
            let onset = anchor.t_end - 1.8 + 0.6 * slot as f64;
            tokens.push(TimedToken {
                token: word.clone(),
                onset_s: onset,
                offset_s: onset + 0.25,
            });
        }
    }
    tokens.sort_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());

    // audio: ambient noise, louder during speech, tone bursts before anchors
    let mut audio_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(0x0A2));
    let sr = cfg.sample_rate as f64;
    let n_samples = (duration * sr).round() as usize;
    let ambient = 0.01 + 0.10 * cfg.noise;
    let mut samples = vec![0.0f64; n_samples];
    for s in samples.iter_mut() {
        *s = ambient * (2.0 * audio_rng.random_range(0.0..1.0) - 1.0);
    }
    for (a0, a1) in &speaker_spans {
        let lo = (a0 * sr) as usize;
        let hi = ((a1 * sr) as usize).min(n_samples);
        for s in &mut samples[lo..hi] {
            *s += 0.06 * (2.0 * audio_rng.random_range(0.0..1.0) - 1.0);
        }
    }
    for anchor in &plan.anchors {
        if anchor.label == ResponseLabel::Silence || anchor.drop_audio {
            continue;
        }
        let freq = TONE_HZ[anchor.label.index()];
        let lo = ((anchor.t_end - 2.0) * sr) as usize;
        let hi = (((anchor.t_end - 0.25) * sr) as usize).min(n_samples);
        for (n, s) in samples[lo..hi].iter_mut().enumerate() {
            let t = (lo + n) as f64 / sr;
            *s += 0.4 * (2.0 * std::f64::consts::PI * freq * t).sin();
        }
    }
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }

    // video: gray frames, one lit patch+channel per anchor class
    let mut video_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(0x0B3));
    let (h, w) = (cfg.frame_height, cfg.frame_width);
    let n_frames = (duration * cfg.video_fps).floor() as usize;
    let frame_len = h * w * 3;
    let pixel_noise = 0.25 * cfg.noise;
    let mut data = vec![0.0f64; n_frames * frame_len];
    for v in data.iter_mut() {
        *v = (0.2 + pixel_noise * (2.0 * video_rng.random_range(0.0..1.0) - 1.0)).clamp(0.0, 1.0);
    }
    for anchor in &plan.anchors {
        if anchor.label == ResponseLabel::Silence || anchor.drop_video {
            continue;
        }
        let class = anchor.label.index();
        let (patch, channel) = (class % 4, class % 3);
        let (row0, row1) = if patch / 2 == 0 { (0, h / 2) } else { (h / 2, h) };
        let (col0, col1) = if patch % 2 == 0 { (0, w / 2) } else { (w / 2, w) };
        let k0 = (((anchor.t_end - 2.0) * cfg.video_fps).ceil() as usize).min(n_frames);
        let k1 = (((anchor.t_end - 0.25) * cfg.video_fps).floor() as usize + 1).min(n_frames);
        for k in k0..k1 {
            for r in row0..row1 {
                for c in col0..col1 {
                    let idx = k * frame_len + (r * w + c) * 3 + channel;
                    data[idx] = (data[idx] + 0.8).clamp(0.0, 1.0);
                }
            }
        }
    }

    let timeline = MediaTimeline {
        source_id: format!("synth-{index:04}"),
        duration_s: duration,
        video: Some(FrameTrack { fps: cfg.video_fps, height: h, width: w, data }),
        audio: Some(AudioTrack { sample_rate: cfg.sample_rate, samples }),
        transcript: Some(tokens),
    };

    CorpusSource {
        timeline,
        diarization: events,
        listener_id: LISTENER_ID.into(),
        planted: plan
            .anchors
            .iter()
            .map(|a| PlantedAnchor { i: a.i, t_end: a.t_end, label: a.label })
            .collect(),
    }
}

/// A planted anchor's ground truth, kept for verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedAnchor {
    pub i: usize,
    pub t_end: f64,
    pub label: ResponseLabel,
}

/// Generates a synthetic dyadic corpus. Deterministic given the config; each
/// source derives its own generator from `(seed, index)`, so sources can be
/// built in parallel without changing the result.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    use rayon::prelude::*;
    let sources: Vec<CorpusSource> = (0..cfg.n_sources)
        .into_par_iter()
        .map(|index| synth_source(cfg, index))
        .collect();
    Ok(Corpus {
        window: cfg.window,
        rules: cfg.rules,
        sources,
    })
}
