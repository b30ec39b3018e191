//! Conversation data model and sliding-window arithmetic.
//!
//! A full conversation is a [`MediaTimeline`]: synchronized (optional) video
//! frames, audio samples and timed transcript tokens over `[0, duration_s]`.
//! Decision points live on a fixed grid: window `i` (1-based) ends at
//! `t_i = window_s + (i - 1) * stride_s` and covers the closed interval
//! `[t_i - window_s, t_i]`.
//!
//! End times are always computed directly from the index in double precision;
//! accumulating strides is forbidden because it drifts over thousands of
//! windows.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sliding-window geometry: window length and stride, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_s: f64,
    pub stride_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_s: 10.0,
            stride_s: 0.5,
        }
    }
}

impl WindowConfig {
    pub fn new(window_s: f64, stride_s: f64) -> Result<Self> {
        let cfg = WindowConfig { window_s, stride_s };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "window_s must be positive, got {}",
                self.window_s
            )));
        }
        if !(self.stride_s > 0.0 && self.stride_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stride_s must be positive, got {}",
                self.stride_s
            )));
        }
        if self.stride_s > self.window_s {
            return Err(Error::InvalidConfig(format!(
                "stride_s ({}) must not exceed window_s ({})",
                self.stride_s, self.window_s
            )));
        }
        Ok(())
    }
}

/// Raw video frames at a fixed rate: `frame_count x height x width x 3`,
/// values in `[0, 1]`, frame `k` timestamped `k / fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrack {
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FrameTrack {
    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame_count(&self) -> usize {
        if self.frame_len() == 0 {
            0
        } else {
            self.data.len() / self.frame_len()
        }
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let len = self.frame_len();
        &self.data[k * len..(k + 1) * len]
    }
}

/// Mono audio waveform, sample `n` timestamped `n / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

/// One transcript token with its utterance span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedToken {
    pub token: String,
    pub onset_s: f64,
    pub offset_s: f64,
}

/// A full conversation with optional per-modality tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaTimeline {
    pub source_id: String,
    pub duration_s: f64,
    pub video: Option<FrameTrack>,
    pub audio: Option<AudioTrack>,
    pub transcript: Option<Vec<TimedToken>>,
}

impl MediaTimeline {
    /// Checks the structural invariants: nonnegative duration, tracks inside
    /// `[0, duration_s]`, transcript sorted by onset.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "duration_s must be nonnegative, got {}",
                self.duration_s
            )));
        }
        if let Some(video) = &self.video {
            if video.fps <= 0.0 {
                return Err(Error::InvalidConfig("video fps must be positive".into()));
            }
            if video.data.len() % video.frame_len().max(1) != 0 {
                return Err(Error::Format("video data is not a whole number of frames".into()));
            }
            let n = video.frame_count();
            if n > 0 && (n - 1) as f64 / video.fps > self.duration_s {
                return Err(Error::Format("video track extends past duration_s".into()));
            }
        }
        if let Some(audio) = &self.audio {
            if audio.sample_rate == 0 {
                return Err(Error::InvalidConfig("audio sample rate must be positive".into()));
            }
            let n = audio.samples.len();
            if n > 0 && (n - 1) as f64 / audio.sample_rate as f64 > self.duration_s {
                return Err(Error::Format("audio track extends past duration_s".into()));
            }
        }
        if let Some(tokens) = &self.transcript {
            let mut prev = f64::NEG_INFINITY;
            for t in tokens {
                if t.onset_s < prev {
                    return Err(Error::Format("transcript onsets must be nondecreasing".into()));
                }
                if t.offset_s < t.onset_s || t.onset_s < 0.0 || t.onset_s > self.duration_s {
                    return Err(Error::Format(format!(
                        "token {:?} has span [{}, {}] outside the timeline",
                        t.token, t.onset_s, t.offset_s
                    )));
                }
                prev = t.onset_s;
            }
        }
        Ok(())
    }
}

/// One JSON line of a timeline manifest. Paths are relative to the manifest's
/// directory and null for missing modalities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineManifestEntry {
    pub source_id: String,
    pub duration_s: f64,
    pub audio_path: Option<String>,
    pub video_feat_path: Option<String>,
    pub transcript: Option<Vec<TimedToken>>,
}

/// End time `t_i` of window `i`: `window_s + (i - 1) * stride_s`.
pub fn clip_end_time(i: usize, cfg: &WindowConfig) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidIndex(0));
    }
    Ok(cfg.window_s + (i - 1) as f64 * cfg.stride_s)
}

/// Number of windows that fit in `duration_s`: exactly the count of valid `i`
/// with `clip_end_time(i) <= duration_s`.
pub fn window_count(duration_s: f64, cfg: &WindowConfig) -> usize {
    if !(duration_s >= cfg.window_s) {
        return 0;
    }
    let t = |i: usize| cfg.window_s + (i - 1) as f64 * cfg.stride_s;
    // Closed form, then nudged so the result agrees with direct enumeration
    // even when the division rounds the wrong way.
    let mut n = (((duration_s - cfg.window_s) / cfg.stride_s).floor() as usize).saturating_add(1);
    while n > 0 && t(n) > duration_s {
        n -= 1;
    }
    while t(n + 1) <= duration_s {
        n += 1;
    }
    n
}

/// Indices `k` in `0..len` whose timestamp `k / rate` lies in the closed
/// interval `[t0, t1]`.
pub(crate) fn index_range(t0: f64, t1: f64, rate: f64, len: usize) -> Range<usize> {
    if len == 0 || t1 < t0 || rate <= 0.0 {
        return 0..0;
    }
    let ts = |k: usize| k as f64 / rate;
    let mut lo = (t0.max(0.0) * rate).floor() as usize;
    lo = lo.min(len);
    while lo > 0 && ts(lo - 1) >= t0 {
        lo -= 1;
    }
    while lo < len && ts(lo) < t0 {
        lo += 1;
    }
    let mut hi = (((t1.max(0.0) * rate).ceil()) as usize).saturating_add(1).min(len);
    while hi > lo && ts(hi - 1) > t1 {
        hi -= 1;
    }
    while hi < len && ts(hi) <= t1 {
        hi += 1;
    }
    lo..hi
}

/// Tokens whose onset falls in the closed interval `[t0, t1]`. Membership is
/// by onset only: a token straddling the left edge is excluded.
pub(crate) fn token_range(tokens: &[TimedToken], t0: f64, t1: f64) -> Range<usize> {
    let lo = tokens.partition_point(|t| t.onset_s < t0);
    let hi = tokens.partition_point(|t| t.onset_s <= t1);
    lo..hi.max(lo)
}

/// One windowed crop of a timeline. Holds index ranges into the source tracks
/// rather than copies, so iteration over thousands of windows stays cheap.
#[derive(Debug, Clone)]
pub struct Clip<'a> {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    timeline: &'a MediaTimeline,
    frame_range: Range<usize>,
    sample_range: Range<usize>,
    token_range: Range<usize>,
}

impl<'a> Clip<'a> {
    pub fn source_id(&self) -> &str {
        &self.timeline.source_id
    }

    pub fn timeline(&self) -> &'a MediaTimeline {
        self.timeline
    }

    /// Source video track, restricted to the in-window frame index range.
    pub fn video(&self) -> Option<(&'a FrameTrack, Range<usize>)> {
        self.timeline
            .video
            .as_ref()
            .map(|track| (track, self.frame_range.clone()))
    }

    /// Audio samples inside the window, with their sample rate.
    pub fn audio(&self) -> Option<(u32, &'a [f64])> {
        self.timeline
            .audio
            .as_ref()
            .map(|track| (track.sample_rate, &track.samples[self.sample_range.clone()]))
    }

    /// Transcript tokens whose onset lies inside the window.
    pub fn tokens(&self) -> Option<&'a [TimedToken]> {
        self.timeline
            .transcript
            .as_ref()
            .map(|tokens| &tokens[self.token_range.clone()])
    }
}

/// Crops window `i` out of a timeline. Every present modality view contains
/// exactly the samples/frames/tokens whose timestamps fall in
/// `[t_i - window_s, t_i]` (closed on both ends).
pub fn extract_clip<'a>(
    timeline: &'a MediaTimeline,
    i: usize,
    cfg: &WindowConfig,
) -> Result<Clip<'a>> {
    let t_end = clip_end_time(i, cfg)?;
    if t_end > timeline.duration_s {
        return Err(Error::WindowOutOfBounds {
            index: i,
            t_end,
            duration_s: timeline.duration_s,
        });
    }
    let t_start = t_end - cfg.window_s;
    let frame_range = match &timeline.video {
        Some(v) => index_range(t_start, t_end, v.fps, v.frame_count()),
        None => 0..0,
    };
    let sample_range = match &timeline.audio {
        Some(a) => index_range(t_start, t_end, a.sample_rate as f64, a.samples.len()),
        None => 0..0,
    };
    let token_range = match &timeline.transcript {
        Some(tokens) => token_range(tokens, t_start, t_end),
        None => 0..0,
    };
    Ok(Clip {
        index: i,
        t_start,
        t_end,
        timeline,
        frame_range,
        sample_range,
        token_range,
    })
}

/// Iterates all valid windows in increasing index order.
pub fn iter_clips<'a>(
    timeline: &'a MediaTimeline,
    cfg: &WindowConfig,
) -> impl Iterator<Item = Clip<'a>> + 'a {
    let cfg = *cfg;
    let count = window_count(timeline.duration_s, &cfg);
    (1..=count).map(move |i| {
        extract_clip(timeline, i, &cfg).expect("index within window_count is always extractable")
    })
}
