//! Video frontend: clip frame resampling and the raw feature file format.
//!
//! Video is ingested as raw frame arrays in a simple binary format rather
//! than decoded containers: magic `MMW2SF01`, a u32 dimension count, the u32
//! dimensions, then a row-major float32 payload (little-endian throughout).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeline::{Clip, FrameTrack, MediaTimeline};

const FEATURE_MAGIC: &[u8; 8] = b"MMW2SF01";

/// Frames resampled from a clip: `f x h x w x 3`, values in `[0, 1]`,
/// frame `k` taken at `t_start + k / fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FrameSequence {
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

/// Resamples a clip's video at `fps` by nearest-neighbor lookup in the source
/// track. Picks frames at uniform timestamps `t_start + k / fps`; the source
/// index is clamped to the clip's own frame range so a decision never reads
/// past its window.
pub fn sample_frames(timeline: &MediaTimeline, clip: &Clip, fps: f64) -> Result<FrameSequence> {
    let track = timeline.video.as_ref().ok_or(Error::MissingModality("video"))?;
    let (_, range) = clip.video().expect("clip and timeline share the video track");
    if range.is_empty() {
        return Err(Error::MissingModality("video"));
    }
    let duration = clip.t_end - clip.t_start;
    let count = (duration * fps).floor() as usize;
    if count == 0 {
        return Err(Error::InvalidConfig(format!(
            "fps {fps} yields no frames for a {duration}s clip"
        )));
    }
    let frame_len = track.frame_len();
    let mut data = Vec::with_capacity(count * frame_len);
    for k in 0..count {
        let t = clip.t_start + k as f64 / fps;
        let nearest = (t * track.fps).round() as usize;
        let src = nearest.clamp(range.start, range.end - 1);
        data.extend_from_slice(track.frame(src));
    }
    Ok(FrameSequence {
        fps,
        height: track.height,
        width: track.width,
        data,
    })
}

/// Writes a raw feature file (f64 values narrowed to f32 on disk).
pub fn save_feature_file(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::ShapeMismatch {
            name: path.display().to_string(),
            expected: dims.to_vec(),
            actual: vec![data.len()],
        });
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a raw feature file back as (dims, data).
pub fn load_feature_file(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a raw feature file (bad magic)",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let ndims = u32::from_le_bytes(u32buf) as usize;
    if ndims == 0 || ndims > 8 {
        return Err(Error::Format(format!("implausible dimension count {ndims}")));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        file.read_exact(&mut u32buf)?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    let total: usize = dims.iter().product();
    let mut payload = vec![0u8; total * 4];
    file.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((dims, data))
}

/// Loads a `f x h x w x 3` feature file as a frame track. The frame rate is
/// recovered from the timeline duration: `fps = f / duration_s`.
pub fn load_frame_track(path: &Path, duration_s: f64) -> Result<FrameTrack> {
    let (dims, data) = load_feature_file(path)?;
    if dims.len() != 4 || dims[3] != 3 {
        return Err(Error::Format(format!(
            "expected f x h x w x 3 video features, got dims {dims:?}"
        )));
    }
    if duration_s <= 0.0 {
        return Err(Error::InvalidConfig("cannot derive fps for a zero-length timeline".into()));
    }
    Ok(FrameTrack {
        fps: dims[0] as f64 / duration_s,
        height: dims[1],
        width: dims[2],
        data,
    })
}

/// Writes a frame track as a feature file.
pub fn save_frame_track(path: &Path, track: &FrameTrack) -> Result<()> {
    save_feature_file(
        path,
        &[track.frame_count(), track.height, track.width, 3],
        &track.data,
    )
}
