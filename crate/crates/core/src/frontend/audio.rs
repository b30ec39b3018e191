//! Audio frontend: PCM16 WAV loading, linear resampling and log-mel
//! spectrograms.
//!
//! The canonical path is mono PCM16 WAV resampled to 16 kHz, framed with a
//! 25 ms window and 10 ms hop, a Hann-windowed power STFT, a 40-band HTK-scale
//! triangular mel filterbank, and a natural log with a small floor.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

/// Mel frontend parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub f_min: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 40,
            frame_len_s: 0.025,
            hop_s: 0.010,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-10,
        }
    }
}

/// Log-power mel spectrogram, `n_frames x n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Array2<f64>,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over FFT bins, `n_mels x (n_fft/2 + 1)`.
/// Adjacent filters overlap; filter `m` rises over `[edge_m, edge_{m+1}]` and
/// falls over `[edge_{m+1}, edge_{m+2}]` with the edges equally spaced in mel.
pub fn mel_filterbank(cfg: &MelConfig, n_fft: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let f_max = cfg.f_max.unwrap_or(sample_rate as f64 / 2.0);
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|m| mel_to_hz(mel_lo + (mel_hi - mel_lo) * m as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut bank = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            if w > 0.0 {
                bank[[m, k]] = w;
            }
        }
    }
    bank
}

/// Hz positions of the filterbank peaks, for tests and diagnostics.
pub fn mel_filter_centers(cfg: &MelConfig, sample_rate: u32) -> Vec<f64> {
    let f_max = cfg.f_max.unwrap_or(sample_rate as f64 / 2.0);
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(f_max);
    (1..=cfg.n_mels)
        .map(|m| mel_to_hz(mel_lo + (mel_hi - mel_lo) * m as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Log-power mel spectrogram of a waveform.
///
/// Frames are full only (no padding): `n_frames = (len - frame_len)/hop + 1`.
pub fn compute_log_mel(audio: &AudioBuffer, cfg: &MelConfig) -> Result<LogMelSpectrogram> {
    let sr = audio.sample_rate;
    let frame_len = (sr as f64 * cfg.frame_len_s).round() as usize;
    let hop = (sr as f64 * cfg.hop_s).round() as usize;
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidConfig("mel frame/hop too short for sample rate".into()));
    }
    if audio.samples.len() < frame_len {
        return Err(Error::EmptySignal);
    }
    let n_frames = (audio.samples.len() - frame_len) / hop + 1;
    let n_fft = frame_len.next_power_of_two();
    let n_bins = n_fft / 2 + 1;

    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / frame_len as f64).cos())
        .collect();
    let bank = mel_filterbank(cfg, n_fft, sr);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut values = Array2::zeros((n_frames, cfg.n_mels));
    let mut buf = vec![Complex::new(0.0f64, 0.0); n_fft];
    let mut power = vec![0.0f64; n_bins];
    for frame in 0..n_frames {
        let start = frame * hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = if n < frame_len {
                Complex::new(audio.samples[start + n] * window[n], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let mut acc = 0.0;
            for k in 0..n_bins {
                acc += bank[[m, k]] * power[k];
            }
            values[[frame, m]] = acc.max(cfg.log_floor).ln();
        }
    }
    Ok(LogMelSpectrogram { values })
}

/// Linear-interpolation resampling.
pub fn resample_linear(samples: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || samples.is_empty() {
        return samples.to_vec();
    }
    let out_len = ((samples.len() as f64) * to_rate as f64 / from_rate as f64).round() as usize;
    let ratio = from_rate as f64 / to_rate as f64;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let a = samples[i.min(samples.len() - 1)];
            let b = samples[(i + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

fn read_exact(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn u16_le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

/// Reads a mono PCM16 WAV file and resamples it to `target_rate`.
pub fn load_wav(path: &Path, target_rate: u32) -> Result<AudioBuffer> {
    let mut file = std::fs::File::open(path)?;
    let header = read_exact(&mut file, 12)?;
    if &header[0..4] != b"RIFF" || &header[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{} is not a RIFF/WAVE file", path.display())));
    }
    let mut sample_rate = 0u32;
    let mut samples: Option<Vec<f64>> = None;
    loop {
        let mut chunk_header = [0u8; 8];
        match file.read_exact(&mut chunk_header) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let chunk_id = &chunk_header[0..4];
        let chunk_len = u32_le(&chunk_header[4..8]) as usize;
        let body = read_exact(&mut file, chunk_len)?;
        match chunk_id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("truncated fmt chunk".into()));
                }
                let format = u16_le(&body[0..2]);
                let channels = u16_le(&body[2..4]);
                let bits = u16_le(&body[14..16]);
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(Error::Format(
                        "only mono PCM16 WAV input is supported".into(),
                    ));
                }
                sample_rate = u32_le(&body[4..8]);
            }
            b"data" => {
                let pcm: Vec<f64> = body
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                samples = Some(pcm);
            }
            _ => {}
        }
        if chunk_len % 2 == 1 {
            let _ = read_exact(&mut file, 1);
        }
    }
    let samples =
        samples.ok_or_else(|| Error::Format(format!("{} has no data chunk", path.display())))?;
    if sample_rate == 0 {
        return Err(Error::Format(format!("{} has no fmt chunk", path.display())));
    }
    let samples = resample_linear(&samples, sample_rate, target_rate);
    Ok(AudioBuffer { sample_rate: target_rate, samples })
}

/// Writes a mono PCM16 WAV file. Samples are clamped to `[-1, 1]`.
pub fn save_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let data_len = (audio.samples.len() * 2) as u32;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?; // PCM
    out.write_all(&1u16.to_le_bytes())?; // mono
    out.write_all(&audio.sample_rate.to_le_bytes())?;
    out.write_all(&(audio.sample_rate * 2).to_le_bytes())?; // byte rate
    out.write_all(&2u16.to_le_bytes())?; // block align
    out.write_all(&16u16.to_le_bytes())?; // bits
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, rate: u32, amp: f64) -> AudioBuffer {
        let n = (secs * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer { sample_rate: rate, samples }
    }

    #[test]
    fn frame_count_matches_closed_form() {
        let audio = AudioBuffer { sample_rate: 16000, samples: vec![0.0; 160000] };
        let mel = compute_log_mel(&audio, &MelConfig::default()).unwrap();
        // floor((160000 - 400) / 160) + 1
        assert_eq!(mel.n_frames(), 998);
        assert_eq!(mel.n_mels(), 40);
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let audio = AudioBuffer { sample_rate: 16000, samples: vec![0.0; 8000] };
        let cfg = MelConfig::default();
        let mel = compute_log_mel(&audio, &cfg).unwrap();
        let expected = cfg.log_floor.ln();
        for &v in mel.values.iter() {
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn sine_peaks_at_nearest_filter_center() {
        let cfg = MelConfig::default();
        let audio = tone(1000.0, 1.0, 16000, 0.8);
        let mel = compute_log_mel(&audio, &cfg).unwrap();
        // average over frames, find strongest band
        let mut band_energy = vec![0.0; cfg.n_mels];
        for row in mel.values.rows() {
            for (m, &v) in row.iter().enumerate() {
                band_energy[m] += v;
            }
        }
        let argmax = band_energy
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // independent oracle: filter centers computed from the mel formula
        let centers = mel_filter_centers(&cfg, 16000);
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn doubling_amplitude_shifts_log_by_ln4() {
        let cfg = MelConfig::default();
        let quiet = tone(440.0, 0.5, 16000, 0.2);
        let loud = AudioBuffer {
            sample_rate: 16000,
            samples: quiet.samples.iter().map(|s| s * 2.0).collect(),
        };
        let a = compute_log_mel(&quiet, &cfg).unwrap();
        let b = compute_log_mel(&loud, &cfg).unwrap();
        let ln4 = 4.0f64.ln();
        let floor = cfg.log_floor.ln();
        let mut checked = 0;
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            if *x > floor && *y > floor {
                assert!((y - x - ln4).abs() < 1e-9, "shift {} != ln 4", y - x);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn filterbank_rows_positive_and_overlapping() {
        let cfg = MelConfig::default();
        let bank = mel_filterbank(&cfg, 512, 16000);
        for (m, row) in bank.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            assert!(sum > 0.0, "filter {m} sums to {sum}");
        }
        // adjacent filters share support
        for m in 0..cfg.n_mels - 1 {
            let overlap: f64 = (0..bank.ncols())
                .map(|k| bank[[m, k]].min(bank[[m + 1, k]]))
                .sum();
            assert!(overlap > 0.0, "filters {m} and {} do not overlap", m + 1);
        }
    }

    #[test]
    fn too_short_signal_errors() {
        let audio = AudioBuffer { sample_rate: 16000, samples: vec![0.0; 100] };
        assert!(matches!(
            compute_log_mel(&audio, &MelConfig::default()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn wav_round_trip_and_resample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = tone(440.0, 0.25, 16000, 0.5);
        save_wav(&path, &audio).unwrap();
        let back = load_wav(&path, 16000).unwrap();
        assert_eq!(back.samples.len(), audio.samples.len());
        for (a, b) in audio.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
        // 8 kHz source gets upsampled on load
        let low = tone(440.0, 0.25, 8000, 0.5);
        let low_path = dir.path().join("b.wav");
        save_wav(&low_path, &low).unwrap();
        let up = load_wav(&low_path, 16000).unwrap();
        assert_eq!(up.sample_rate, 16000);
        assert_eq!(up.samples.len(), 4000);
    }
}
