//! Diarization timelines and the rule that turns them into listener actions.
//!
//! A decision point at `t_end` asks: does the listener act in the horizon
//! right after it? The first listener utterance with onset in
//! `(t_end, t_end + horizon_s]` decides the window's coarse label:
//!
//! - no such utterance: `silence`
//! - a brief utterance while the other speaker keeps talking (already
//!   speaking at the onset, or back within `resume_gap_s` of its end):
//!   `reaction`
//! - anything else, i.e. the other speaker ceases and the listener holds the
//!   floor: `full_response`

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One diarized utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiarizationEvent {
    pub speaker_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub text: Option<String>,
}

impl DiarizationEvent {
    pub fn duration(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// Thresholds of the labeling rule. The defaults pin down quantities the
/// source heuristics leave open: a backchannel counts as "brief" up to 2 s,
/// the horizon after a decision point is one stride, and a speaker "keeps
/// talking" if they are back on the floor within 1 s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRuleConfig {
    pub brief_max_s: f64,
    pub horizon_s: f64,
    pub resume_gap_s: f64,
}

impl Default for LabelRuleConfig {
    fn default() -> Self {
        LabelRuleConfig {
            brief_max_s: 2.0,
            horizon_s: 0.5,
            resume_gap_s: 1.0,
        }
    }
}

impl LabelRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.brief_max_s <= 0.0 || self.horizon_s <= 0.0 || self.resume_gap_s <= 0.0 {
            return Err(Error::InvalidConfig(
                "label rule thresholds must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Coarse listener action at one decision point. Reaction and full-response
/// carry the triggering utterance so its transcript can be subtyped.
#[derive(Debug, Clone, PartialEq)]
pub enum ListenerAction {
    Silence,
    Reaction(DiarizationEvent),
    FullResponse(DiarizationEvent),
}

fn check_dyadic(track: &[DiarizationEvent], listener_id: &str) -> Result<()> {
    let mut ids: BTreeSet<&str> = track.iter().map(|e| e.speaker_id.as_str()).collect();
    ids.insert(listener_id);
    if ids.len() > 2 {
        return Err(Error::NonDyadic(ids.into_iter().map(String::from).collect()));
    }
    Ok(())
}

/// Derives the listener action for the decision point at `t_end`.
pub fn derive_action(
    track: &[DiarizationEvent],
    listener_id: &str,
    t_end: f64,
    rules: &LabelRuleConfig,
) -> Result<ListenerAction> {
    rules.validate()?;
    check_dyadic(track, listener_id)?;

    // first listener utterance with onset in (t_end, t_end + horizon]
    let utterance = track
        .iter()
        .filter(|e| e.speaker_id == listener_id)
        .filter(|e| e.onset_s > t_end && e.onset_s <= t_end + rules.horizon_s)
        .min_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());
    let utterance = match utterance {
        Some(u) => u.clone(),
        None => return Ok(ListenerAction::Silence),
    };

    let brief = utterance.duration() <= rules.brief_max_s;
    let other_continues = track
        .iter()
        .filter(|e| e.speaker_id != listener_id)
        .any(|e| {
            let speaking_at_onset = e.onset_s <= utterance.onset_s && utterance.onset_s < e.offset_s;
            let resumes_after = e.onset_s >= utterance.offset_s
                && e.onset_s <= utterance.offset_s + rules.resume_gap_s;
            speaking_at_onset || resumes_after
        });

    if brief && other_continues {
        Ok(ListenerAction::Reaction(utterance))
    } else {
        Ok(ListenerAction::FullResponse(utterance))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    speaker_id: String,
    onset_s: f64,
    offset_s: f64,
    text: String,
}

/// Reads a diarization CSV with header `speaker_id,onset_s,offset_s,text`.
pub fn load_diarization_csv(path: &Path) -> Result<Vec<DiarizationEvent>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut events = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row?;
        if row.offset_s <= row.onset_s {
            return Err(Error::Format(format!(
                "diarization event at {} has non-positive duration",
                row.onset_s
            )));
        }
        events.push(DiarizationEvent {
            speaker_id: row.speaker_id,
            onset_s: row.onset_s,
            offset_s: row.offset_s,
            text: if row.text.is_empty() { None } else { Some(row.text) },
        });
    }
    Ok(events)
}

pub fn save_diarization_csv(path: &Path, events: &[DiarizationEvent]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for e in events {
        writer.serialize(CsvRow {
            speaker_id: e.speaker_id.clone(),
            onset_s: e.onset_s,
            offset_s: e.offset_s,
            text: e.text.clone().unwrap_or_default(),
        })?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(speaker: &str, onset: f64, offset: f64) -> DiarizationEvent {
        DiarizationEvent {
            speaker_id: speaker.into(),
            onset_s: onset,
            offset_s: offset,
            text: None,
        }
    }

    #[test]
    fn brief_utterance_while_other_talks_is_reaction() {
        let track = vec![event("a", 0.0, 15.0), event("b", 10.2, 10.9)];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert!(matches!(action, ListenerAction::Reaction(u) if u.onset_s == 10.2));
    }

    #[test]
    fn turn_switch_is_full_response() {
        let track = vec![event("a", 0.0, 10.3), event("b", 10.4, 18.0)];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert!(matches!(action, ListenerAction::FullResponse(u) if u.onset_s == 10.4));
    }

    #[test]
    fn no_listener_utterance_is_silence() {
        let track = vec![event("a", 0.0, 15.0)];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert_eq!(action, ListenerAction::Silence);
    }

    #[test]
    fn brief_utterance_after_other_ceases_is_full_response() {
        // b's utterance is brief but a neither speaks at its onset nor resumes
        let track = vec![event("a", 0.0, 9.0), event("b", 10.3, 10.8)];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert!(matches!(action, ListenerAction::FullResponse(_)));
    }

    #[test]
    fn resume_within_gap_keeps_it_a_reaction() {
        let track = vec![
            event("a", 0.0, 10.1),
            event("b", 10.3, 10.8),
            event("a", 11.5, 20.0), // back 0.7s after b finishes
        ];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert!(matches!(action, ListenerAction::Reaction(_)));
    }

    #[test]
    fn utterance_outside_horizon_is_ignored() {
        let track = vec![event("a", 0.0, 15.0), event("b", 10.6, 10.9)];
        let action = derive_action(&track, "b", 10.0, &LabelRuleConfig::default()).unwrap();
        assert_eq!(action, ListenerAction::Silence);
    }

    #[test]
    fn three_speakers_error() {
        let track = vec![event("a", 0.0, 1.0), event("b", 1.0, 2.0), event("c", 2.0, 3.0)];
        assert!(matches!(
            derive_action(&track, "b", 0.5, &LabelRuleConfig::default()),
            Err(Error::NonDyadic(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let events = vec![
            DiarizationEvent {
                speaker_id: "a".into(),
                onset_s: 0.0,
                offset_s: 10.3,
                text: Some("so the thing is".into()),
            },
            DiarizationEvent {
                speaker_id: "b".into(),
                onset_s: 10.4,
                offset_s: 11.0,
                text: None,
            },
        ];
        save_diarization_csv(&path, &events).unwrap();
        let back = load_diarization_csv(&path).unwrap();
        assert_eq!(back, events);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("speaker_id,onset_s,offset_s,text"));
    }
}
