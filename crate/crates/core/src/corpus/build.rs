//! Dataset assembly: dense window labeling, category sampling and the
//! train/test split.
//!
//! Splits are assigned at source-video granularity, never per clip: with a
//! 0.5 s stride adjacent windows are near-duplicates, and splitting them
//! apart would leak training data into the test set.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::diarization::{derive_action, ListenerAction};
use crate::corpus::reaction::ReactionCategorizer;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::label::ResponseLabel;
use crate::timeline::{clip_end_time, window_count, WindowConfig};

/// Which side of the 7:3 divide a source landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One labeled window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClipRecord {
    pub source_id: String,
    pub i: usize,
    pub t_end: f64,
    pub label: ResponseLabel,
    pub split: Split,
}

/// A labeled dataset: window geometry, records, bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub window: WindowConfig,
    pub seed: u64,
    pub class_counts: BTreeMap<ResponseLabel, usize>,
    pub records: Vec<LabeledClipRecord>,
}

impl CorpusManifest {
    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &LabeledClipRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    fn count_classes(records: &[LabeledClipRecord]) -> BTreeMap<ResponseLabel, usize> {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }

    /// Writes `<stem>.jsonl` (one record per line) and `<stem>.meta.json`.
    /// An optional resolved run configuration is embedded in the meta file.
    pub fn save(&self, dir: &Path, stem: &str, config: Option<&serde_json::Value>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut jsonl = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.jsonl")))?);
        for record in &self.records {
            serde_json::to_writer(&mut jsonl, record)?;
            jsonl.write_all(b"\n")?;
        }
        jsonl.flush()?;
        let meta = ManifestMeta {
            window: self.window,
            seed: self.seed,
            n_records: self.records.len(),
            class_counts: self.class_counts.clone(),
            config: config.cloned(),
        };
        let meta_path = dir.join(format!("{stem}.meta.json"));
        std::fs::write(meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<CorpusManifest> {
        let meta_raw = std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))?;
        let meta: ManifestMeta = serde_json::from_str(&meta_raw)?;
        let file = std::fs::File::open(dir.join(format!("{stem}.jsonl")))?;
        let mut records = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<LabeledClipRecord>(&line)?);
        }
        if records.len() != meta.n_records {
            return Err(Error::Format(format!(
                "manifest lists {} records but meta declares {}",
                records.len(),
                meta.n_records
            )));
        }
        Ok(CorpusManifest {
            window: meta.window,
            seed: meta.seed,
            class_counts: meta.class_counts,
            records,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMeta {
    window: WindowConfig,
    seed: u64,
    n_records: usize,
    class_counts: BTreeMap<ResponseLabel, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

/// Requested category sizes for the sampled short-clip dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortClipCounts {
    pub reaction: usize,
    pub full_response: usize,
    pub silence: usize,
}

impl Default for ShortClipCounts {
    fn default() -> Self {
        ShortClipCounts {
            reaction: 4393,
            full_response: 2000,
            silence: 2000,
        }
    }
}

/// Dense per-window labels for one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLabels {
    pub source_id: String,
    pub window: WindowConfig,
    pub labels: Vec<ResponseLabel>,
}

impl DenseLabels {
    pub fn t_end(&self, i: usize) -> f64 {
        clip_end_time(i, &self.window).expect("dense label indices start at 1")
    }
}

fn window_label(
    corpus_source: &crate::corpus::CorpusSource,
    t_end: f64,
    rules: &crate::corpus::diarization::LabelRuleConfig,
    table: &dyn ReactionCategorizer,
) -> Result<(ResponseLabel, ListenerAction)> {
    let action = derive_action(
        &corpus_source.diarization,
        &corpus_source.listener_id,
        t_end,
        rules,
    )?;
    let label = match &action {
        ListenerAction::Silence => ResponseLabel::Silence,
        ListenerAction::FullResponse(_) => ResponseLabel::FullResponse,
        ListenerAction::Reaction(event) => {
            table.categorize(event.text.as_deref().unwrap_or("")).label
        }
    };
    Ok((label, action))
}

/// Labels every window of every source: the Full-Videos regime.
pub fn build_full_videos(
    corpus: &Corpus,
    window: &WindowConfig,
    table: &dyn ReactionCategorizer,
) -> Result<Vec<DenseLabels>> {
    let mut out = Vec::with_capacity(corpus.sources.len());
    for source in &corpus.sources {
        let count = window_count(source.timeline.duration_s, window);
        let mut labels = Vec::with_capacity(count);
        for i in 1..=count {
            let t_end = clip_end_time(i, window)?;
            let (label, _) = window_label(source, t_end, &corpus.rules, table)?;
            labels.push(label);
        }
        out.push(DenseLabels {
            source_id: source.timeline.source_id.clone(),
            window: *window,
            labels,
        });
    }
    Ok(out)
}

/// Assigns each source id to train or test, roughly `ratio` of sources going
/// to train. Deterministic given the rng state.
fn split_sources(source_ids: &[String], ratio: f64, rng: &mut ChaCha8Rng) -> BTreeMap<String, Split> {
    let mut shuffled: Vec<&String> = source_ids.iter().collect();
    shuffled.shuffle(rng);
    let n_train = ((source_ids.len() as f64) * ratio).round() as usize;
    shuffled
        .iter()
        .enumerate()
        .map(|(idx, id)| {
            let split = if idx < n_train { Split::Train } else { Split::Test };
            ((*id).clone(), split)
        })
        .collect()
}

/// Samples the short-clip dataset: `counts.reaction` windows whose listener
/// action is any reaction (subtyped after sampling), plus full-response and
/// silence windows, all without replacement under a seeded generator.
pub fn build_short_clips(
    corpus: &Corpus,
    counts: &ShortClipCounts,
    split_ratio: f64,
    seed: u64,
    table: &dyn ReactionCategorizer,
) -> Result<CorpusManifest> {
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must be in [0, 1], got {split_ratio}"
        )));
    }

    struct Candidate {
        source_idx: usize,
        i: usize,
        t_end: f64,
        action: ListenerAction,
    }

    let mut reactions = Vec::new();
    let mut full_responses = Vec::new();
    let mut silences = Vec::new();
    for (source_idx, source) in corpus.sources.iter().enumerate() {
        let count = window_count(source.timeline.duration_s, &corpus.window);
        for i in 1..=count {
            let t_end = clip_end_time(i, &corpus.window)?;
            let action = derive_action(&source.diarization, &source.listener_id, t_end, &corpus.rules)?;
            let candidate = Candidate { source_idx, i, t_end, action };
            match candidate.action {
                ListenerAction::Silence => silences.push(candidate),
                ListenerAction::FullResponse(_) => full_responses.push(candidate),
                ListenerAction::Reaction(_) => reactions.push(candidate),
            }
        }
    }

    for (name, pool, requested) in [
        ("reaction", reactions.len(), counts.reaction),
        ("full_response", full_responses.len(), counts.full_response),
        ("silence", silences.len(), counts.silence),
    ] {
        if pool < requested {
            return Err(Error::Shortfall {
                category: name.into(),
                requested,
                available: pool,
            });
        }
    }

    // All randomness flows from one generator in a fixed order: reaction
    // sample, full_response sample, silence sample, then the source shuffle.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<(Candidate, ResponseLabel)> = Vec::new();
    for (pool, requested) in [
        (reactions, counts.reaction),
        (full_responses, counts.full_response),
        (silences, counts.silence),
    ] {
        let chosen = rand::seq::index::sample(&mut rng, pool.len(), requested);
        let mut taken: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
        for idx in chosen.iter() {
            let candidate = taken[idx].take().expect("sample indices are unique");
            let label = match &candidate.action {
                ListenerAction::Silence => ResponseLabel::Silence,
                ListenerAction::FullResponse(_) => ResponseLabel::FullResponse,
                ListenerAction::Reaction(event) => {
                    table.categorize(event.text.as_deref().unwrap_or("")).label
                }
            };
            picked.push((candidate, label));
        }
    }

    let source_ids: Vec<String> = corpus
        .sources
        .iter()
        .map(|s| s.timeline.source_id.clone())
        .collect();
    let assignment = split_sources(&source_ids, split_ratio, &mut rng);

    let mut records: Vec<LabeledClipRecord> = picked
        .into_iter()
        .map(|(candidate, label)| {
            let source_id = source_ids[candidate.source_idx].clone();
            let split = assignment[&source_id];
            LabeledClipRecord {
                source_id,
                i: candidate.i,
                t_end: candidate.t_end,
                label,
                split,
            }
        })
        .collect();
    records.sort_by(|a, b| (&a.source_id, a.i).cmp(&(&b.source_id, b.i)));

    Ok(CorpusManifest {
        window: corpus.window,
        seed,
        class_counts: CorpusManifest::count_classes(&records),
        records,
    })
}

/// Builds a balanced all-train manifest with exactly `per_label` records per
/// nine-way label, sampled without replacement. Used for controlled training
/// runs; errors name the first label that falls short.
pub fn build_balanced(
    corpus: &Corpus,
    per_label: usize,
    seed: u64,
    table: &dyn ReactionCategorizer,
) -> Result<CorpusManifest> {
    let mut pools: BTreeMap<ResponseLabel, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (source_idx, source) in corpus.sources.iter().enumerate() {
        let count = window_count(source.timeline.duration_s, &corpus.window);
        for i in 1..=count {
            let t_end = clip_end_time(i, &corpus.window)?;
            let (label, _) = window_label(source, t_end, &corpus.rules, table)?;
            pools.entry(label).or_default().push((source_idx, i, t_end));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for label in ResponseLabel::ALL {
        let pool = pools.remove(&label).unwrap_or_default();
        if pool.len() < per_label {
            return Err(Error::Shortfall {
                category: label.name().into(),
                requested: per_label,
                available: pool.len(),
            });
        }
        let chosen = rand::seq::index::sample(&mut rng, pool.len(), per_label);
        for idx in chosen.iter() {
            let (source_idx, i, t_end) = pool[idx];
            records.push(LabeledClipRecord {
                source_id: corpus.sources[source_idx].timeline.source_id.clone(),
                i,
                t_end,
                label,
                split: Split::Train,
            });
        }
    }
    records.sort_by(|a, b| (&a.source_id, a.i).cmp(&(&b.source_id, b.i)));
    Ok(CorpusManifest {
        window: corpus.window,
        seed,
        class_counts: CorpusManifest::count_classes(&records),
        records,
    })
}

/// Flattens dense labels to per-clip records (one JSON line each) with a
/// per-source split assignment.
pub fn dense_to_records(
    dense: &[DenseLabels],
    split_ratio: f64,
    seed: u64,
) -> Vec<LabeledClipRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = dense.iter().map(|d| d.source_id.clone()).collect();
    let assignment = split_sources(&ids, split_ratio, &mut rng);
    let mut records = Vec::new();
    for d in dense {
        let split = assignment[&d.source_id];
        for (idx, label) in d.labels.iter().enumerate() {
            let i = idx + 1;
            records.push(LabeledClipRecord {
                source_id: d.source_id.clone(),
                i,
                t_end: d.t_end(i),
                label: *label,
                split,
            });
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::diarization::{DiarizationEvent, LabelRuleConfig, ListenerAction};
    use crate::corpus::reaction::RuleTable;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use rand::Rng;

    fn test_corpus(n_sources: usize, seed: u64) -> Corpus {
        synth_corpus(&SynthConfig {
            n_sources,
            duration_range: (60.0, 75.0),
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn full_videos_lengths_match_window_count() {
        let corpus = test_corpus(3, 5);
        let dense = build_full_videos(&corpus, &corpus.window, &RuleTable::default()).unwrap();
        for (source, d) in corpus.sources.iter().zip(&dense) {
            assert_eq!(
                d.labels.len(),
                window_count(source.timeline.duration_s, &corpus.window)
            );
        }
    }

    #[test]
    fn sixty_second_source_has_101_labels() {
        let mut corpus = test_corpus(1, 6);
        corpus.sources[0].timeline.duration_s = 60.0;
        let dense = build_full_videos(&corpus, &corpus.window, &RuleTable::default()).unwrap();
        assert_eq!(dense[0].labels.len(), 101);
    }

    #[test]
    fn short_clips_counts_and_split_are_exact() {
        let corpus = test_corpus(12, 7);
        let counts = ShortClipCounts { reaction: 8, full_response: 3, silence: 5 };
        let manifest =
            build_short_clips(&corpus, &counts, 0.7, 42, &RuleTable::default()).unwrap();
        assert_eq!(manifest.records.len(), 16);
        let reaction_total: usize = manifest
            .class_counts
            .iter()
            .filter(|(l, _)| l.is_reaction())
            .map(|(_, n)| n)
            .sum();
        assert_eq!(reaction_total, 8);
        assert_eq!(manifest.class_counts.get(&ResponseLabel::FullResponse), Some(&3));
        assert_eq!(manifest.class_counts.get(&ResponseLabel::Silence), Some(&5));
        // split granularity: no source id appears on both sides
        let train: std::collections::HashSet<_> = manifest
            .split_records(Split::Train)
            .map(|r| r.source_id.clone())
            .collect();
        let test: std::collections::HashSet<_> = manifest
            .split_records(Split::Test)
            .map(|r| r.source_id.clone())
            .collect();
        assert!(train.is_disjoint(&test));
    }

    #[test]
    fn three_sources_split_two_to_one() {
        let corpus = test_corpus(3, 9);
        let counts = ShortClipCounts { reaction: 1, full_response: 1, silence: 1 };
        let manifest =
            build_short_clips(&corpus, &counts, 0.7, 1, &RuleTable::default()).unwrap();
        assert_eq!(manifest.records.len(), 3);
        // the underlying source assignment is 2 train / 1 test
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let ids: Vec<String> = corpus
            .sources
            .iter()
            .map(|s| s.timeline.source_id.clone())
            .collect();
        let assignment = split_sources(&ids, 0.7, &mut rng);
        let n_train = assignment.values().filter(|s| **s == Split::Train).count();
        assert_eq!((n_train, assignment.len() - n_train), (2, 1));
    }

    #[test]
    fn same_seed_gives_byte_identical_manifests() {
        let corpus = test_corpus(4, 11);
        let counts = ShortClipCounts { reaction: 5, full_response: 2, silence: 2 };
        let a = build_short_clips(&corpus, &counts, 0.7, 99, &RuleTable::default()).unwrap();
        let b = build_short_clips(&corpus, &counts, 0.7, 99, &RuleTable::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = build_short_clips(&corpus, &counts, 0.7, 100, &RuleTable::default()).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn shortfall_names_the_category() {
        let corpus = test_corpus(1, 13);
        let counts = ShortClipCounts { reaction: 100000, full_response: 1, silence: 1 };
        match build_short_clips(&corpus, &counts, 0.7, 1, &RuleTable::default()) {
            Err(Error::Shortfall { category, .. }) => assert_eq!(category, "reaction"),
            other => panic!("expected shortfall, got {other:?}"),
        }
    }

    #[test]
    fn manifest_file_round_trip() {
        let corpus = test_corpus(3, 17);
        let counts = ShortClipCounts { reaction: 4, full_response: 2, silence: 2 };
        let manifest =
            build_short_clips(&corpus, &counts, 0.7, 7, &RuleTable::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        manifest.save(dir.path(), "short_clips", None).unwrap();
        let back = CorpusManifest::load(dir.path(), "short_clips").unwrap();
        assert_eq!(manifest, back);
    }

    #[test]
    fn balanced_builder_is_exact_per_label() {
        let corpus = test_corpus(24, 19);
        let manifest = build_balanced(&corpus, 2, 3, &RuleTable::default()).unwrap();
        assert_eq!(manifest.records.len(), 18);
        for label in ResponseLabel::ALL {
            assert_eq!(manifest.class_counts.get(&label), Some(&2), "label {label}");
        }
    }

    /// Independent oracle for derive_action: literal full-scan restatement of
    /// the rule, structured differently from the production code.
    fn oracle_action(
        track: &[DiarizationEvent],
        listener: &str,
        t_end: f64,
        rules: &LabelRuleConfig,
    ) -> ListenerAction {
        let mut best: Option<&DiarizationEvent> = None;
        for e in track {
            if e.speaker_id == listener
                && e.onset_s > t_end
                && e.onset_s <= t_end + rules.horizon_s
                && best.is_none_or(|b| e.onset_s < b.onset_s)
            {
                best = Some(e);
            }
        }
        let Some(u) = best else {
            return ListenerAction::Silence;
        };
        if u.offset_s - u.onset_s > rules.brief_max_s {
            return ListenerAction::FullResponse(u.clone());
        }
        let mut continues = false;
        for e in track {
            if e.speaker_id == listener {
                continue;
            }
            if e.onset_s <= u.onset_s && u.onset_s < e.offset_s {
                continues = true;
            }
            if e.onset_s >= u.offset_s && e.onset_s <= u.offset_s + rules.resume_gap_s {
                continues = true;
            }
        }
        if continues {
            ListenerAction::Reaction(u.clone())
        } else {
            ListenerAction::FullResponse(u.clone())
        }
    }

    #[test]
    fn derive_action_matches_full_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rules = LabelRuleConfig::default();
        for _ in 0..200 {
            let mut track = Vec::new();
            for _ in 0..rng.random_range(0..12) {
                let onset: f64 = rng.random_range(0.0..60.0);
                let dur: f64 = rng.random_range(0.05..6.0);
                let speaker = if rng.random_range(0.0..1.0) < 0.5 { "a" } else { "b" };
                track.push(DiarizationEvent {
                    speaker_id: speaker.into(),
                    onset_s: onset,
                    offset_s: onset + dur,
                    text: None,
                });
            }
            for _ in 0..20 {
                let t_end: f64 = rng.random_range(0.0..60.0);
                let got = derive_action(&track, "b", t_end, &rules).unwrap();
                let want = oracle_action(&track, "b", t_end, &rules);
                assert_eq!(got, want, "t_end={t_end} track={track:?}");
            }
        }
    }
}
