//! Subtyping of reaction transcripts into the seven reaction labels.
//!
//! A deterministic keyword/pattern table stands in for a learned categorizer;
//! anything matching nothing falls through to `affirmation`. The categorizer
//! is a trait so a smarter implementation can be swapped in.

use crate::label::ResponseLabel;

/// Outcome of subtyping one transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReactionOutcome {
    pub label: ResponseLabel,
    /// Set when the input was empty and the default was used.
    pub empty_input: bool,
}

/// Maps a reaction transcript to one of the seven reaction labels.
pub trait ReactionCategorizer {
    fn categorize(&self, text: &str) -> ReactionOutcome;
}

/// Fixed precedence order: first match wins, affirmation is the fallback.
const PRECEDENCE: [ResponseLabel; 6] = [
    ResponseLabel::Gratitude,
    ResponseLabel::Farewell,
    ResponseLabel::Greeting,
    ResponseLabel::Question,
    ResponseLabel::Surprise,
    ResponseLabel::Pondering,
];

/// Case-insensitive keyword and phrase lookup table.
#[derive(Debug, Clone)]
pub struct RuleTable {
    phrases: Vec<(ResponseLabel, Vec<Vec<String>>)>,
}

fn phrase_list(items: &[&str]) -> Vec<Vec<String>> {
    items
        .iter()
        .map(|p| crate::frontend::split_tokens(p))
        .collect()
}

impl Default for RuleTable {
    fn default() -> Self {
        let phrases = vec![
            (
                ResponseLabel::Gratitude,
                phrase_list(&["thank", "thanks", "appreciate", "grateful", "cheers"]),
            ),
            (
                ResponseLabel::Farewell,
                phrase_list(&["bye", "goodbye", "farewell", "see you", "take care", "good night"]),
            ),
            (
                ResponseLabel::Greeting,
                phrase_list(&["hello", "hi", "hey", "good morning", "good afternoon", "welcome"]),
            ),
            (
                ResponseLabel::Question,
                phrase_list(&["what", "why", "how", "when", "where", "who"]),
            ),
            (
                ResponseLabel::Surprise,
                phrase_list(&["wow", "whoa", "no way", "oh my", "unbelievable", "incredible", "amazing"]),
            ),
            (
                ResponseLabel::Pondering,
                phrase_list(&["hmm", "hm", "um", "let me think", "let's see", "interesting"]),
            ),
        ];
        RuleTable { phrases }
    }
}

impl RuleTable {
    fn matches(&self, label: ResponseLabel, tokens: &[String], trailing_question: bool) -> bool {
        if label == ResponseLabel::Question && trailing_question {
            return true;
        }
        let Some((_, phrases)) = self.phrases.iter().find(|(l, _)| *l == label) else {
            return false;
        };
        phrases.iter().any(|phrase| {
            tokens
                .windows(phrase.len().max(1))
                .any(|w| w.iter().zip(phrase.iter()).all(|(a, b)| a == b) && w.len() == phrase.len())
        })
    }
}

impl ReactionCategorizer for RuleTable {
    fn categorize(&self, text: &str) -> ReactionOutcome {
        let tokens = crate::frontend::split_tokens(text);
        if tokens.is_empty() {
            return ReactionOutcome {
                label: ResponseLabel::Affirmation,
                empty_input: true,
            };
        }
        let trailing_question = tokens.last().map(String::as_str) == Some("?");
        for label in PRECEDENCE {
            if self.matches(label, &tokens, trailing_question) {
                return ReactionOutcome { label, empty_input: false };
            }
        }
        ReactionOutcome {
            label: ResponseLabel::Affirmation,
            empty_input: false,
        }
    }
}

/// Subtypes a reaction transcript with the default rule table.
pub fn classify_reaction(text: &str, table: &RuleTable) -> ResponseLabel {
    table.categorize(text).label
}
