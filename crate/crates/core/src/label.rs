//! The nine-way response taxonomy.
//!
//! Seven brief listener reactions, one turn-taking label and one silence
//! label. Variant order is fixed: the numeric indices are the canonical axis
//! order of every confusion matrix and logit vector in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the machine should do at a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseLabel {
    Affirmation,
    Gratitude,
    Farewell,
    Greeting,
    Question,
    Surprise,
    Pondering,
    FullResponse,
    Silence,
}

/// Number of classes in the taxonomy.
pub const NUM_LABELS: usize = 9;

impl ResponseLabel {
    /// All variants in canonical index order.
    pub const ALL: [ResponseLabel; NUM_LABELS] = [
        ResponseLabel::Affirmation,
        ResponseLabel::Gratitude,
        ResponseLabel::Farewell,
        ResponseLabel::Greeting,
        ResponseLabel::Question,
        ResponseLabel::Surprise,
        ResponseLabel::Pondering,
        ResponseLabel::FullResponse,
        ResponseLabel::Silence,
    ];

    /// The seven brief-reaction variants, in index order.
    pub const REACTIONS: [ResponseLabel; 7] = [
        ResponseLabel::Affirmation,
        ResponseLabel::Gratitude,
        ResponseLabel::Farewell,
        ResponseLabel::Greeting,
        ResponseLabel::Question,
        ResponseLabel::Surprise,
        ResponseLabel::Pondering,
    ];

    /// Canonical index in 0..9.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<ResponseLabel> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Format(format!("label index {index} out of range 0..{NUM_LABELS}")))
    }

    /// Stable snake_case name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            ResponseLabel::Affirmation => "affirmation",
            ResponseLabel::Gratitude => "gratitude",
            ResponseLabel::Farewell => "farewell",
            ResponseLabel::Greeting => "greeting",
            ResponseLabel::Question => "question",
            ResponseLabel::Surprise => "surprise",
            ResponseLabel::Pondering => "pondering",
            ResponseLabel::FullResponse => "full_response",
            ResponseLabel::Silence => "silence",
        }
    }

    pub fn from_name(name: &str) -> Result<ResponseLabel> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == name)
            .ok_or_else(|| Error::Format(format!("unknown label name {name:?}")))
    }

    /// True for the seven brief-reaction variants.
    pub fn is_reaction(self) -> bool {
        self.index() < 7
    }
}

impl std::fmt::Display for ResponseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_name_bijection() {
        assert_eq!(ResponseLabel::ALL.len(), NUM_LABELS);
        for (i, label) in ResponseLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(ResponseLabel::from_index(i).unwrap(), *label);
            assert_eq!(ResponseLabel::from_name(label.name()).unwrap(), *label);
        }
        assert!(ResponseLabel::from_index(9).is_err());
        assert!(ResponseLabel::from_name("backchannel").is_err());
    }

    #[test]
    fn taxonomy_order_is_fixed() {
        let names: Vec<&str> = ResponseLabel::ALL.iter().map(|l| l.name()).collect();
        assert_eq!(
            names,
            [
                "affirmation",
                "gratitude",
                "farewell",
                "greeting",
                "question",
                "surprise",
                "pondering",
                "full_response",
                "silence"
            ]
        );
    }

    #[test]
    fn reaction_partition() {
        for label in ResponseLabel::ALL {
            let expected = !matches!(
                label,
                ResponseLabel::FullResponse | ResponseLabel::Silence
            );
            assert_eq!(label.is_reaction(), expected);
        }
        assert_eq!(ResponseLabel::REACTIONS.len(), 7);
    }

    #[test]
    fn serde_round_trip_uses_snake_case() {
        let json = serde_json::to_string(&ResponseLabel::FullResponse).unwrap();
        assert_eq!(json, "\"full_response\"");
        let back: ResponseLabel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ResponseLabel::FullResponse);
    }
}
