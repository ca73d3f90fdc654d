use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// The five Romance daughters plus their common ancestor.
///
/// The declaration order of the daughters is the canonical order used when
/// concatenating a cognate set into a single encoder input, and it is also the
/// column order of the dataset files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    Romanian,
    French,
    Italian,
    Spanish,
    Portuguese,
    Latin,
}

impl Language {
    pub const COUNT: usize = 6;

    pub const DAUGHTERS: [Language; 5] = [
        Language::Romanian,
        Language::French,
        Language::Italian,
        Language::Spanish,
        Language::Portuguese,
    ];

    pub const ALL: [Language; 6] = [
        Language::Romanian,
        Language::French,
        Language::Italian,
        Language::Spanish,
        Language::Portuguese,
        Language::Latin,
    ];

    /// Row of this language in the language embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Language> {
        Language::ALL.get(index).copied()
    }

    pub fn is_daughter(self) -> bool {
        self != Language::Latin
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::Romanian => "Romanian",
            Language::French => "French",
            Language::Italian => "Italian",
            Language::Spanish => "Spanish",
            Language::Portuguese => "Portuguese",
            Language::Latin => "Latin",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Language::Romanian => "ro",
            Language::French => "fr",
            Language::Italian => "it",
            Language::Spanish => "es",
            Language::Portuguese => "pt",
            Language::Latin => "la",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Language::ALL
            .into_iter()
            .find(|l| l.code() == lower || l.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| CorpusError::UnknownLanguage(s.to_string()))
    }
}
