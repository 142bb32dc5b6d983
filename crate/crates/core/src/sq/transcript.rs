use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub id: Arc<str>,
    pub response: f64,
}

/// Ordered (query id, response) log of one algorithm run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    budget_used: usize,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: Arc<str>, response: f64) {
        self.entries.push(TranscriptEntry { id, response });
        self.budget_used = self.entries.len();
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn budget_used(&self) -> usize {
        self.budget_used
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn responses(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.response)
    }

    /// Same ids and bit-identical responses.
    pub fn bitwise_eq(&self, other: &Transcript) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.id == b.id && a.response.to_bits() == b.response.to_bits())
    }
}
