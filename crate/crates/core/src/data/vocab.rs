//! Shared source/target vocabulary with fixed reserved ids.

use std::collections::HashMap;

use crate::batch::{EOS, MASK, N_RESERVED, PAD, SOS, UNK};

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

pub const RESERVED: [&str; 5] = ["[PAD]", "[SOS]", "[EOS]", "[MASK]", "[UNK]"];

impl Vocabulary {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut token_to_id: HashMap<String, u32> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for t in tokens {
            if !token_to_id.contains_key(&t) {
                token_to_id.insert(t.clone(), id_to_token.len() as u32);
                id_to_token.push(t);
            }
        }
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(|s| s.as_str())
            .unwrap_or("[UNK]")
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ids of ordinary (non-reserved) tokens.
    pub fn content_ids(&self) -> std::ops::Range<u32> {
        N_RESERVED..self.len() as u32
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

pub fn is_reserved(id: u32) -> bool {
    matches!(id, PAD | SOS | EOS | MASK | UNK)
}

/// Shared vocabulary over both languages: token types with count >=
/// min_count, ordered by (count desc, token asc) for determinism.
pub fn build_vocab<'a, I>(token_lists: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for t in list {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t.to_string()))
}
