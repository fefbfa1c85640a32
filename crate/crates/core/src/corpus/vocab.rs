use std::collections::HashMap;
use std::path::Path;

use crate::corpus::TokenizedDoc;
use crate::error::{Error, Result};
use crate::io;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = ";";

/// Tokens that always occupy the first indices, in this order.
pub const RESERVED: [&str; 5] = [PAD, UNK, BOS, EOS, SEP];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
pub const SEP_ID: usize = 4;

/// Bijection between tokens and dense indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("vocabulary token `{t}` appears twice")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Keeps the `max_size` most frequent tokens of the sources and gold
    /// phrases; equal counts are ordered lexicographically.
    pub fn build(docs: &[TokenizedDoc], max_size: usize) -> Result<Self> {
        if max_size < 1 {
            return Err(Error::InvalidInput("vocabulary max_size must be at least 1".into()));
        }
        if docs.is_empty() {
            return Err(Error::InvalidInput("cannot build a vocabulary from no documents".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            let gold = doc.gold_phrases.iter().flatten();
            for t in doc.tokens.iter().chain(gold) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        for r in RESERVED {
            counts.remove(r);
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of non-reserved tokens.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - RESERVED.len()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the `<unk>` index.
    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, line number = index.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::InvalidInput("vocabulary file must start with the reserved tokens".into()));
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_to_string(path)?)
    }
}
