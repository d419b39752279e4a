//! Compact token vocabulary for language-action strings.
//!
//! Tokens are the grammar's words, the `;` separator, the `no movement`
//! sentinel, and the integers 0 through 359, plus `<bos>` and `<eos>`.

use std::collections::HashMap;

use thiserror::Error;

use super::NO_MOVEMENT;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const MAX_NUMBER_TOKEN: u32 = 359;

const WORDS: [&str; 18] = [
    "move",
    "tilt",
    "rotate",
    "open",
    "close",
    "gripper",
    "forward",
    "backward",
    "left",
    "right",
    "up",
    "down",
    "back",
    "clockwise",
    "counterclockwise",
    "cm",
    "degree",
    "degrees",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {token:?} is not in the language-action vocabulary")]
pub struct VocabError {
    pub token: String,
}

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut tokens: Vec<String> = vec![
            "<bos>".into(),
            "<eos>".into(),
            NO_MOVEMENT.into(),
            ";".into(),
        ];
        tokens.extend(WORDS.iter().map(|w| w.to_string()));
        tokens.extend((0..=MAX_NUMBER_TOKEN).map(|n| n.to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Token ids for a language-action string, without `<bos>`/`<eos>`.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>, VocabError> {
        if text == NO_MOVEMENT {
            return Ok(vec![self.index[NO_MOVEMENT]]);
        }
        let mut ids = Vec::new();
        for (i, clause) in text.split("; ").enumerate() {
            if i > 0 {
                ids.push(self.index[";"]);
            }
            for word in clause.split(' ') {
                match self.index.get(word) {
                    Some(&id) if id > EOS => ids.push(id),
                    _ => {
                        return Err(VocabError {
                            token: word.to_string(),
                        })
                    }
                }
            }
        }
        Ok(ids)
    }

    pub fn detokenize(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            let Some(tok) = self.token(id) else { continue };
            if id == BOS || id == EOS {
                continue;
            }
            if tok == ";" {
                out.push(';');
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }
}
