//! Block attention mask for the prefix / language-action / action-expert
//! token layout.
//!
//! Rows are queries and columns are keys: `allowed(q, k)` means token `q`
//! may attend to token `k`. Tokens are laid out prefix first, then
//! language-action tokens, then action-expert tokens.
//!
//! | query \ key | prefix | language | action |
//! |-------------|--------|----------|--------|
//! | prefix      | all    | none     | none   |
//! | language    | all    | causal   | none   |
//! | action      | all    | none     | all    |

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    pub n_prefix: usize,
    pub n_lang: usize,
    pub n_act: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Prefix,
    Language,
    Action,
}

impl TokenLayout {
    pub fn new(n_prefix: usize, n_lang: usize, n_act: usize) -> Self {
        Self {
            n_prefix,
            n_lang,
            n_act,
        }
    }

    pub fn total(&self) -> usize {
        self.n_prefix + self.n_lang + self.n_act
    }

    pub fn class(&self, index: usize) -> TokenClass {
        if index < self.n_prefix {
            TokenClass::Prefix
        } else if index < self.n_prefix + self.n_lang {
            TokenClass::Language
        } else {
            TokenClass::Action
        }
    }

    /// Whether query `q` may attend to key `k`.
    pub fn rule(&self, q: usize, k: usize) -> bool {
        match (self.class(q), self.class(k)) {
            (TokenClass::Prefix, TokenClass::Prefix) => true,
            (TokenClass::Language, TokenClass::Prefix) => true,
            (TokenClass::Language, TokenClass::Language) => k <= q,
            (TokenClass::Action, TokenClass::Prefix) => true,
            (TokenClass::Action, TokenClass::Action) => true,
            _ => false,
        }
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let allowed = (0..n * n).map(|i| f(i / n, i % n)).collect();
        Self { n, allowed }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.n + k]
    }

    pub fn set(&mut self, q: usize, k: usize, value: bool) {
        self.allowed[q * self.n + k] = value;
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.allowed[q * self.n..(q + 1) * self.n]
    }

    pub fn cells(&self) -> &[bool] {
        &self.allowed
    }

    /// One line per query row, `1` for allowed and `0` for blocked.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::with_capacity(self.n * (self.n + 1));
        for q in 0..self.n {
            for &a in self.row(q) {
                out.push(if a { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Row-major bits, least significant bit first within each byte.
    pub fn to_packed_bits(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.allowed.len().div_ceil(8)];
        for (i, &a) in self.allowed.iter().enumerate() {
            if a {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        bytes
    }

    pub fn from_packed_bits(n: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != (n * n).div_ceil(8) {
            return None;
        }
        Some(Self::from_fn(n, |q, k| {
            let i = q * n + k;
            bytes[i / 8] >> (i % 8) & 1 == 1
        }))
    }
}

pub fn build_mask(layout: &TokenLayout) -> AttentionMask {
    AttentionMask::from_fn(layout.total(), |q, k| layout.rule(q, k))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskReport {
    Ok,
    SizeMismatch {
        expected: usize,
        found: usize,
    },
    Violation {
        query: usize,
        key: usize,
        expected: bool,
    },
}

impl std::fmt::Display for MaskReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskReport::Ok => f.write_str("ok"),
            MaskReport::SizeMismatch { expected, found } => {
                write!(
                    f,
                    "size mismatch: expected {expected}x{expected}, found {found}x{found}"
                )
            }
            MaskReport::Violation {
                query,
                key,
                expected,
            } => {
                write!(
                    f,
                    "violation at (query {query}, key {key}): expected {expected}"
                )
            }
        }
    }
}

/// Checks every cell in row-major order and reports the first mismatch.
pub fn check_mask(mask: &AttentionMask, layout: &TokenLayout) -> MaskReport {
    if mask.size() != layout.total() {
        return MaskReport::SizeMismatch {
            expected: layout.total(),
            found: mask.size(),
        };
    }
    for q in 0..mask.size() {
        for k in 0..mask.size() {
            let expected = layout.rule(q, k);
            if mask.get(q, k) != expected {
                return MaskReport::Violation {
                    query: q,
                    key: k,
                    expected,
                };
            }
        }
    }
    MaskReport::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(mask: &AttentionMask) -> Vec<Vec<bool>> {
        (0..mask.size()).map(|q| mask.row(q).to_vec()).collect()
    }

    #[test]
    fn single_prefix_token() {
        assert_eq!(
            rows(&build_mask(&TokenLayout::new(1, 0, 0))),
            vec![vec![true]]
        );
    }

    #[test]
    fn prefix_and_language() {
        let m = build_mask(&TokenLayout::new(2, 2, 0));
        assert_eq!(
            rows(&m),
            vec![
                vec![true, true, false, false],
                vec![true, true, false, false],
                vec![true, true, true, false],
                vec![true, true, true, true],
            ]
        );
    }

    #[test]
    fn action_rows_skip_language() {
        let m = build_mask(&TokenLayout::new(1, 1, 2));
        assert_eq!(m.row(2), &[true, false, true, true]);
        assert_eq!(m.row(3), &[true, false, true, true]);
        assert_eq!(m.row(1), &[true, true, false, false]);
    }

    #[test]
    fn flipped_cell_is_reported() {
        let layout = TokenLayout::new(2, 3, 2);
        let mut m = build_mask(&layout);
        assert_eq!(check_mask(&m, &layout), MaskReport::Ok);
        m.set(3, 5, true);
        assert_eq!(
            check_mask(&m, &layout),
            MaskReport::Violation {
                query: 3,
                key: 5,
                expected: false
            }
        );
    }

    #[test]
    fn size_mismatch() {
        let m = build_mask(&TokenLayout::new(1, 1, 1));
        assert!(matches!(
            check_mask(&m, &TokenLayout::new(2, 1, 1)),
            MaskReport::SizeMismatch { .. }
        ));
    }

    #[test]
    fn packed_bits_are_lsb_first() {
        let m = build_mask(&TokenLayout::new(2, 2, 0));
        // Rows 1100 1100 1110 1111 read LSB-first per byte.
        assert_eq!(m.to_packed_bits(), vec![0b0011_0011, 0b1111_0111]);
        assert_eq!(
            AttentionMask::from_packed_bits(4, &m.to_packed_bits()),
            Some(m)
        );
    }

    #[test]
    fn text_grid() {
        let m = build_mask(&TokenLayout::new(1, 1, 1));
        assert_eq!(m.to_text_grid(), "100\n110\n101\n");
    }
}
