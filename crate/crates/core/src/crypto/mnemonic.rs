//! Word encoding for air-gapped transfer of seeds and precursors.
//!
//! Layout: the payload bits are followed by `8 * len / 32` checksum bits taken
//! from the prefix of `hash(payload)`, and the result is split into 11-bit
//! groups indexing the shipped 2048-word list. 16 bytes give 12 words, 32
//! bytes give 24.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash;

const WORDLIST_TEXT: &str = include_str!("../../wordlist/english.txt");
const BITS_PER_WORD: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MnemonicError {
    #[error("payload must be 16 or 32 bytes, got {0}")]
    InvalidPayloadLength(usize),
    #[error("expected 12 or 24 words, got {0}")]
    WordCount(usize),
    #[error("word {position} ({word:?}) is not in the word list")]
    UnknownWord { position: usize, word: String },
    #[error("checksum mismatch")]
    Checksum,
}

/// The shipped word list, in file order (sorted, 2048 entries).
pub fn wordlist() -> &'static [&'static str] {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        let words: Vec<&str> = WORDLIST_TEXT.lines().collect();
        assert_eq!(words.len(), 2048, "word list must have 2048 entries");
        words
    })
}

fn word_index(word: &str) -> Option<usize> {
    wordlist().binary_search(&word).ok()
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mnemonic {
    words: Vec<String>,
}

impl Mnemonic {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Replaces the word at `position`, simulating a transcription slip.
    pub fn with_word(&self, position: usize, word: &str) -> Self {
        let mut words = self.words.clone();
        words[position] = word.to_owned();
        Self { words }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.words.join(" "))
    }
}

impl fmt::Debug for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mnemonic({} words)", self.words.len())
    }
}

impl FromStr for Mnemonic {
    type Err = MnemonicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let m = Mnemonic::from_words(s.split_whitespace());
        mnemonic_decode(&m)?;
        Ok(m)
    }
}

fn checksum_bits(payload_len: usize) -> usize {
    payload_len * 8 / 32
}

fn bit(data: &[u8], i: usize) -> bool {
    data[i / 8] >> (7 - i % 8) & 1 == 1
}

pub fn mnemonic_encode(payload: &[u8]) -> Result<Mnemonic, MnemonicError> {
    if payload.len() != 16 && payload.len() != 32 {
        return Err(MnemonicError::InvalidPayloadLength(payload.len()));
    }
    let cs = checksum_bits(payload.len());
    let digest = hash(payload);
    let total = payload.len() * 8 + cs;
    let bit_at = |i: usize| {
        if i < payload.len() * 8 {
            bit(payload, i)
        } else {
            bit(digest.as_bytes(), i - payload.len() * 8)
        }
    };
    let list = wordlist();
    let words = (0..total / BITS_PER_WORD)
        .map(|w| {
            let idx = (0..BITS_PER_WORD).fold(0usize, |acc, b| {
                acc << 1 | bit_at(w * BITS_PER_WORD + b) as usize
            });
            list[idx]
        })
        .collect::<Vec<_>>();
    Ok(Mnemonic::from_words(words))
}

pub fn mnemonic_decode(m: &Mnemonic) -> Result<Vec<u8>, MnemonicError> {
    let payload_len = match m.len() {
        12 => 16,
        24 => 32,
        n => return Err(MnemonicError::WordCount(n)),
    };
    let mut bits = Vec::with_capacity(m.len() * BITS_PER_WORD);
    for (position, word) in m.words.iter().enumerate() {
        let idx = word_index(word).ok_or_else(|| MnemonicError::UnknownWord {
            position,
            word: word.clone(),
        })?;
        bits.extend((0..BITS_PER_WORD).rev().map(|b| idx >> b & 1 == 1));
    }
    let mut payload = vec![0u8; payload_len];
    for (i, &set) in bits[..payload_len * 8].iter().enumerate() {
        if set {
            payload[i / 8] |= 1 << (7 - i % 8);
        }
    }
    let digest = hash(&payload);
    let expected = (0..checksum_bits(payload_len)).map(|i| bit(digest.as_bytes(), i));
    if !expected.eq(bits[payload_len * 8..].iter().copied()) {
        return Err(MnemonicError::Checksum);
    }
    Ok(payload)
}
