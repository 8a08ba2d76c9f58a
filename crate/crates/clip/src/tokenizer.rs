//! Byte-level BPE tokenizer compatible with the CLIP text encoder.

use std::collections::HashMap;
use std::io::Read;
use std::sync::{Mutex, OnceLock};

use flate2::read::GzDecoder;
use regex::Regex;

/// Token sequence length the text encoder expects.
pub const CONTEXT_LENGTH: usize = 77;
pub const START_OF_TEXT: &str = "<start_of_text>";
pub const END_OF_TEXT: &str = "<end_of_text>";

// Merge lines used out of the vocabulary file (the first line is a header).
const MERGE_COUNT: usize = 49152 - 256 - 2;

static SHIPPED_VOCAB: &[u8] = include_bytes!("../assets/bpe_simple_vocab_16e6.txt.gz");

#[derive(thiserror::Error, Debug)]
pub enum TokenizerError {
    #[error("reading vocabulary: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Token ids padded with zeros to [`CONTEXT_LENGTH`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    pub ids: [i64; CONTEXT_LENGTH],
    /// Number of ids before the padding, start and end tokens included.
    pub len: usize,
    pub truncated: bool,
}

impl TokenizedText {
    /// 1 over real tokens, 0 over padding.
    pub fn attention_mask(&self) -> [i64; CONTEXT_LENGTH] {
        let mut mask = [0; CONTEXT_LENGTH];
        mask[..self.len].fill(1);
        mask
    }
}

pub struct ClipTokenizer {
    encoder: HashMap<String, u32>,
    decoder: Vec<String>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
    pattern: Regex,
    cache: Mutex<HashMap<String, Vec<u32>>>,
    sot: u32,
    eot: u32,
}

impl std::fmt::Debug for ClipTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClipTokenizer").field("vocab_size", &self.vocab_size()).finish()
    }
}

/// Printable stand-ins for the 256 byte values, so BPE never sees
/// whitespace or control characters. Pairs come in vocabulary order:
/// bytes that are already printable first, then the rest.
fn byte_alphabet() -> Vec<(u8, char)> {
    let mut printable: Vec<u32> = (u32::from('!')..=u32::from('~'))
        .chain(u32::from('¡')..=u32::from('¬'))
        .chain(u32::from('®')..=u32::from('ÿ'))
        .collect();
    let mut chars: Vec<u32> = printable.clone();
    let mut n = 0;
    for b in 0..256u32 {
        if !printable.contains(&b) {
            printable.push(b);
            chars.push(256 + n);
            n += 1;
        }
    }
    printable
        .into_iter()
        .zip(chars)
        .map(|(b, c)| (b as u8, char::from_u32(c).expect("valid code point")))
        .collect()
}

fn clean(text: &str) -> String {
    let once = html_escape::decode_html_entities(text);
    let twice = html_escape::decode_html_entities(&once);
    twice.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl ClipTokenizer {
    /// The tokenizer built from the vocabulary bundled with this crate.
    /// Parsed once per process.
    pub fn shipped() -> &'static ClipTokenizer {
        static SHIPPED: OnceLock<ClipTokenizer> = OnceLock::new();
        SHIPPED.get_or_init(|| {
            ClipTokenizer::from_gzip(SHIPPED_VOCAB).expect("bundled vocabulary is valid")
        })
    }

    pub fn from_gzip<R: Read>(reader: R) -> Result<Self, TokenizerError> {
        let mut text = String::new();
        GzDecoder::new(reader).read_to_string(&mut text)?;
        Self::from_merges(&text)
    }

    /// Build from the plain-text merges file: a header line followed by one
    /// space-separated pair per line.
    pub fn from_merges(text: &str) -> Result<Self, TokenizerError> {
        let mut merges = Vec::with_capacity(MERGE_COUNT);
        for (i, line) in text.split('\n').enumerate().skip(1).take(MERGE_COUNT) {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => merges.push((a.to_owned(), b.to_owned())),
                _ => {
                    return Err(TokenizerError::Format {
                        line: i + 1,
                        message: format!("expected two symbols, got {line:?}"),
                    })
                }
            }
        }

        let alphabet = byte_alphabet();
        let mut byte_encoder = ['\0'; 256];
        for &(b, c) in &alphabet {
            byte_encoder[b as usize] = c;
        }
        let mut decoder: Vec<String> = alphabet.iter().map(|(_, c)| c.to_string()).collect();
        decoder.extend(alphabet.iter().map(|(_, c)| format!("{c}</w>")));
        decoder.extend(merges.iter().map(|(a, b)| format!("{a}{b}")));
        decoder.push(START_OF_TEXT.to_owned());
        decoder.push(END_OF_TEXT.to_owned());
        let encoder: HashMap<String, u32> =
            decoder.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        let ranks = merges.into_iter().enumerate().map(|(i, m)| (m, i)).collect();
        let pattern = Regex::new(&format!(
            r"(?i){START_OF_TEXT}|{END_OF_TEXT}|'s|'t|'re|'ve|'m|'ll|'d|[\p{{L}}]+|[\p{{N}}]|[^\s\p{{L}}\p{{N}}]+"
        ))
        .expect("static pattern");

        Ok(ClipTokenizer {
            sot: encoder[START_OF_TEXT],
            eot: encoder[END_OF_TEXT],
            byte_decoder: alphabet.iter().map(|&(b, c)| (c, b)).collect(),
            encoder,
            decoder,
            ranks,
            byte_encoder,
            pattern,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn start_of_text(&self) -> u32 {
        self.sot
    }

    pub fn end_of_text(&self) -> u32 {
        self.eot
    }

    /// Token ids of the cleaned text, without start or end tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let cleaned = clean(text);
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&cleaned) {
            ids.extend(self.bpe_ids(m.as_str()));
        }
        ids
    }

    /// Encode with start and end tokens, padded or truncated to the context
    /// length. A truncated sequence still ends with the end token.
    pub fn tokenize(&self, text: &str) -> TokenizedText {
        let mut seq = Vec::with_capacity(CONTEXT_LENGTH);
        seq.push(self.sot);
        seq.extend(self.encode(text));
        seq.push(self.eot);
        let truncated = seq.len() > CONTEXT_LENGTH;
        if truncated {
            seq.truncate(CONTEXT_LENGTH);
            seq[CONTEXT_LENGTH - 1] = self.eot;
        }
        let mut ids = [0i64; CONTEXT_LENGTH];
        for (slot, id) in ids.iter_mut().zip(&seq) {
            *slot = i64::from(*id);
        }
        TokenizedText { ids, len: seq.len(), truncated }
    }

    /// Inverse of [`encode`](Self::encode) up to cleaning and word spacing.
    pub fn decode(&self, ids: &[u32]) -> String {
        let joined: String = ids
            .iter()
            .filter_map(|id| self.decoder.get(*id as usize))
            .map(String::as_str)
            .collect();
        let bytes: Vec<u8> = joined
            .chars()
            .filter_map(|c| self.byte_decoder.get(&c).copied())
            .collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        text.replace("</w>", " ")
    }

    fn bpe_ids(&self, token: &str) -> Vec<u32> {
        match token {
            START_OF_TEXT => return vec![self.sot],
            END_OF_TEXT => return vec![self.eot],
            _ => {}
        }
        if let Some(hit) = self.cache.lock().expect("cache lock").get(token) {
            return hit.clone();
        }
        let mapped: String = token.bytes().map(|b| self.byte_encoder[b as usize]).collect();
        let ids: Vec<u32> = self
            .bpe(&mapped)
            .iter()
            .map(|piece| self.encoder[piece.as_str()])
            .collect();
        self.cache.lock().expect("cache lock").insert(token.to_owned(), ids.clone());
        ids
    }

    /// Repeatedly merge the lowest-ranked adjacent pair. The last symbol
    /// carries the end-of-word marker.
    fn bpe(&self, token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        let mut word: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
        if let Some(last) = word.last_mut() {
            last.push_str("</w>");
        }
        loop {
            let best = word
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|r| (*r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((first, second)) = best else { break };
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut word[i]));
                    i += 1;
                }
            }
            word = merged;
            if word.len() == 1 {
                break;
            }
        }
        word
    }
}
