//! Byte-level BPE tokenizer compatible with the released GPT-2 vocabulary.
//!
//! Text is first split by the GPT-2 pre-tokenizer regex (which needs a
//! lookahead, hence `fancy-regex`), each piece's bytes are mapped through the
//! reversible byte↔unicode table, and merges are applied lowest-rank-first
//! until no adjacent pair has a rule. Merges operate on token *ids*: every
//! merge operand and every merge result must itself be a vocabulary entry,
//! which is validated at load time so `encode` is total afterwards.
//!
//! The tokenizer is immutable after load; concurrent `encode`/`decode` calls
//! are safe.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// GPT-2 pre-tokenizer pattern: contractions, letter runs, number runs,
/// punctuation runs, and whitespace (with a lookahead that leaves the final
/// space of a run attached to the following word).
const PRETOKENIZE_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

#[derive(Debug, Clone, Copy)]
struct MergeRule {
    rank: u32,
    merged: u32,
}

/// Loaded vocabulary + merge table.
pub struct Tokenizer {
    /// Token string → id.
    encoder: HashMap<String, u32>,
    /// id → token string (dense by id).
    decoder: Vec<Option<String>>,
    /// (left id, right id) → merge rule.
    merges: HashMap<(u32, u32), MergeRule>,
    /// Byte value → id of its single-byte token.
    byte_token: [u32; 256],
    /// Inverse of the byte→unicode mapping used by token strings.
    byte_of_unicode: HashMap<char, u8>,
    pattern: fancy_regex::Regex,
}

/// The reversible byte→unicode table: printable latin bytes map to
/// themselves, everything else to consecutive codepoints from U+0100.
pub(crate) fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut assigned = [false; 256];
    let printable = (b'!'..=b'~').chain(0xA1..=0xAC).chain(0xAE..=0xFF);
    for b in printable {
        table[b as usize] = char::from_u32(b as u32).unwrap();
        assigned[b as usize] = true;
    }
    let mut n = 0u32;
    for b in 0..256 {
        if !assigned[b] {
            table[b] = char::from_u32(256 + n).unwrap();
            n += 1;
        }
    }
    table
}

impl Tokenizer {
    /// Loads `vocab.json` (token string → id) and a merges text file
    /// (optional `#version` header, then one space-separated pair per line).
    ///
    /// Validates that all 256 single-byte tokens exist and that every merge's
    /// operands and concatenation are vocabulary entries.
    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Tokenizer> {
        let vocab_text = std::fs::read_to_string(vocab_path)
            .map_err(|e| Error::io(vocab_path.display().to_string(), e))?;
        let encoder: HashMap<String, u32> = serde_json::from_str(&vocab_text)
            .map_err(|e| Error::TokenizerLoad(format!("{}: {}", vocab_path.display(), e)))?;
        if encoder.is_empty() {
            return Err(Error::TokenizerLoad(format!("{}: empty vocabulary", vocab_path.display())));
        }

        let max_id = *encoder.values().max().unwrap() as usize;
        let mut decoder: Vec<Option<String>> = vec![None; max_id + 1];
        for (tok, &id) in &encoder {
            if let Some(prev) = &decoder[id as usize] {
                return Err(Error::TokenizerLoad(format!(
                    "id {} assigned to both {:?} and {:?}",
                    id, prev, tok
                )));
            }
            decoder[id as usize] = Some(tok.clone());
        }

        let unicode_of_byte = bytes_to_unicode();
        let mut byte_of_unicode = HashMap::with_capacity(256);
        let mut byte_token = [0u32; 256];
        for b in 0..256usize {
            let ch = unicode_of_byte[b];
            byte_of_unicode.insert(ch, b as u8);
            let key = ch.to_string();
            byte_token[b] = *encoder.get(&key).ok_or_else(|| {
                Error::TokenizerLoad(format!("vocabulary lacks single-byte token {:?} (byte {})", key, b))
            })?;
        }

        let merges_text = std::fs::read_to_string(merges_path)
            .map_err(|e| Error::io(merges_path.display().to_string(), e))?;
        let mut merges = HashMap::new();
        let mut rank = 0u32;
        for (lineno, line) in merges_text.lines().enumerate() {
            if line.is_empty() || (lineno == 0 && line.starts_with("#version")) {
                continue;
            }
            let mut parts = line.split(' ');
            let (left, right) = match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => (l, r),
                _ => {
                    return Err(Error::TokenizerLoad(format!(
                        "{}:{}: expected exactly two space-separated symbols",
                        merges_path.display(),
                        lineno + 1
                    )))
                }
            };
            let lookup = |sym: &str| {
                encoder.get(sym).copied().ok_or_else(|| {
                    Error::TokenizerLoad(format!(
                        "{}:{}: merge symbol {:?} not in vocabulary",
                        merges_path.display(),
                        lineno + 1,
                        sym
                    ))
                })
            };
            let left_id = lookup(left)?;
            let right_id = lookup(right)?;
            let merged = lookup(&format!("{}{}", left, right))?;
            if merges.insert((left_id, right_id), MergeRule { rank, merged }).is_some() {
                return Err(Error::TokenizerLoad(format!(
                    "{}:{}: duplicate merge {:?} {:?}",
                    merges_path.display(),
                    lineno + 1,
                    left,
                    right
                )));
            }
            rank += 1;
        }

        let pattern = fancy_regex::Regex::new(PRETOKENIZE_PATTERN)
            .map_err(|e| Error::TokenizerLoad(format!("pre-tokenizer pattern: {}", e)))?;

        Ok(Tokenizer {
            encoder,
            decoder,
            merges,
            byte_token,
            byte_of_unicode,
            pattern,
        })
    }

    /// Number of vocabulary entries.
    pub fn vocab_size(&self) -> usize {
        self.encoder.len()
    }

    /// Id of a literal token string, if present.
    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.encoder.get(token).copied()
    }

    /// Encodes text to token ids. Total for any input: every byte has a
    /// single-byte token to fall back on. No special tokens are injected.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut word = Vec::new();
        for m in self.pattern.find_iter(text) {
            // The pattern has no nested quantifiers over the same class, so
            // backtracking cannot blow up on finite input.
            let piece = m.expect("pre-tokenizer regex failed").as_str();
            word.clear();
            word.extend(piece.bytes().map(|b| self.byte_token[b as usize]));
            self.merge_in_place(&mut word);
            ids.extend_from_slice(&word);
        }
        ids
    }

    /// Applies merge rules to one pre-token, lowest rank first, merging every
    /// occurrence of the chosen pair per round (left-to-right, non-overlapping).
    fn merge_in_place(&self, word: &mut Vec<u32>) {
        while word.len() >= 2 {
            let mut best: Option<(u32, (u32, u32), u32)> = None;
            for pair in word.windows(2) {
                let key = (pair[0], pair[1]);
                if let Some(rule) = self.merges.get(&key) {
                    if best.map_or(true, |(rank, _, _)| rule.rank < rank) {
                        best = Some((rule.rank, key, rule.merged));
                    }
                }
            }
            let Some((_, (left, right), merged)) = best else {
                break;
            };
            let mut write = 0;
            let mut read = 0;
            while read < word.len() {
                if read + 1 < word.len() && word[read] == left && word[read + 1] == right {
                    word[write] = merged;
                    read += 2;
                } else {
                    word[write] = word[read];
                    read += 1;
                }
                write += 1;
            }
            word.truncate(write);
        }
    }

    /// Decodes ids back to text. Unknown ids are an error; byte sequences
    /// that aren't valid UTF-8 decode lossily (replacement characters).
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for &id in ids {
            let token = self
                .decoder
                .get(id as usize)
                .and_then(|t| t.as_deref())
                .ok_or(Error::UnknownTokenId(id))?;
            for ch in token.chars() {
                let b = self.byte_of_unicode.get(&ch).ok_or_else(|| {
                    Error::TokenizerLoad(format!("token {:?} contains unmapped character {:?}", token, ch))
                })?;
                bytes.push(*b);
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer")
            .field("vocab_size", &self.encoder.len())
            .field("merges", &self.merges.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    /// Writes a minimal byte-complete vocabulary (the 256 single-byte tokens,
    /// ids 0..256) plus `extra` tokens, and a merges file, to temp files.
    fn synthetic_files(extra: &[&str], merge_lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let table = bytes_to_unicode();
        let mut vocab = serde_json::Map::new();
        for b in 0..256usize {
            vocab.insert(table[b].to_string(), serde_json::json!(b as u32));
        }
        for (i, tok) in extra.iter().enumerate() {
            vocab.insert(tok.to_string(), serde_json::json!(256 + i as u32));
        }
        let vocab_path = dir.path().join("vocab.json");
        std::fs::write(&vocab_path, serde_json::to_string(&vocab).unwrap()).unwrap();
        let merges_path = dir.path().join("merges.txt");
        let mut f = std::fs::File::create(&merges_path).unwrap();
        writeln!(f, "#version: 0.2").unwrap();
        for line in merge_lines {
            writeln!(f, "{}", line).unwrap();
        }
        drop(f);
        (dir, vocab_path, merges_path)
    }

    #[test]
    fn byte_table_matches_known_mappings() {
        let table = bytes_to_unicode();
        assert_eq!(table[b'!' as usize], '!');
        assert_eq!(table[b'A' as usize], 'A');
        assert_eq!(table[b'~' as usize], '~');
        // Space and newline are outside the printable set and get remapped.
        assert_eq!(table[b' ' as usize], '\u{120}'); // 'Ġ'
        assert_eq!(table[b'\n' as usize], '\u{10A}'); // 'Ċ'
        assert_eq!(table[b'\t' as usize], '\u{109}');
        // The table is a bijection.
        let mut seen = std::collections::HashSet::new();
        for &c in &table {
            assert!(seen.insert(c));
        }
    }

    #[test]
    fn no_merges_falls_back_to_byte_tokens() {
        let (_dir, vocab, merges) = synthetic_files(&[], &[]);
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        let ids = tok.encode("Hi!");
        assert_eq!(ids, vec![b'H' as u32, b'i' as u32, b'!' as u32]);
        assert_eq!(tok.decode(&ids).unwrap(), "Hi!");
    }

    #[test]
    fn merges_apply_lowest_rank_first() {
        let (_dir, vocab, merges) = synthetic_files(
            &["he", "ll", "hell", "hello"],
            &["h e", "l l", "he ll", "hell o"],
        );
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        assert_eq!(tok.encode("hello"), vec![tok.token_id("hello").unwrap()]);
        // Partial word stops at the deepest applicable merge.
        assert_eq!(tok.encode("hell"), vec![tok.token_id("hell").unwrap()]);
        assert_eq!(
            tok.encode("hel"),
            vec![tok.token_id("he").unwrap(), b'l' as u32]
        );
    }

    #[test]
    fn merge_collapses_every_occurrence_per_round() {
        let (_dir, vocab, merges) = synthetic_files(&["aa"], &["a a"]);
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        let aa = tok.token_id("aa").unwrap();
        // "aaaa" → two non-overlapping "aa" merges in one round.
        assert_eq!(tok.encode("aaaa"), vec![aa, aa]);
        // Odd count leaves a trailing single byte.
        assert_eq!(tok.encode("aaaaa"), vec![aa, aa, b'a' as u32]);
    }

    #[test]
    fn pretokenizer_keeps_leading_space_with_word() {
        let (_dir, vocab, merges) = synthetic_files(&["Ġa"], &["Ġ a"]);
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        // " a a" splits into [" a", " a"], each merging to one token.
        let ga = tok.token_id("Ġa").unwrap();
        assert_eq!(tok.encode(" a a"), vec![ga, ga]);
    }

    #[test]
    fn encode_empty_is_empty() {
        let (_dir, vocab, merges) = synthetic_files(&[], &[]);
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        assert_eq!(tok.encode(""), Vec::<u32>::new());
    }

    #[test]
    fn decode_unknown_id_is_an_error() {
        let (_dir, vocab, merges) = synthetic_files(&[], &[]);
        let tok = Tokenizer::load(&vocab, &merges).unwrap();
        assert!(matches!(tok.decode(&[9999]), Err(Error::UnknownTokenId(9999))));
    }

    #[test]
    fn load_rejects_missing_byte_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let vocab_path = dir.path().join("vocab.json");
        std::fs::write(&vocab_path, r#"{"a": 0}"#).unwrap();
        let merges_path = dir.path().join("merges.txt");
        std::fs::write(&merges_path, "#version: 0.2\n").unwrap();
        assert!(matches!(
            Tokenizer::load(&vocab_path, &merges_path),
            Err(Error::TokenizerLoad(_))
        ));
    }

    #[test]
    fn load_rejects_malformed_merge_line() {
        let (_dir, vocab, _) = synthetic_files(&[], &[]);
        let dir2 = tempfile::tempdir().unwrap();
        let merges_path = dir2.path().join("merges.txt");
        std::fs::write(&merges_path, "#version: 0.2\na b c\n").unwrap();
        let err = Tokenizer::load(&vocab, &merges_path).unwrap_err();
        assert!(err.to_string().contains(":2"), "error should name the line: {}", err);
    }

    #[test]
    fn load_rejects_merge_with_unknown_result() {
        // "a b" merge whose concatenation "ab" is not in the vocabulary.
        let (_dir, vocab, merges) = synthetic_files(&[], &["a b"]);
        assert!(matches!(Tokenizer::load(&vocab, &merges), Err(Error::TokenizerLoad(_))));
    }

    proptest! {
        /// With a byte-complete vocabulary, encode→decode is the identity for
        /// any string, merges or not.
        #[test]
        fn round_trip_is_identity(text in "\\PC*") {
            let (_dir, vocab, merges) = synthetic_files(&["he", "ll"], &["h e", "l l"]);
            let tok = Tokenizer::load(&vocab, &merges).unwrap();
            let ids = tok.encode(&text);
            prop_assert_eq!(tok.decode(&ids).unwrap(), text);
        }
    }
}
