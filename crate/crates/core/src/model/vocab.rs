//! Closed vocabulary over mini-language lexemes.
//!
//! The model tokenizer is the lexical tokenizer plus this id mapping, so
//! difference masks computed over lexed tokens line up one-to-one with the
//! ids the model consumes. Encoding is strict: a lexeme outside the
//! vocabulary is an error rather than an unk, which keeps training data and
//! generated text inside the same closed world.

use crate::error::{Error, Result};
use crate::lexdiff::{tokenize, TokenSeq};
use std::collections::HashMap;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// The fixed vocabulary of the synthetic pipeline: two specials, the
    /// mini-language keywords, builtins, a small identifier pool, digits
    /// and operators. 64 entries total.
    pub fn synthetic() -> Self {
        let tokens: Vec<String> = [
            BOS, EOS, // specials
            "def", "return", "if", "else", "elif", "for", "while", "in", "not", "and", "or",
            "pass", // keywords
            "True", "False", "None", "print", "len", "range", "max", "min", "abs", // builtins
            "a", "b", "c", "d", "n", "x", "y", "i", "v", "f", "g", "data", "total", "res", "out",
            "flag", "val", // identifiers
            "0", "1", "2", "10", // numbers
            "=", "==", "!=", "<", ">", "<=", ">=", "+", "-", "*", "/", "%", "(", ")", "[", "]",
            ":", ",", ".", "\n", // operators
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Vocab::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }

    pub fn id(&self, text: &str) -> Result<u32> {
        self.index
            .get(text)
            .copied()
            .ok_or_else(|| Error::UnknownToken {
                text: text.to_string(),
            })
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::InvalidParameter(format!("token id {id} out of range")))
    }

    pub fn encode_tokens(&self, tokens: &TokenSeq) -> Result<Vec<u32>> {
        tokens.iter().map(|t| self.id(&t.text)).collect()
    }

    pub fn encode_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<u32>> {
        texts.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Lex then encode.
    pub fn encode_source(&self, src: &str) -> Result<Vec<u32>> {
        self.encode_tokens(&tokenize(src)?)
    }

    /// Renders ids back to source text. Tokens are space-separated except
    /// around newlines; specials are skipped. Re-lexing the result gives
    /// back the same non-special id sequence.
    pub fn decode_to_source(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id)?;
            if tok == BOS || tok == EOS {
                continue;
            }
            if tok == "\n" {
                out.push('\n');
                continue;
            }
            if !(out.is_empty() || out.ends_with('\n')) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_vocab_shape() {
        let v = Vocab::synthetic();
        assert_eq!(v.len(), 64);
        assert_eq!(v.bos(), 0);
        assert_eq!(v.eos(), 1);
        assert_ne!(v.bos(), v.eos());
    }

    #[test]
    fn strict_encoding() {
        let v = Vocab::synthetic();
        assert!(v.encode_source("if a <= b :\nreturn b\n").is_ok());
        assert!(matches!(
            v.encode_source("zebra = 1\n"),
            Err(Error::UnknownToken { .. })
        ));
    }

    #[test]
    fn decode_then_encode_round_trips() {
        let v = Vocab::synthetic();
        let ids = v.encode_source("if a <= b :\nreturn b\nreturn a\n").unwrap();
        let src = v.decode_to_source(&ids).unwrap();
        assert_eq!(v.encode_source(&src).unwrap(), ids);
        assert_eq!(src, "if a <= b :\nreturn b\nreturn a\n");
    }

    #[test]
    fn adjacent_operators_do_not_merge_on_decode() {
        let v = Vocab::synthetic();
        // "<" followed by "=" must not come back as "<="
        let ids = v.encode_texts(&["a", "<", "=", "b"]).unwrap();
        let src = v.decode_to_source(&ids).unwrap();
        assert_eq!(src, "a < = b");
        assert_eq!(v.encode_source(&src).unwrap(), ids);
    }

    #[test]
    fn specials_skipped_in_rendering() {
        let v = Vocab::synthetic();
        let mut ids = vec![v.bos()];
        ids.extend(v.encode_source("return a").unwrap());
        ids.push(v.eos());
        assert_eq!(v.decode_to_source(&ids).unwrap(), "return a");
    }

    #[test]
    fn every_vocab_entry_lexes_back_to_itself() {
        let v = Vocab::synthetic();
        for id in 0..v.len() as u32 {
            let tok = v.token(id).unwrap();
            if tok == BOS || tok == EOS {
                continue;
            }
            let round = v.encode_source(tok).unwrap();
            assert_eq!(round, vec![id], "token {tok:?} must lex to itself");
        }
    }
}
