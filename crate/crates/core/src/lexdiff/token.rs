//! Lexical tokenizer for the mini language.
//!
//! Comments (`# ...`) and insignificant whitespace are dropped; every `\n`
//! becomes a newline token so that statement structure survives. Each token
//! carries its byte span into the original source plus 1-based line/column.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Op,
    Newline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// Byte offset of the first byte, inclusive.
    pub start: usize,
    /// Byte offset past the last byte, exclusive.
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenSeq { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.tokens.iter()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> Option<&Token> {
        self.tokens.get(i)
    }

    /// Token texts, in order. This is the view the diff and the model share.
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn into_texts(self) -> Vec<String> {
        self.tokens.into_iter().map(|t| t.text).collect()
    }
}

impl std::ops::Index<usize> for TokenSeq {
    type Output = Token;
    fn index(&self, i: usize) -> &Token {
        &self.tokens[i]
    }
}

/// Multi-character operators, longest first so maximal munch works.
const MULTI_OPS: [&str; 7] = ["**", "//", "<=", ">=", "==", "!=", "->"];
const SINGLE_OPS: [char; 19] = [
    '=', '<', '>', '+', '-', '*', '/', '%', '(', ')', '[', ']', '{', '}', ':', ',', '.', ';', '!',
];

pub fn tokenize(src: &str) -> Result<TokenSeq> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line: u32 = 1;
    let mut line_start = 0usize;

    while i < bytes.len() {
        let b = bytes[i];
        let column = (i - line_start + 1) as u32;
        match b {
            b'\n' => {
                tokens.push(Token {
                    text: "\n".to_string(),
                    kind: TokenKind::Newline,
                    start: i,
                    end: i + 1,
                    line,
                    column,
                });
                i += 1;
                line += 1;
                line_start = i;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'\'' | b'"' => {
                let quote = b;
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() || bytes[i] == b'\n' {
                        return Err(Error::Lex {
                            offset: start,
                            reason: "unterminated string literal".to_string(),
                        });
                    }
                    if bytes[i] == b'\\' && i + 1 < bytes.len() {
                        i += 2;
                        continue;
                    }
                    if bytes[i] == quote {
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                tokens.push(Token {
                    text: src[start..i].to_string(),
                    kind: TokenKind::Str,
                    start,
                    end: i,
                    line,
                    column,
                });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                tokens.push(Token {
                    text: src[start..i].to_string(),
                    kind: TokenKind::Number,
                    start,
                    end: i,
                    line,
                    column,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    text: src[start..i].to_string(),
                    kind: TokenKind::Ident,
                    start,
                    end: i,
                    line,
                    column,
                });
            }
            _ => {
                let rest = &src[i..];
                if let Some(op) = MULTI_OPS.iter().find(|op| rest.starts_with(**op)) {
                    tokens.push(Token {
                        text: (*op).to_string(),
                        kind: TokenKind::Op,
                        start: i,
                        end: i + op.len(),
                        line,
                        column,
                    });
                    i += op.len();
                } else if SINGLE_OPS.contains(&(b as char)) {
                    tokens.push(Token {
                        text: (b as char).to_string(),
                        kind: TokenKind::Op,
                        start: i,
                        end: i + 1,
                        line,
                        column,
                    });
                    i += 1;
                } else {
                    return Err(Error::Lex {
                        offset: i,
                        reason: format!("unexpected character {:?}", src[i..].chars().next().unwrap()),
                    });
                }
            }
        }
    }
    Ok(TokenSeq::new(tokens))
}

/// Number of logical statements: lines (newline-delimited groups) that
/// contain at least one non-newline token. Never less than 1, so the quality
/// ratio in the score formula stays defined.
pub fn count_statements(tokens: &TokenSeq) -> usize {
    let mut count = 0usize;
    let mut line_has_content = false;
    for t in tokens.iter() {
        if t.kind == TokenKind::Newline {
            if line_has_content {
                count += 1;
            }
            line_has_content = false;
        } else {
            line_has_content = true;
        }
    }
    if line_has_content {
        count += 1;
    }
    count.max(1)
}
