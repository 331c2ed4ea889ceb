//! Lexical tokenization, sequence diffing and similarity.
//!
//! This is the shared substrate for pair construction: candidate programs
//! are lexed into token sequences, compared with a longest-match block
//! decomposition to obtain difference masks, and scored for similarity with
//! a bag-of-tokens cosine.

mod blocks;
mod cosine;
mod token;

pub use blocks::{build_masks, matching_blocks_of, MaskVector, MatchBlock};
pub use cosine::{bag_cosine, bag_cosine_of};
pub use token::{count_statements, tokenize, Token, TokenKind, TokenSeq};

/// Matching blocks over the token texts of two lexed sequences.
pub fn matching_blocks(a: &TokenSeq, b: &TokenSeq) -> Vec<MatchBlock> {
    matching_blocks_of(&a.texts(), &b.texts())
}
