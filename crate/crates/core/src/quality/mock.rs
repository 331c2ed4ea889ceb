//! Deterministic mock analyzer.
//!
//! Rules are contiguous token patterns scanned left to right over a lexed
//! program; each match emits one issue anchored at the first matched token.
//! The scan advances one token after a match, so overlapping occurrences
//! are all counted. This is the hermetic stand-in for an external linter:
//! same tokens in, same report out, no subprocess.

use crate::error::Result;
use crate::lexdiff::{count_statements, TokenKind, TokenSeq};
use crate::quality::types::{IssueCategory, IssueRecord, LintReport};

const KEYWORDS: [&str; 15] = [
    "def", "return", "if", "else", "elif", "for", "while", "in", "not", "and", "or", "pass",
    "True", "False", "None",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternAtom {
    /// Exact token text.
    Lit(&'static str),
    /// Any token of the given kind.
    Kind(TokenKind),
    /// An identifier that is not a language keyword. Keywords lex as plain
    /// identifiers, so rules about bare names need this distinction.
    PlainName,
    /// Zero or more tokens whose text differs from the stop text. The stop
    /// token itself is left for the next atom to consume.
    UntilLit(&'static str),
}

#[derive(Debug, Clone)]
pub struct MockRule {
    pub check_id: String,
    pub name: String,
    pub category: IssueCategory,
    pub pattern: Vec<PatternAtom>,
}

impl MockRule {
    pub fn new(check_id: &str, name: &str, pattern: Vec<PatternAtom>) -> Result<Self> {
        Ok(MockRule {
            check_id: check_id.to_string(),
            name: name.to_string(),
            category: IssueCategory::from_check_id(check_id)?,
            pattern,
        })
    }
}

/// The built-in ruleset used by the synthetic pipeline.
pub fn default_rules() -> Vec<MockRule> {
    use PatternAtom::*;
    vec![
        MockRule::new(
            "R1705",
            "no-else-return",
            vec![Lit("return"), UntilLit("\n"), Lit("\n"), Lit("else")],
        )
        .unwrap(),
        MockRule::new(
            "R1710",
            "return-without-value",
            vec![Lit("return"), Lit("\n")],
        )
        .unwrap(),
        MockRule::new("C0121", "comparison-to-true", vec![Lit("=="), Lit("True")]).unwrap(),
        MockRule::new("C0121", "comparison-to-false", vec![Lit("=="), Lit("False")]).unwrap(),
        MockRule::new(
            "C0200",
            "range-len-loop",
            vec![Lit("range"), Lit("("), Lit("len")],
        )
        .unwrap(),
        MockRule::new(
            "W0104",
            "pointless-statement",
            vec![Lit("\n"), PlainName, Lit("\n")],
        )
        .unwrap(),
        MockRule::new("W0622", "redefined-builtin-len", vec![Lit("len"), Lit("=")]).unwrap(),
        MockRule::new(
            "W0622",
            "redefined-builtin-print",
            vec![Lit("print"), Lit("=")],
        )
        .unwrap(),
        MockRule::new("W0622", "redefined-builtin-max", vec![Lit("max"), Lit("=")]).unwrap(),
    ]
}

fn match_at(tokens: &TokenSeq, start: usize, pattern: &[PatternAtom]) -> bool {
    let mut pos = start;
    for atom in pattern {
        match atom {
            PatternAtom::Lit(text) => match tokens.get(pos) {
                Some(t) if t.text == *text => pos += 1,
                _ => return false,
            },
            PatternAtom::Kind(kind) => match tokens.get(pos) {
                Some(t) if t.kind == *kind => pos += 1,
                _ => return false,
            },
            PatternAtom::PlainName => match tokens.get(pos) {
                Some(t) if t.kind == TokenKind::Ident && !KEYWORDS.contains(&t.text.as_str()) => {
                    pos += 1
                }
                _ => return false,
            },
            PatternAtom::UntilLit(stop) => {
                loop {
                    match tokens.get(pos) {
                        Some(t) if t.text == *stop => break,
                        Some(_) => pos += 1,
                        None => return false,
                    }
                }
            }
        }
    }
    true
}

/// Analyzes a token sequence against `rules`.
pub fn mock_analyze(tokens: &TokenSeq, rules: &[MockRule]) -> LintReport {
    let mut issues = Vec::new();
    for i in 0..tokens.len() {
        for rule in rules {
            if match_at(tokens, i, &rule.pattern) {
                let anchor = &tokens[i];
                issues.push(IssueRecord {
                    check_id: rule.check_id.clone(),
                    category: rule.category,
                    line: anchor.line,
                    column: anchor.column,
                    message: rule.name.clone(),
                });
            }
        }
    }
    LintReport::new(issues, count_statements(tokens))
}
