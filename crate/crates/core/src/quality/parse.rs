//! Parser for the analyzer line protocol.
//!
//! One issue per line:
//!
//! ```text
//! <path>:<line>:<col>: <CHECK_ID>: <message>
//! ```
//!
//! plus an optional `#statements=<N>` trailer carrying the statement count.
//! Any other non-empty line is a hard parse error; analyzers that cannot
//! speak this protocol should be wrapped, not half-parsed.

use crate::error::{Error, Result};
use crate::quality::types::{IssueCategory, IssueRecord, LintReport};

/// Parses a report, using `fallback_statements` when no trailer is present.
pub fn parse_analyzer_report(text: &str, fallback_statements: usize) -> Result<LintReport> {
    let (issues, trailer) = parse_lines(text)?;
    Ok(LintReport::new(
        issues,
        trailer.unwrap_or(fallback_statements),
    ))
}

/// Lower-level form: issues plus the trailer value when one was present.
pub fn parse_lines(text: &str) -> Result<(Vec<IssueRecord>, Option<usize>)> {
    let mut issues = Vec::new();
    let mut statements = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#statements=") {
            let n: usize = rest.trim().parse().map_err(|_| Error::ReportParse {
                line_no: idx + 1,
                content: raw.to_string(),
            })?;
            statements = Some(n);
            continue;
        }
        issues.push(parse_issue_line(line).ok_or_else(|| Error::ReportParse {
            line_no: idx + 1,
            content: raw.to_string(),
        })??);
    }
    Ok((issues, statements))
}

/// Returns `None` for structurally malformed lines and `Some(Err)` when the
/// structure is fine but the check id has an unknown category letter.
fn parse_issue_line(line: &str) -> Option<Result<IssueRecord>> {
    // The path may contain colons, so locate the first `:<digits>:<digits>:`
    // group and treat everything before it as the path.
    let bytes = line.as_bytes();
    let mut anchor = None;
    for (i, &b) in bytes.iter().enumerate() {
        if b != b':' {
            continue;
        }
        let rest = &line[i + 1..];
        let mut parts = rest.splitn(3, ':');
        let lineno = parts.next()?;
        let Some(col) = parts.next() else { continue };
        if parts.next().is_none() {
            continue;
        }
        if !lineno.is_empty()
            && lineno.bytes().all(|c| c.is_ascii_digit())
            && !col.is_empty()
            && col.bytes().all(|c| c.is_ascii_digit())
        {
            anchor = Some(i);
            break;
        }
    }
    let anchor = anchor?;
    let mut parts = line[anchor + 1..].splitn(4, ':');
    let lineno: u32 = parts.next()?.parse().ok()?;
    let col: u32 = parts.next()?.parse().ok()?;
    let check_id = parts.next()?.trim().to_string();
    let message = parts.next()?.trim().to_string();
    if check_id.is_empty() || check_id.contains(' ') {
        return None;
    }
    Some(match IssueCategory::from_check_id(&check_id) {
        Ok(category) => Ok(IssueRecord {
            check_id,
            category,
            line: lineno,
            column: col,
            message,
        }),
        Err(e) => Err(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_issues_and_trailer() {
        let text = "\
src/solution.py:3:8: R1705: no-else-return: unnecessary else after return
src/solution.py:10:0: C0121: singleton-comparison: comparison to True
#statements=12
";
        let report = parse_analyzer_report(text, 1).unwrap();
        assert_eq!(report.issues.len(), 2);
        assert_eq!(report.statement_count, 12);
        let first = &report.issues[0];
        assert_eq!(first.check_id, "R1705");
        assert_eq!(first.category, IssueCategory::Refactor);
        assert_eq!((first.line, first.column), (3, 8));
        assert_eq!(
            first.message,
            "no-else-return: unnecessary else after return"
        );
    }

    #[test]
    fn fallback_statements_used_without_trailer() {
        let report = parse_analyzer_report("a.py:1:0: W0612: unused variable\n", 7).unwrap();
        assert_eq!(report.statement_count, 7);
    }

    #[test]
    fn empty_report_is_clean() {
        let report = parse_analyzer_report("", 4).unwrap();
        assert!(report.issues.is_empty());
        assert_eq!(report.statement_count, 4);
    }

    #[test]
    fn path_with_colons() {
        let report =
            parse_analyzer_report("C:\\work\\a.py:2:4: E1101: no-member: thing\n", 1).unwrap();
        assert_eq!(report.issues[0].line, 2);
        assert_eq!(report.issues[0].check_id, "E1101");
    }

    #[test]
    fn message_may_contain_colons() {
        let report = parse_analyzer_report("a.py:1:1: W0612: unused: variable: x\n", 1).unwrap();
        assert_eq!(report.issues[0].message, "unused: variable: x");
    }

    #[test]
    fn malformed_line_is_an_error_not_skipped() {
        assert!(matches!(
            parse_analyzer_report("some random text\n", 1),
            Err(Error::ReportParse { line_no: 1, .. })
        ));
        assert!(matches!(
            parse_analyzer_report("a.py:xx:0: W0612: msg\n", 1),
            Err(Error::ReportParse { .. })
        ));
    }

    #[test]
    fn unknown_category_letter_is_an_error() {
        assert!(matches!(
            parse_analyzer_report("a.py:1:0: Z9999: mystery\n", 1),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn bad_trailer_is_an_error() {
        assert!(parse_analyzer_report("#statements=many\n", 1).is_err());
    }

    #[test]
    fn fatal_detected() {
        let report = parse_analyzer_report("a.py:1:0: F0001: syntax error\n", 1).unwrap();
        assert!(report.is_fatal());
    }
}
