//! Quality score of an analyzed program.
//!
//! ```text
//!               { 0                                    if any fatal issue
//!     score  =  {
//!               { max(0, 10 - (5*E + R + C + W) / S * 10)   otherwise
//! ```
//!
//! where E/R/C/W are the per-category issue counts and S >= 1 is the
//! statement count. Errors weigh five times as much as the other
//! categories; the deduction is normalized per statement so long programs
//! are not penalized for length. The result lives in [0, 10].

use super::types::LintReport;

/// Computes the quality score. The value is derived as the exact integer
/// fraction `10 * (S - d) / S` (with `d = 5E + R + C + W`) and rounded to
/// f64 in a single division, so equal reports always produce bit-equal
/// scores.
pub fn compute_quality_score(report: &LintReport) -> f64 {
    let counts = report.counts();
    if counts.fatal > 0 {
        return 0.0;
    }
    let deduction = 5 * counts.error + counts.refactor + counts.convention + counts.warning;
    let s = report.statement_count.max(1) as u64;
    if deduction >= s {
        return 0.0;
    }
    (10 * (s - deduction)) as f64 / s as f64
}
