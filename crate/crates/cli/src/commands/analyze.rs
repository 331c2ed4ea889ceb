//! `analyze`: print a quality score per source file.
//!
//! A file full of issues still scores (possibly 0.0) with exit 0; only a
//! missing file or a broken analyzer invocation is an error. Reads only,
//! so no directory lock is taken.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use prefixtune_core::quality::{analyze_files, apply_check_filter};

use crate::commands::{require_files, score_report, Scorer};
use crate::config::RunConfig;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Source files to score.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

pub fn run(rc: &RunConfig, args: &AnalyzeArgs) -> Result<()> {
    rc.validate()?;
    let refs: Vec<&std::path::Path> = args.files.iter().map(|p| p.as_path()).collect();
    require_files(&refs)?;

    let scorer = Scorer::from_config(rc);
    match &scorer {
        Scorer::Mock(_) => {
            for path in &args.files {
                let report = scorer.report_for(path)?;
                println!("{}\t{:?}", path.display(), score_report(&report));
            }
        }
        Scorer::External { cfg, filter } => {
            let reports = analyze_files(&args.files, cfg, rc.workers);
            for (path, report) in args.files.iter().zip(reports) {
                let report = apply_check_filter(&report?, filter);
                println!("{}\t{:?}", path.display(), score_report(&report));
            }
        }
    }
    Ok(())
}
