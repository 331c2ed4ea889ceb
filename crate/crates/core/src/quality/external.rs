//! External analyzer client.
//!
//! Spawns a configured analyzer executable per file, enforces a wall-clock
//! timeout, and parses the line protocol from stdout. The statement count
//! comes from the `#statements=` trailer when present; otherwise the source
//! is lexed locally, falling back to a non-empty-line count for files our
//! lexer cannot handle.

use crate::error::{Error, Result};
use crate::lexdiff::{count_statements, tokenize};
use crate::quality::parse::parse_lines;
use crate::quality::types::LintReport;
use crate::util::read_to_string;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    /// Executable to run.
    pub program: String,
    /// Arguments; every `{file}` is replaced with the target path. When no
    /// placeholder appears the path is appended as the final argument.
    pub args: Vec<String>,
    pub timeout_secs: u64,
    /// Exit codes treated as a successful run. Real linters encode issue
    /// classes in nonzero exits; widen this list to accept them.
    pub allowed_exit_codes: Vec<i32>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            program: "pylint".to_string(),
            args: Vec::new(),
            timeout_secs: 30,
            allowed_exit_codes: vec![0],
        }
    }
}

/// Runs the analyzer on one file and parses its report.
pub fn run_external_analyzer(path: &Path, cfg: &AnalyzerConfig) -> Result<LintReport> {
    let fallback = fallback_statement_count(path)?;
    let mut cmd = Command::new(&cfg.program);
    let path_str = path.to_string_lossy();
    let mut replaced = false;
    for arg in &cfg.args {
        if arg.contains("{file}") {
            replaced = true;
            cmd.arg(arg.replace("{file}", &path_str));
        } else {
            cmd.arg(arg);
        }
    }
    if !replaced {
        cmd.arg(path.as_os_str());
    }
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let mut child = cmd.spawn().map_err(|e| Error::AnalyzerUnavailable {
        reason: format!("failed to spawn {:?}: {e}", cfg.program),
    })?;

    let deadline = Instant::now() + Duration::from_secs(cfg.timeout_secs);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::AnalyzerTimeout {
                        path: path.to_path_buf(),
                        seconds: cfg.timeout_secs,
                    });
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                return Err(Error::AnalyzerUnavailable {
                    reason: format!("wait on {:?} failed: {e}", cfg.program),
                })
            }
        }
    };

    let output = child.wait_with_output().map_err(|e| Error::AnalyzerUnavailable {
        reason: format!("reading analyzer output failed: {e}"),
    })?;
    let code = status.code().ok_or_else(|| Error::AnalyzerUnavailable {
        reason: "analyzer killed by signal".to_string(),
    })?;
    if !cfg.allowed_exit_codes.contains(&code) {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::AnalyzerUnavailable {
            reason: format!(
                "analyzer exited with unexpected code {code}: {}",
                stderr.lines().next().unwrap_or("")
            ),
        });
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (issues, trailer) = parse_lines(&stdout)?;
    Ok(LintReport::new(issues, trailer.unwrap_or(fallback)))
}

fn fallback_statement_count(path: &Path) -> Result<usize> {
    let src = read_to_string(path)?;
    match tokenize(&src) {
        Ok(tokens) => Ok(count_statements(&tokens)),
        Err(_) => Ok(src
            .lines()
            .filter(|l| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .count()
            .max(1)),
    }
}

/// Analyzes many files with up to `workers` concurrent subprocesses.
/// Results are returned in input order regardless of completion order.
pub fn analyze_files(
    paths: &[PathBuf],
    cfg: &AnalyzerConfig,
    workers: usize,
) -> Vec<Result<LintReport>> {
    let workers = workers.max(1);
    if workers == 1 || paths.len() <= 1 {
        return paths.iter().map(|p| run_external_analyzer(p, cfg)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        use rayon::prelude::*;
        paths
            .par_iter()
            .map(|p| run_external_analyzer(p, cfg))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, format!("#!/bin/sh\n{body}")).unwrap();
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    #[test]
    fn parses_report_from_stdout() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\nreturn x\n").unwrap();
        let tool = script(
            dir.path(),
            "tool.sh",
            "echo \"$1:1:0: W0612: unused variable\"\necho '#statements=9'",
        );
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec![],
            timeout_secs: 5,
            allowed_exit_codes: vec![0],
        };
        let report = run_external_analyzer(&target, &cfg).unwrap();
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.statement_count, 9);
    }

    #[test]
    fn missing_trailer_falls_back_to_local_count() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\ny = 2\nreturn x\n").unwrap();
        let tool = script(dir.path(), "tool.sh", "exit 0");
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec![],
            timeout_secs: 5,
            allowed_exit_codes: vec![0],
        };
        let report = run_external_analyzer(&target, &cfg).unwrap();
        assert!(report.issues.is_empty());
        assert_eq!(report.statement_count, 3);
    }

    #[test]
    fn placeholder_substitution() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\n").unwrap();
        let tool = script(dir.path(), "tool.sh", "echo \"$2:1:0: C0121: got $1\"");
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec!["--check".to_string(), "{file}".to_string()],
            timeout_secs: 5,
            allowed_exit_codes: vec![0],
        };
        // $1 = --check, $2 = substituted path; no extra trailing arg appended
        let report = run_external_analyzer(&target, &cfg).unwrap();
        assert_eq!(report.issues.len(), 1);
        assert!(report.issues[0].message.contains("--check"));
    }

    #[test]
    fn missing_program_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\n").unwrap();
        let cfg = AnalyzerConfig {
            program: "/nonexistent/analyzer".to_string(),
            ..AnalyzerConfig::default()
        };
        assert!(matches!(
            run_external_analyzer(&target, &cfg),
            Err(Error::AnalyzerUnavailable { .. })
        ));
    }

    #[test]
    fn unexpected_exit_code_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\n").unwrap();
        let tool = script(dir.path(), "tool.sh", "exit 3");
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec![],
            timeout_secs: 5,
            allowed_exit_codes: vec![0],
        };
        assert!(matches!(
            run_external_analyzer(&target, &cfg),
            Err(Error::AnalyzerUnavailable { .. })
        ));
        // widening the allow-list accepts the same run
        let cfg_ok = AnalyzerConfig {
            allowed_exit_codes: vec![0, 3],
            ..cfg
        };
        assert!(run_external_analyzer(&target, &cfg_ok).is_ok());
    }

    #[test]
    fn timeout_kills_the_analyzer() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("prog.mini");
        fs::write(&target, "x = 1\n").unwrap();
        let tool = script(dir.path(), "tool.sh", "sleep 30");
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec![],
            timeout_secs: 1,
            allowed_exit_codes: vec![0],
        };
        let start = Instant::now();
        assert!(matches!(
            run_external_analyzer(&target, &cfg),
            Err(Error::AnalyzerTimeout { .. })
        ));
        assert!(start.elapsed() < Duration::from_secs(10));
    }

    #[test]
    fn analyze_files_preserves_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for i in 0..4 {
            let p = dir.path().join(format!("p{i}.mini"));
            fs::write(&p, format!("x = {i}\n")).unwrap();
            paths.push(p);
        }
        let tool = script(dir.path(), "tool.sh", "echo \"$1:1:0: W0612: x\"");
        let cfg = AnalyzerConfig {
            program: tool.to_string_lossy().to_string(),
            args: vec![],
            timeout_secs: 5,
            allowed_exit_codes: vec![0],
        };
        let reports = analyze_files(&paths, &cfg, 4);
        assert_eq!(reports.len(), 4);
        for r in reports {
            assert_eq!(r.unwrap().issues.len(), 1);
        }
    }
}
