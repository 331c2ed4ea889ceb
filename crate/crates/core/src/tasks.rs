//! Task manifests: instruction text, test commands and essential-test flags.
//!
//! Tests run through `sh -c` with `{file}` replaced by the candidate path.
//! Exit code 0 means pass; a timeout counts as a failure rather than an
//! error so one hung test cannot abort a dataset build.

use crate::error::{Error, Result};
use crate::eval::TaskCategory;
use crate::util::{read_jsonl, write_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTest {
    pub cmd: String,
    #[serde(default)]
    pub essential: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    #[serde(default)]
    pub category: TaskCategory,
    pub instruction: String,
    #[serde(default)]
    pub tests: Vec<TaskTest>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::InvalidParameter("task_id must not be empty".to_string()));
        }
        if self.instruction.trim().is_empty() {
            return Err(Error::InvalidParameter(format!(
                "task {}: instruction must not be empty",
                self.task_id
            )));
        }
        for (i, t) in self.tests.iter().enumerate() {
            if t.cmd.trim().is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "task {}: test {} has an empty command",
                    self.task_id, i
                )));
            }
        }
        Ok(())
    }

    /// Indices of the essential tests. When a task has tests but none is
    /// marked, the first one is treated as essential.
    pub fn essential_indices(&self) -> Vec<usize> {
        let marked: Vec<usize> = self
            .tests
            .iter()
            .enumerate()
            .filter(|(_, t)| t.essential)
            .map(|(i, _)| i)
            .collect();
        if marked.is_empty() && !self.tests.is_empty() {
            return vec![0];
        }
        marked
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<TaskSpec>> {
    let tasks: Vec<TaskSpec> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        t.validate()?;
        if !seen.insert(t.task_id.clone()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate task_id {:?} in {}",
                t.task_id,
                path.display()
            )));
        }
    }
    Ok(tasks)
}

pub fn write_manifest(path: &Path, tasks: &[TaskSpec]) -> Result<()> {
    write_jsonl(path, tasks)
}

/// Per-test pass/fail for one candidate file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub passed: Vec<bool>,
    /// How many essential tests passed; this is what pair selection reads.
    pub essential_passes: usize,
    pub all_passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TestRunner {
    pub timeout: Duration,
}

impl Default for TestRunner {
    fn default() -> Self {
        TestRunner {
            timeout: Duration::from_secs(10),
        }
    }
}

impl TestRunner {
    /// Runs every test of `task` against `file`.
    pub fn run(&self, task: &TaskSpec, file: &Path) -> Result<TestOutcome> {
        let mut passed = Vec::with_capacity(task.tests.len());
        for test in &task.tests {
            passed.push(self.run_one(&test.cmd, file)?);
        }
        let essential = task.essential_indices();
        let essential_passes = essential.iter().filter(|&&i| passed[i]).count();
        let all_passed = !passed.is_empty() && passed.iter().all(|&p| p);
        Ok(TestOutcome {
            passed,
            essential_passes,
            all_passed,
        })
    }

    fn run_one(&self, cmd: &str, file: &Path) -> Result<bool> {
        let line = cmd.replace("{file}", &file.to_string_lossy());
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&line)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::AnalyzerUnavailable {
                reason: format!("failed to spawn test shell: {e}"),
            })?;
        let deadline = Instant::now() + self.timeout;
        loop {
            match child.try_wait() {
                Ok(Some(status)) => return Ok(status.success()),
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Ok(false);
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    return Err(Error::AnalyzerUnavailable {
                        reason: format!("wait on test shell failed: {e}"),
                    })
                }
            }
        }
    }
}
