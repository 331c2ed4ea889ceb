//! Advisory per-directory lock.
//!
//! Two invocations writing into the same output directory would interleave
//! checkpoints and logs; the lock turns that into an immediate error instead.
//! It is advisory only: nothing stops a process that ignores the file.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Creates the lock file, failing if another invocation holds it.
    /// Creates the directory itself if needed, so callers must validate
    /// their configuration before acquiring.
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "{} is locked by another invocation (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ),
            Err(e) => {
                Err(anyhow::Error::new(e).context(format!("creating lock {}", path.display())))
            }
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_dropped() {
        let dir = std::env::temp_dir().join(format!("lock-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let first = DirLock::acquire(&dir).unwrap();
        assert!(DirLock::acquire(&dir).is_err());
        drop(first);
        let second = DirLock::acquire(&dir).unwrap();
        drop(second);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
