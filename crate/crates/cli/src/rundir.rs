//! Run directories: every output of a command is written into a hidden
//! staging directory that is renamed into place once the command finishes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::UsageError;

pub struct RunDir {
    target: PathBuf,
    staging: PathBuf,
    log: Vec<String>,
    quiet: bool,
    finished: bool,
}

impl RunDir {
    /// Stages `out`, or `runs/<command>-<UTC timestamp>-seed<seed>` when no
    /// directory is given. An existing target is an error.
    pub fn create(out: Option<&Path>, command: &str, seed: u64) -> Result<Self> {
        let target = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
                PathBuf::from("runs").join(format!("{command}-{stamp}-seed{seed}"))
            }
        };
        if target.exists() {
            return Err(UsageError(format!(
                "output directory {} already exists; refusing to overwrite",
                target.display()
            ))
            .into());
        }
        let name = target
            .file_name()
            .ok_or_else(|| UsageError(format!("invalid output path {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(Self {
            target,
            staging,
            log: Vec::new(),
            quiet: false,
            finished: false,
        })
    }

    /// Suppress log echo on stderr.
    pub fn quiet(mut self) -> Self {
        self.quiet = true;
        self
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Path inside the staging area, for writers that need a file path.
    pub fn staged_path(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let tmp = self.staging.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_ref())?;
        f.sync_all()?;
        fs::rename(&tmp, self.staging.join(name))?;
        Ok(())
    }

    pub fn log(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.quiet {
            eprintln!("{msg}");
        }
        self.log.push(msg);
    }

    /// Writes the log and moves the run into place.
    pub fn finish(mut self) -> Result<PathBuf> {
        let log = self.log.join("\n") + "\n";
        self.write("log.txt", log)?;
        fs::rename(&self.staging, &self.target)
            .with_context(|| format!("moving run into {}", self.target.display()))?;
        self.finished = true;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_then_publishes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut rd = RunDir::create(Some(&out), "x", 0).unwrap().quiet();
        rd.write("a.csv", "h\n1\n").unwrap();
        rd.log("hello");
        assert!(!out.exists());
        rd.finish().unwrap();
        assert_eq!(fs::read_to_string(out.join("a.csv")).unwrap(), "h\n1\n");
        assert_eq!(fs::read_to_string(out.join("log.txt")).unwrap(), "hello\n");
        let err = RunDir::create(Some(&out), "x", 0).err().unwrap();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn abandoned_runs_leave_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        {
            let rd = RunDir::create(Some(&out), "x", 0).unwrap();
            rd.write("a.csv", "1").unwrap();
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
