//! Outputs are assembled under `<out>.partial` and moved into place only once
//! complete, so an interrupted command never leaves a half-written result.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct Staged {
    target: PathBuf,
    partial: PathBuf,
    done: bool,
}

fn partial_path(target: &Path) -> PathBuf {
    let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    target.with_file_name(name)
}

impl Staged {
    /// Prepares staging for `target`, a file or directory.
    pub fn new(target: PathBuf, force: bool) -> Result<Self> {
        if target.exists() && !force {
            bail!("{} already exists (use --force to replace it)", target.display());
        }
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let partial = partial_path(&target);
        remove(&partial)?;
        Ok(Self {
            target,
            partial,
            done: false,
        })
    }

    /// Where to write while the command runs.
    pub fn path(&self) -> &Path {
        &self.partial
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        remove(&self.target)?;
        fs::rename(&self.partial, &self.target)
            .with_context(|| format!("moving {} into place", self.target.display()))?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.done {
            let _ = remove(&self.partial);
        }
    }
}

fn remove(path: &Path) -> Result<()> {
    match fs::symlink_metadata(path) {
        Ok(m) if m.is_dir() => fs::remove_dir_all(path)?,
        Ok(_) => fs::remove_file(path)?,
        Err(_) => {}
    }
    Ok(())
}

/// Stamp file name next to a file output.
pub fn file_stamp(target: &Path) -> PathBuf {
    let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".stamp.toml");
    target.with_file_name(name)
}
