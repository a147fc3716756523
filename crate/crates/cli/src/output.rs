//! Output directories are built in a hidden sibling and renamed into place
//! once complete, so a failed command never leaves a half-written run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const CONFIG_ECHO: &str = "config.txt";

pub struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self> {
        let name = dest
            .file_name()
            .with_context(|| format!("output path {} has no final component", dest.display()))?;
        let parent = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if dest.exists() && !is_replaceable(dest)? {
            bail!(crate::UsageError(format!(
                "refusing to overwrite {}: not empty and not a previous output (no {CONFIG_ECHO})",
                dest.display()
            )));
        }
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).with_context(|| format!("removing {}", tmp.display()))?;
        }
        std::fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.tmp.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    /// Replaces any previous output at the destination.
    pub fn commit(mut self) -> Result<PathBuf> {
        if self.dest.exists() {
            std::fs::remove_dir_all(&self.dest).with_context(|| format!("removing {}", self.dest.display()))?;
        }
        std::fs::rename(&self.tmp, &self.dest)
            .with_context(|| format!("moving {} to {}", self.tmp.display(), self.dest.display()))?;
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

fn is_replaceable(dir: &Path) -> Result<bool> {
    if !dir.is_dir() {
        return Ok(false);
    }
    if dir.join(CONFIG_ECHO).is_file() {
        return Ok(true);
    }
    let mut entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    Ok(entries.next().is_none())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_replaces_previous_output() {
        let root = tempfile::tempdir().unwrap();
        let dest = root.path().join("run");
        let s = Staging::new(&dest).unwrap();
        s.write(CONFIG_ECHO, "a = 1\n").unwrap();
        s.write("old.csv", "x\n").unwrap();
        s.commit().unwrap();
        let s = Staging::new(&dest).unwrap();
        s.write(CONFIG_ECHO, "a = 2\n").unwrap();
        s.commit().unwrap();
        assert!(!dest.join("old.csv").exists());
        assert_eq!(std::fs::read_to_string(dest.join(CONFIG_ECHO)).unwrap(), "a = 2\n");
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 1);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        {
            let s = Staging::new(&root.path().join("run")).unwrap();
            s.write("a", "1").unwrap();
        }
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn refuses_foreign_directories() {
        let root = tempfile::tempdir().unwrap();
        std::fs::write(root.path().join("notes.txt"), "keep").unwrap();
        assert!(Staging::new(root.path()).is_err());
        assert!(root.path().join("notes.txt").exists());
    }
}
