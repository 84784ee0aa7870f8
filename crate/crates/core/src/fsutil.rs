//! Atomic file replacement.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// A fully written temporary file waiting to be renamed over its target.
///
/// Dropping without [`StagedWrite::commit`] removes the temporary file and
/// leaves the target untouched.
#[derive(Debug)]
pub struct StagedWrite {
    temp: NamedTempFile,
    target: PathBuf,
}

impl StagedWrite {
    pub fn stage(target: &Path, bytes: &[u8]) -> io::Result<Self> {
        let dir = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        fs::create_dir_all(dir)?;
        let mut temp = tempfile::Builder::new()
            .prefix(".tmp-")
            .suffix(".partial")
            .tempfile_in(dir)?;
        temp.write_all(bytes)?;
        temp.as_file().sync_all()?;
        Ok(Self {
            temp,
            target: target.to_path_buf(),
        })
    }

    pub fn commit(self) -> io::Result<()> {
        self.temp
            .persist(&self.target)
            .map(|_| ())
            .map_err(|e| e.error)
    }

    /// Leaves the temporary file on disk and never renames it, as a process
    /// killed between the two steps would. Returns the orphaned path.
    pub fn abandon(self) -> io::Result<PathBuf> {
        self.temp.into_temp_path().keep().map_err(|e| e.error)
    }
}

/// Write `bytes` to `target` via write-temp-then-rename.
pub fn write_atomic(target: &Path, bytes: &[u8]) -> io::Result<()> {
    StagedWrite::stage(target, bytes)?.commit()
}

/// True for temp files produced by [`StagedWrite`].
pub fn is_staging_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with(".tmp-") && n.ends_with(".partial"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abandoned_stage_keeps_previous_content() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("doc.json");
        write_atomic(&target, b"v1").unwrap();
        let orphan = StagedWrite::stage(&target, b"v2").unwrap().abandon().unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"v1");
        assert!(orphan.exists());
        assert!(is_staging_file(&orphan));
    }

    #[test]
    fn commit_replaces_target() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested").join("doc.json");
        write_atomic(&target, b"v1").unwrap();
        write_atomic(&target, b"v2").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"v2");
        let leftovers: Vec<_> = fs::read_dir(target.parent().unwrap())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| is_staging_file(&e.path()))
            .collect();
        assert!(leftovers.is_empty());
    }
}
