//! Bookkeeping of files and directories written by the current command so
//! they can be removed when it fails.

use std::fs;
use std::path::PathBuf;

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    pub fn track_file(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn track_files(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    /// Registers a directory the command may create; it is removed on failure
    /// only if it did not exist beforehand.
    pub fn track_dir(&mut self, path: PathBuf) {
        if !path.exists() {
            self.dirs.push(path);
        }
    }

    pub fn remove_all(&mut self) {
        for f in self.files.drain(..).rev() {
            let _ = fs::remove_file(&f);
            if let Some(parent) = f.parent() {
                // only succeeds when nothing else lives there
                let _ = fs::remove_dir(parent);
            }
        }
        for d in self.dirs.drain(..).rev() {
            let _ = fs::remove_dir_all(&d);
        }
    }
}
