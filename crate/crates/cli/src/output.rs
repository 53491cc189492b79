//! Atomic file output.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::Failure;

pub struct OutDir {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// Writes `name` through a temporary file in the same directory and
    /// renames it into place.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
        let target = self.dir.join(name);
        let fail = |e: io::Error| Failure::io(format!("cannot write {}: {e}", target.display()));
        let tmp = NamedTempFile::new_in(&self.dir).map_err(fail)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w).map_err(fail)?;
            w.flush().map_err(fail)?;
        }
        tmp.persist(&target).map_err(|e| fail(e.error))?;
        eprintln!("wrote {}", target.display());
        self.written.push(target);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}
