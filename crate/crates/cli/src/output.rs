//! Output files staged in the target directory and renamed into place only
//! once a command has finished.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub struct Outputs {
    dir: PathBuf,
    pending: Vec<(NamedTempFile, PathBuf)>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
        })
    }

    /// Streams a file through `fill`; nothing becomes visible before
    /// [`Outputs::commit`].
    pub fn stream<T>(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        let target = self.dir.join(name);
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let value = {
            let mut w = BufWriter::new(tmp.as_file_mut());
            let value = fill(&mut w)?;
            w.flush().map_err(|e| CliError::io(&target, e))?;
            value
        };
        self.pending.push((tmp, target));
        Ok(value)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let target = self.dir.join(name);
        self.stream(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::io(&target, e.into()))?;
            writeln!(w).map_err(|e| CliError::io(&target, e))
        })
    }

    /// Renames every staged file to its final name.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        for (tmp, target) in self.pending {
            tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}

pub(crate) fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}
