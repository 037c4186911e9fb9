use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Fail;

/// Output directory; every write goes through here so files land in one place.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self, Fail> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Fail> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Fail> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn text(&self, name: &str, s: &str) -> Result<(), Fail> {
        fs::write(self.dir.join(name), s)?;
        Ok(())
    }
}
