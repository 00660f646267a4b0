//! Output files stamped with the config hash.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
    hash: String,
}

impl OutDir {
    pub fn create(root: &Path, hash: String) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            hash,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn open(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::with_capacity(1 << 20, file))
    }

    /// Pretty JSON object with a top-level `config_hash` key.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            other => {
                let inner = std::mem::take(other);
                let mut map = serde_json::Map::new();
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
                map.insert("value".into(), inner);
                v = Value::Object(map);
            }
        }
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, &v)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Text-like file whose first line is `# config_hash=…`; readers skip it.
    pub fn stamped<F>(&mut self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let mut w = self.open(name)?;
        writeln!(w, "# config_hash={}", self.hash)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Peak resident set size of this process in bytes, when the OS reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
