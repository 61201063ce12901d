use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Writes to the file, or to stdout when `out` is `None`.
pub fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

pub fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(out, s.as_bytes())
}

/// Path of the config sidecar written next to a CSV or binary output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// CSV and binary outputs cannot embed the effective config, so it goes to a
/// sidecar file, or to stderr when writing to stdout.
pub fn echo_config(out: Option<&Path>, config: &impl Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(Some(&sidecar_path(p)), config),
        None => {
            eprintln!("config: {}", serde_json::to_string(config)?);
            Ok(())
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(balclust::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}
