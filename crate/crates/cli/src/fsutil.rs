use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Renders into a buffer with `f`, then writes atomically.
pub fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> insider_forest::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(insider_forest::Error::from)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Opens an input file; a missing file is a configuration error.
pub fn open_input(path: &Path) -> CliResult<fs::File> {
    if !path.exists() {
        return Err(CliError::config(format!("missing input file {}", path.display())));
    }
    fs::File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::config(format!("missing input file {}", path.display())));
    }
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_input(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn missing_input_is_config_error() {
        let err = read_input(Path::new("/nonexistent/file.csv")).unwrap_err();
        assert_eq!(err.class, "ConfigError");
        assert_eq!(err.code, 2);
    }
}
