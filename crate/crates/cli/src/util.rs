//! File plumbing shared by the subcommands: contextual loads and atomic
//! writes.

use std::io::Write;
use std::path::Path;

use crate::{CliError, CliResult};

/// Read a file into a string, naming the path in any failure.
pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Write a file via a temporary sibling plus rename, so a crash or a
/// concurrent reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp.{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Config(format!("{}: {e}", path.display()))
    })
}

/// Send `bytes` to `out` atomically when given, else to standard output.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Config(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
