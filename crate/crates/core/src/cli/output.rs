use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use super::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let io_err = |e: std::io::Error| CliError::Validation(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut buffered = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buffered).map_err(io_err)?;
        buffered.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

/// Writes the JSON report to `path` if given, and always to stdout.
pub fn emit_report<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = to_json(value);
    if let Some(path) = path {
        write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    }
    print!("{text}");
    Ok(())
}
