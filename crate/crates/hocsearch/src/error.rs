use std::path::{Path, PathBuf};

/// Failures reading or writing the on-disk formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse { path: PathBuf, offset: usize, message: String },
    #[error("{path}: unsupported version {found} (expected {expected})")]
    UnsupportedVersion { path: PathBuf, found: u64, expected: u64 },
    #[error("{path}: invalid contents")]
    Invalid {
        path: PathBuf,
        #[source]
        source: hoc_core::Error,
    },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, offset: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { path: path.to_path_buf(), offset, message: message.into() }
    }

    pub(crate) fn invalid(path: &Path, source: hoc_core::Error) -> Self {
        FormatError::Invalid { path: path.to_path_buf(), source }
    }

    /// Maps a serde_json error to a byte offset into `text`.
    pub(crate) fn json(path: &Path, text: &str, e: &serde_json::Error) -> Self {
        let offset = match e.classify() {
            serde_json::error::Category::Eof => text.len(),
            _ => byte_offset(text, e.line(), e.column()),
        };
        FormatError::parse(path, offset, e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;

/// Byte offset of a 1-based line and column (serde_json reports column 0 at
/// line starts and for end-of-input errors).
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory values always serialize");
    text.push('\n');
    write(path, text.as_bytes())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::json(path, &text, &e))
}

/// Reads a versioned JSON document, rejecting other versions before the
/// body is interpreted.
pub(crate) fn read_versioned<T: serde::de::DeserializeOwned>(path: &Path, expected: u64) -> Result<T> {
    #[derive(serde::Deserialize)]
    struct Header {
        version: Option<u64>,
    }
    let text = read_text(path)?;
    let header: Header = serde_json::from_str(&text).map_err(|e| FormatError::json(path, &text, &e))?;
    match header.version {
        Some(v) if v == expected => {}
        Some(found) => return Err(FormatError::UnsupportedVersion { path: path.to_path_buf(), found, expected }),
        None => return Err(FormatError::parse(path, 0, "missing \"version\" field")),
    }
    serde_json::from_str(&text).map_err(|e| FormatError::json(path, &text, &e))
}
