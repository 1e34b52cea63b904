//! File formats: PGM images and masks, FMAP probability maps, program
//! text, flat config files and dataset directories.

mod config;
mod dataset;
mod fmap;
mod pgm;

pub use config::{parse_config, Config, CONFIG_KEYS};
pub use dataset::{read_dataset, read_split_dataset, write_dataset};
pub use fmap::{read_fmap, write_fmap};
pub use pgm::{
    image_from_pgm, image_to_pgm, labels_from_pgm, labels_to_pgm, mask_from_pgm, mask_to_pgm, read_pgm, write_pgm,
    Pgm,
};

use crate::command::{parse_program, render_program, Program, ProgramError};
use crate::grid::GridError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected `{expected}`, found `{found}`")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header at byte {offset}: {message}")]
    Header { offset: usize, message: String },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated { offset: usize, expected: usize, found: usize },
    #[error("{extra} unexpected trailing bytes after byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IoError {
    /// True for malformed content, as opposed to missing files or I/O failures.
    pub fn is_format_error(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_program(path: &Path) -> Result<Program, IoError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| IoError::Invalid(format!("program is not UTF-8: {e}")))?;
    Ok(parse_program(&text)?)
}

pub fn save_program(path: &Path, program: &Program) -> Result<(), IoError> {
    write_bytes(path, render_program(program).as_bytes())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
