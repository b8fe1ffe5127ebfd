//! Library side of the `fcdepth` command-line tool: file formats, synthetic
//! data, the benchmark harness and the command implementations.

use std::path::{Path, PathBuf};

pub mod bench;
pub mod commands;
pub mod ppm;
pub mod raster;
pub mod synth;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("{path}: {message}")]
    InFile { path: PathBuf, message: String },
}

impl FileError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FileError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            FileError::Format(message) => FileError::InFile {
                path: path.to_path_buf(),
                message,
            },
            e => e,
        }
    }
}
