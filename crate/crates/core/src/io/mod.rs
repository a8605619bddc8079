//! On-disk formats: the binary cube container, map CSVs and 16-bit PGM
//! renders with a JSON sidecar.

mod cube;
mod csv;
mod pgm;

use thiserror::Error;

pub use cube::{created_utc_now, payload_offset, read_cube, read_cube_with_header, write_cube, write_cube_with, CubeHeader, MAGIC};
pub use csv::{read_map_csv, read_vector_csv, write_map_csv, write_vector_csv, MapCsv};
pub use pgm::{render_map, sidecar_path, RenderOptions, RenderSidecar};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("file does not start with the cube magic")]
    CorruptMagic,
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("map has no finite values")]
    AllInvalid,
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse(e.to_string())
    }
}
