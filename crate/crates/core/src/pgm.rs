//! Binary portable-graymap (P5) frames on disk.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use thiserror::Error;

use crate::fence::GrayFrame;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a binary graymap (P5)")]
    NotP5 { path: PathBuf },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

impl PgmError {
    pub fn path(&self) -> &Path {
        match self {
            PgmError::Io { path, .. }
            | PgmError::NotP5 { path }
            | PgmError::Malformed { path, .. } => path,
        }
    }
}

pub fn decode(bytes: &[u8], path: &Path, index: u64, t_ms: u64) -> Result<GrayFrame, PgmError> {
    if !bytes.starts_with(b"P5") {
        return Err(PgmError::NotP5 {
            path: path.to_path_buf(),
        });
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| {
        PgmError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    GrayFrame::new(w as usize, h as usize, gray.into_raw(), index, t_ms).map_err(|e| {
        PgmError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })
}

pub fn read(path: &Path, index: u64, t_ms: u64) -> Result<GrayFrame, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, path, index, t_ms)
}

pub fn encode(frame: &GrayFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.pixels.len() + 16);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &frame.pixels,
            frame.width as u32,
            frame.height as u32,
            ExtendedColorType::L8,
        )
        .expect("in-memory graymap encoding");
    out
}

pub fn write(path: &Path, frame: &GrayFrame) -> Result<(), PgmError> {
    fs::write(path, encode(frame)).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `.pgm` files in `dir`, in lexicographic order of file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, PgmError> {
    let io_err = |source| PgmError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_pgm = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut f = GrayFrame::filled(5, 3, 7);
        f.set(4, 2, 250);
        let bytes = encode(&f);
        assert!(bytes.starts_with(b"P5"));
        let back = decode(&bytes, Path::new("x.pgm"), 0, 0).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_ascii_and_truncated() {
        let p = Path::new("bad.pgm");
        assert!(matches!(decode(b"P2\n1 1\n255\n0\n", p, 0, 0), Err(PgmError::NotP5 { .. })));
        assert!(matches!(decode(b"P5\n4 4\n255\n\x01\x02", p, 0, 0), Err(PgmError::Malformed { .. })));
    }
}
