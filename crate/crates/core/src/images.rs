//! Content-addressed image storage.

use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};

use image::{ImageFormat, ImageReader, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageSource {
    StreetView,
    Generated,
    Fixture,
}

/// Reference to an image persisted in an [`ImageStore`].
///
/// `id` is the SHA-256 of the image bytes, `uri` the store-relative path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub source: ImageSource,
    pub uri: String,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image bytes are not a decodable JPEG or PNG: {0}")]
    Decode(String),
    #[error("image {0} not found in store")]
    Missing(String),
    #[error("image io: {0}")]
    Io(#[from] io::Error),
}

/// Stores images under `<root>/images/<sha256>.<ext>`.
#[derive(Debug, Clone)]
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn put(&self, bytes: &[u8], source: ImageSource) -> Result<ImageRef, ImageError> {
        let (format, width_px, height_px) = probe(bytes)?;
        let id = sha256_hex(bytes);
        let ext = match format {
            ImageFormat::Png => "png",
            _ => "jpg",
        };
        let uri = format!("images/{id}.{ext}");
        let path = self.root.join(&uri);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(ImageRef {
            id,
            source,
            uri,
            width_px,
            height_px,
        })
    }

    pub fn path_of(&self, image: &ImageRef) -> PathBuf {
        self.root.join(&image.uri)
    }

    pub fn contains(&self, image: &ImageRef) -> bool {
        // uri is always images/<id>.<ext>; anything else is a foreign reference
        let expected_prefix = format!("images/{}.", image.id);
        image.uri.starts_with(&expected_prefix) && self.path_of(image).is_file()
    }

    pub fn read(&self, image: &ImageRef) -> Result<Vec<u8>, ImageError> {
        if !self.contains(image) {
            return Err(ImageError::Missing(image.id.clone()));
        }
        Ok(fs::read(self.path_of(image))?)
    }
}

fn probe(bytes: &[u8]) -> Result<(ImageFormat, u32, u32), ImageError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    let format = match reader.format() {
        Some(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        other => return Err(ImageError::Decode(format!("unsupported format {other:?}"))),
    };
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    if w == 0 || h == 0 {
        return Err(ImageError::Decode("zero-sized image".into()));
    }
    Ok((format, w, h))
}

/// Deterministic placeholder PNG whose pixels are derived from `seed`.
pub fn synthetic_png(seed: &[u8], width: u32, height: u32) -> Vec<u8> {
    let digest = sha256_hex(seed);
    let bytes = hex::decode(digest).expect("hex digest");
    let img = RgbImage::from_fn(width, height, |x, y| {
        let i = ((x / 8 + y / 8) as usize) % 10;
        Rgb([
            bytes[i * 3 % 32] ^ (x as u8),
            bytes[(i * 3 + 1) % 32] ^ (y as u8),
            bytes[(i * 3 + 2) % 32],
        ])
    });
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("png encoding into memory");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_is_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        let bytes = synthetic_png(b"seed", 16, 8);
        let a = store.put(&bytes, ImageSource::Fixture).unwrap();
        let b = store.put(&bytes, ImageSource::Fixture).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id, sha256_hex(&bytes));
        assert_eq!((a.width_px, a.height_px), (16, 8));
        assert_eq!(store.read(&a).unwrap(), bytes);
    }

    #[test]
    fn synthetic_png_is_deterministic() {
        assert_eq!(synthetic_png(b"x", 8, 8), synthetic_png(b"x", 8, 8));
        assert_ne!(synthetic_png(b"x", 8, 8), synthetic_png(b"y", 8, 8));
    }

    #[test]
    fn rejects_non_images() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        assert!(matches!(
            store.put(b"not an image", ImageSource::Fixture),
            Err(ImageError::Decode(_))
        ));
    }

    #[test]
    fn foreign_reference_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        let bogus = ImageRef {
            id: "00".repeat(32),
            source: ImageSource::Generated,
            uri: "images/nothing.png".into(),
            width_px: 1,
            height_px: 1,
        };
        assert!(!store.contains(&bogus));
        assert!(matches!(store.read(&bogus), Err(ImageError::Missing(_))));
    }
}
