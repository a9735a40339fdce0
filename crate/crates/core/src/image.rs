use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use image::{ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("reading image {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {reference} is not decodable: {reason}")]
    Undecodable { reference: String, reason: String },
}

/// An encoded image plus the metadata the pipeline needs.
///
/// `reference` is the name the image is known by in datasets and logs; it is
/// never sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInput {
    pub reference: String,
    pub bytes: Arc<Vec<u8>>,
    pub media_type: String,
    pub width: u32,
    pub height: u32,
}

impl ImageInput {
    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reference = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::from_bytes(reference, bytes)
    }

    pub fn from_bytes(reference: impl Into<String>, bytes: Vec<u8>) -> Result<Self, ImageError> {
        let reference = reference.into();
        let undecodable = |reason: String| ImageError::Undecodable { reference: reference.clone(), reason };
        let reader = ImageReader::new(Cursor::new(&bytes))
            .with_guessed_format()
            .map_err(|e| undecodable(e.to_string()))?;
        let format = reader.format().ok_or_else(|| undecodable("unknown format".into()))?;
        let media_type = match format {
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg => "image/jpeg",
            other => return Err(undecodable(format!("unsupported format {other:?}"))),
        };
        let (width, height) = reader.into_dimensions().map_err(|e| undecodable(e.to_string()))?;
        Ok(Self {
            reference,
            bytes: Arc::new(bytes),
            media_type: media_type.to_string(),
            width,
            height,
        })
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::ImageInput;

    /// Encodes a blank PNG of the given size.
    pub fn blank_png(width: u32, height: u32) -> Vec<u8> {
        let img = image::RgbImage::new(width, height);
        let mut out = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
            .unwrap();
        out
    }

    pub fn blank_image(reference: &str) -> ImageInput {
        ImageInput::from_bytes(reference, blank_png(64, 48)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_dimensions() {
        let img = ImageInput::from_bytes("x.png", test_support::blank_png(64, 48)).unwrap();
        assert_eq!((img.width, img.height), (64, 48));
        assert_eq!(img.media_type, "image/png");
    }

    #[test]
    fn rejects_garbage() {
        assert!(ImageInput::from_bytes("x.png", b"not an image".to_vec()).is_err());
    }
}
