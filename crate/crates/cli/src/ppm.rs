//! Binary `P6` portable pixmaps with 8-bit samples.

use std::fs;
use std::path::Path;

use fcdepth_core::{Shape4, Tensor4};

use crate::FileError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FileError> {
        if width == 0 || height == 0 || pixels.len() != 3 * width * height {
            return Err(FileError::Format(format!(
                "{width}x{height} image needs {} samples, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    /// `1 x H x W x 3` tensor with samples scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor4 {
        let data = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Tensor4::from_vec(Shape4::new(1, self.height, self.width, 3), data)
            .expect("image dimensions are consistent")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileError> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        if bytes.get(..2) != Some(b"P6") {
            return Err(FileError::Format("not a binary P6 pixmap".into()));
        }
        pos += 2;
        for field in &mut fields {
            // Whitespace and `#` comments may separate header fields.
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| FileError::Format("malformed P6 header".into()))?;
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(FileError::Format(format!(
                "unsupported maxval {maxval}, expected 8-bit samples"
            )));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(FileError::Format("malformed P6 header".into()));
        }
        pos += 1;
        let body = &bytes[pos..];
        let expected = 3 * width * height;
        if body.len() < expected {
            return Err(FileError::Format(format!(
                "pixel data truncated: {} of {expected} bytes",
                body.len()
            )));
        }
        let pixels = if maxval == 255 {
            body[..expected].to_vec()
        } else {
            body[..expected]
                .iter()
                .map(|&p| ((p as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8)
                .collect()
        };
        Self::new(width, height, pixels)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        fs::write(path, self.to_bytes()).map_err(|e| FileError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let bytes = fs::read(path).map_err(|e| FileError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}
