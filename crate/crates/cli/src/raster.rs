//! `DPTH` depth rasters: magic `DPTH`, version byte 1, `u32` width and
//! height, then `width * height` little-endian `f32` meters in row-major
//! order.

use std::fs;
use std::path::Path;

use fcdepth_core::{Shape4, Tensor4};

use crate::FileError;

pub const MAGIC: &[u8; 4] = b"DPTH";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRaster {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthRaster {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, FileError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(FileError::Format(format!(
                "depth raster {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FileError::Format(format!("depth value {i} is not finite")));
        }
        Ok(DepthRaster {
            width,
            height,
            values,
        })
    }

    /// Takes the single channel of a `1 x H x W x 1` tensor.
    pub fn from_tensor(t: &Tensor4) -> Result<Self, FileError> {
        let s = t.shape();
        if s.n != 1 || s.c != 1 {
            return Err(FileError::Format(format!(
                "expected a 1xHxWx1 depth map, got {s}"
            )));
        }
        Self::new(s.w, s.h, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec(
            Shape4::new(1, self.height, self.width, 1),
            self.values.clone(),
        )
        .expect("raster dimensions are consistent")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileError> {
        if bytes.len() < HEADER_LEN {
            return Err(FileError::Format("depth raster header is truncated".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(FileError::Format("bad magic, expected DPTH".into()));
        }
        if bytes[4] != VERSION {
            return Err(FileError::Format(format!(
                "unsupported depth raster version {}",
                bytes[4]
            )));
        }
        let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != width * height * 4 {
            return Err(FileError::Format(format!(
                "{width}x{height} raster needs {} payload bytes, found {}",
                width * height * 4,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(width, height, values)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        fs::write(path, self.to_bytes()).map_err(|e| FileError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let bytes = fs::read(path).map_err(|e| FileError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let r = DepthRaster::new(2, 1, vec![1.0, 2.5]).unwrap();
        let b = r.to_bytes();
        assert_eq!(&b[..5], b"DPTH\x01");
        assert_eq!(&b[5..13], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[13..17], &1.0f32.to_le_bytes());
        assert_eq!(DepthRaster::from_bytes(&b).unwrap(), r);
    }

    #[test]
    fn rejects_bad_input() {
        let b = DepthRaster::new(2, 2, vec![1.0; 4]).unwrap().to_bytes();
        assert!(DepthRaster::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(DepthRaster::from_bytes(&b[..7]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(DepthRaster::from_bytes(&bad).is_err());
        assert!(DepthRaster::new(2, 2, vec![1.0, f32::NAN, 1.0, 1.0]).is_err());
        assert!(DepthRaster::new(2, 2, vec![1.0; 3]).is_err());
    }
}
