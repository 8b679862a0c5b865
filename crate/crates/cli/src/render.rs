//! Binary PGM (P5, maxval 255) figures.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Row-major 8-bit grayscale image.
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Gray {
    /// Maps `values` linearly so that `scale` becomes 255; larger values clip.
    pub fn from_values(width: usize, height: usize, values: &[f64], scale: f64) -> Self {
        let pixels = values
            .iter()
            .map(|&v| {
                if scale > 0.0 {
                    (v / scale * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        Gray { width, height, pixels }
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_pgm()).map_err(|e| CliError::io(path, e))
    }
}
