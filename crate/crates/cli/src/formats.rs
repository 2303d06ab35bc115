//! Binary PPM/PGM image IO for rendered frames and layout label channels.
//!
//! Renders are stored as `P6` (RGB, maxval 255). Layout channels are `P5`
//! with maxval 2, one byte per cell holding the class label directly, so
//! the files double as compact label tensors and remain viewable in any
//! netpbm-aware tool.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use racklay_core::render::Image;

/// Maximum sample value in layout PGM files (the highest class label).
pub const LABEL_MAXVAL: u8 = 2;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Serializes an RGB image as binary PPM.
pub fn ppm_bytes(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    write_atomic(path, &ppm_bytes(image))
}

/// Serializes one layout channel (`d*d` labels, row-major) as binary PGM.
pub fn pgm_bytes(cells: &[u8], width: usize, height: usize) -> Vec<u8> {
    debug_assert_eq!(cells.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{LABEL_MAXVAL}\n").into_bytes();
    out.extend_from_slice(cells);
    out
}

pub fn write_pgm(path: &Path, cells: &[u8], width: usize, height: usize) -> Result<()> {
    write_atomic(path, &pgm_bytes(cells, width, height))
}

/// Pulls the next whitespace-delimited ASCII token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        bail!("unexpected end of header");
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(token: &str) -> Result<usize> {
    token.parse::<usize>().with_context(|| format!("bad dimension {token:?}"))
}

/// Parses a netpbm header, returning `(width, height, maxval, data offset)`.
fn parse_header(bytes: &[u8], magic: &str) -> Result<(usize, usize, usize, usize)> {
    let mut pos = 0;
    let got = next_token(bytes, &mut pos)?;
    if got != magic {
        bail!("expected {magic} file, found magic {got:?}");
    }
    let width = parse_dim(&next_token(bytes, &mut pos)?)?;
    let height = parse_dim(&next_token(bytes, &mut pos)?)?;
    let maxval = parse_dim(&next_token(bytes, &mut pos)?)?;
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        bail!("malformed header/raster separator");
    }
    Ok((width, height, maxval, pos + 1))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (width, height, maxval, offset) =
        parse_header(&bytes, "P6").with_context(|| path.display().to_string())?;
    if maxval != 255 {
        bail!("{}: unsupported maxval {maxval}", path.display());
    }
    let need = width * height * 3;
    let raster = &bytes[offset..];
    if raster.len() != need {
        bail!("{}: raster is {} bytes, expected {need}", path.display(), raster.len());
    }
    let mut image = Image::new(width, height, [0, 0, 0]);
    image.data.copy_from_slice(raster);
    Ok(image)
}

/// Reads a label PGM, checking dimensions and the label range.
pub fn read_pgm(path: &Path, width: usize, height: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h, maxval, offset) =
        parse_header(&bytes, "P5").with_context(|| path.display().to_string())?;
    if (w, h) != (width, height) {
        bail!("{}: is {w}x{h}, expected {width}x{height}", path.display());
    }
    if maxval != LABEL_MAXVAL as usize {
        bail!("{}: unsupported maxval {maxval}", path.display());
    }
    let raster = &bytes[offset..];
    if raster.len() != width * height {
        bail!("{}: raster is {} bytes, expected {}", path.display(), raster.len(), width * height);
    }
    if let Some(bad) = raster.iter().find(|&&b| b > LABEL_MAXVAL) {
        bail!("{}: label {bad} out of range", path.display());
    }
    Ok(raster.to_vec())
}
