//! Binary portable graymap (P5, maxval 255) export and import.
//!
//! Cell (0, 0) is the top-left pixel; rows are written in increasing `y`.

use super::grid::{CostLayer, GridSpec, OccupancyGrid, LETHAL};
use super::CostmapError;

/// Encodes a layer as a P5 image.
pub fn encode_pgm(layer: &CostLayer) -> Vec<u8> {
    let spec = layer.spec();
    let mut out = format!("P5\n{} {}\n255\n", spec.width, spec.height).into_bytes();
    out.extend_from_slice(layer.as_slice());
    out
}

/// Text header written next to a PGM snapshot.
pub fn sidecar_header(spec: &GridSpec, layer_name: &str, tick: u64) -> String {
    format!(
        "layer: {layer_name}\ntick: {tick}\nwidth: {}\nheight: {}\nresolution: {}\norigin_x: {}\norigin_y: {}\n",
        spec.width, spec.height, spec.resolution, spec.origin.x, spec.origin.y
    )
}

/// A decoded graymap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Graymap {
    /// Pixels equal to 255 are occupied.
    pub fn to_occupancy(&self) -> OccupancyGrid {
        OccupancyGrid { width: self.width, height: self.height, occupied: self.pixels.iter().map(|&p| p == LETHAL).collect() }
    }
}

/// Decodes a P5 image with maxval 255. Comments (`#` to end of line) are
/// allowed in the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap, CostmapError> {
    let bad = |m: &str| CostmapError::Pgm(m.to_string());
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?.to_string());
    }
    if tokens[0] != "P5" {
        return Err(bad("magic must be P5"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid header number"));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates header from raster
    pos += 1;
    let n = width.checked_mul(height).ok_or_else(|| bad("image too large"))?;
    if bytes.len() < pos + n {
        return Err(bad("raster shorter than width*height"));
    }
    Ok(Graymap { width, height, pixels: bytes[pos..pos + n].to_vec() })
}
