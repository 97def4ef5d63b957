//! Frame decoding, affine warp/crop to the template grid, bounding-box
//! geometry, and annotated-frame emission.
//!
//! Grayscale input is portable graymap (binary P5 or ASCII P2); annotated
//! output is binary pixmap (P6). Pixel values live in [0, 1].

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::AffineState;

/// A decoded grayscale frame. `pixels` is height x width, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: DMatrix<f64>,
}

impl GrayFrame {
    /// Builds a frame, clamping pixels into [0, 1].
    pub fn from_pixels(mut pixels: DMatrix<f64>) -> Result<Self> {
        let (height, width) = pixels.shape();
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("frame must be non-empty".to_string()));
        }
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("frame pixels"));
        }
        pixels.apply(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[(row, col)]
    }

    /// Pixel value with out-of-bounds reads as 0.
    fn tap(&self, row: i64, col: i64) -> f64 {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            0.0
        } else {
            self.pixels[(row as usize, col as usize)]
        }
    }

    /// Bilinear sample at (x, y) = (column, row) coordinates; taps outside
    /// the frame read 0.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let top = (1.0 - fx) * self.tap(yi, xi) + fx * self.tap(yi, xi + 1);
        let bot = (1.0 - fx) * self.tap(yi + 1, xi) + fx * self.tap(yi + 1, xi + 1);
        (1.0 - fy) * top + fy * bot
    }
}

/// Axis-aligned box, top-left corner plus size, in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0) || !(h > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidParam(format!(
                "bbox must have positive size, got ({x}, {y}, {w}, {h})"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }
}

// ---------------------------------------------------------------------------
// PGM decoding / encoding

struct ByteCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::PgmParse { offset: self.pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| Error::PgmParse { offset: start, msg: format!("invalid {what}: {text}") })
    }
}

/// Decodes a binary (P5) or ASCII (P2) portable graymap with
/// `maxval <= 65535`; samples are scaled by `1/maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut cur = ByteCursor { data: bytes, pos: 0 };
    if bytes.len() < 2 {
        return cur.fail("file shorter than magic");
    }
    let magic = &bytes[0..2];
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return cur.fail(format!("bad magic {:?}, want P5 or P2", magic)),
    };
    cur.pos = 2;

    let width = cur.next_uint("width")? as usize;
    let height = cur.next_uint("height")? as usize;
    if width == 0 || height == 0 {
        return cur.fail(format!("degenerate dimensions {width}x{height}"));
    }
    let maxval = cur.next_uint("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return cur.fail(format!("maxval {maxval} out of range [1, 65535]"));
    }
    let scale = 1.0 / maxval as f64;
    let n = width * height;

    let mut pixels = DMatrix::zeros(height, width);
    if binary {
        // exactly one whitespace byte separates the header from the payload
        match cur.peek() {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return cur.fail("expected single whitespace before payload"),
        }
        let wide = maxval > 255;
        let sample_bytes = if wide { 2 } else { 1 };
        let available = bytes.len() - cur.pos;
        if available < n * sample_bytes {
            return cur.fail(format!(
                "payload shorter than width*height: {available} bytes for {n} samples"
            ));
        }
        for i in 0..n {
            let raw = if wide {
                let hi = bytes[cur.pos + 2 * i] as u64;
                let lo = bytes[cur.pos + 2 * i + 1] as u64;
                (hi << 8) | lo
            } else {
                bytes[cur.pos + i] as u64
            };
            pixels[(i / width, i % width)] = (raw as f64 * scale).clamp(0.0, 1.0);
        }
    } else {
        for i in 0..n {
            let raw = cur.next_uint("sample")?;
            pixels[(i / width, i % width)] = (raw as f64 * scale).clamp(0.0, 1.0);
        }
    }

    Ok(GrayFrame { width, height, pixels })
}

/// Encodes a frame as binary P5 with maxval 255.
pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.reserve(frame.width * frame.height);
    for r in 0..frame.height {
        for c in 0..frame.width {
            out.push((frame.pixels[(r, c)] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Warp / crop and box geometry

/// Samples the frame over the warped template grid: template coordinates
/// `u, v` in `[-side/2, side/2)` map through
/// `center + R(theta) * Shear(skew) * diag(scale, scale*aspect) * (u, v)`,
/// bilinear interpolation, out-of-bounds reads 0. Output is row major with
/// length `side^2`.
pub fn warp_crop(frame: &GrayFrame, state: &AffineState, side: usize) -> Result<DVector<f64>> {
    state.validate()?;
    if side == 0 {
        return Err(Error::InvalidParam("side must be >= 1".to_string()));
    }
    let a = state.warp_matrix();
    let half = side as f64 / 2.0;
    let mut out = DVector::zeros(side * side);
    for row in 0..side {
        let v = row as f64 - half;
        for col in 0..side {
            let u = col as f64 - half;
            let p = Vector2::new(state.tx, state.ty) + a * Vector2::new(u, v);
            out[row * side + col] = frame.bilinear(p.x, p.y);
        }
    }
    Ok(out)
}

/// Axis-aligned hull of the four warped template corners
/// `(±side/2, ±side/2)`.
pub fn state_to_bbox(state: &AffineState, side: usize) -> BBox {
    let a = state.warp_matrix();
    let half = side as f64 / 2.0;
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (su, sv) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let p = a * Vector2::new(su * half, sv * half);
        min_x = min_x.min(state.tx + p.x);
        max_x = max_x.max(state.tx + p.x);
        min_y = min_y.min(state.ty + p.y);
        max_y = max_y.max(state.ty + p.y);
    }
    BBox { x: min_x, y: min_y, w: max_x - min_x, h: max_y - min_y }
}

/// Renders the frame as binary P6 with a 1-pixel rectangle stroke over
/// `bbox`, clipped to the frame.
pub fn annotate(frame: &GrayFrame, bbox: &BBox) -> Vec<u8> {
    let w = frame.width as i64;
    let h = frame.height as i64;
    let x0 = bbox.x.round() as i64;
    let y0 = bbox.y.round() as i64;
    let x1 = (bbox.x + bbox.w).round() as i64 - 1;
    let y1 = (bbox.y + bbox.h).round() as i64 - 1;

    let on_stroke = |r: i64, c: i64| -> bool {
        let inside_x = c >= x0.max(0) && c <= x1.min(w - 1);
        let inside_y = r >= y0.max(0) && r <= y1.min(h - 1);
        ((r == y0 || r == y1) && inside_x) || ((c == x0 || c == x1) && inside_y)
    };

    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.reserve(frame.width * frame.height * 3);
    for r in 0..h {
        for c in 0..w {
            if on_stroke(r, c) {
                out.extend_from_slice(&[255, 0, 0]);
            } else {
                let g = (frame.pixels[(r as usize, c as usize)] * 255.0)
                    .round()
                    .clamp(0.0, 255.0) as u8;
                out.extend_from_slice(&[g, g, g]);
            }
        }
    }
    out
}

/// The linear part of a state's warp, exposed for geometry checks.
pub fn warp_linear_part(state: &AffineState) -> Matrix2<f64> {
    state.warp_matrix()
}
