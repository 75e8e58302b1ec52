//! NetPBM-based raster persistence for label grids.
//!
//! Grids serialize as PGM (`P2` ASCII or `P5` binary) with maxval 2; the cell
//! values are the class codes. Physical placement rides in a sidecar comment
//! that must appear immediately after the magic number:
//!
//! ```text
//! P5
//! # resolution_m_per_px=0.005 origin_x=0 origin_y=0
//! 4000 3000
//! 2
//! <raw cell bytes>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! write → read → write reproduces a file byte for byte.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{ClassId, LabelGrid, FieldError, MAX_GRID_SIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterEncoding {
    /// `P2`, whitespace-separated decimal cell values.
    Ascii,
    /// `P5`, one raw byte per cell.
    Binary,
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("byte {offset}: {what}")]
    Malformed { offset: usize, what: String },
    #[error("{0}")]
    Grid(#[from] FieldError),
}

impl RasterError {
    fn at(offset: usize, what: impl Into<String>) -> RasterError {
        RasterError::Malformed { offset, what: what.into() }
    }
}

pub fn write_raster(
    grid: &LabelGrid,
    path: impl AsRef<Path>,
    encoding: RasterEncoding,
) -> Result<(), RasterError> {
    fs::write(path, to_bytes(grid, encoding))?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<LabelGrid, RasterError> {
    from_bytes(&fs::read(path)?)
}

pub fn to_bytes(grid: &LabelGrid, encoding: RasterEncoding) -> Vec<u8> {
    let magic = match encoding {
        RasterEncoding::Ascii => "P2",
        RasterEncoding::Binary => "P5",
    };
    let (ox, oy) = grid.origin();
    let mut out = format!(
        "{magic}\n# resolution_m_per_px={} origin_x={} origin_y={}\n{} {}\n2\n",
        grid.resolution(),
        ox,
        oy,
        grid.width(),
        grid.height()
    )
    .into_bytes();
    match encoding {
        RasterEncoding::Binary => out.extend(grid.cells().iter().map(|c| c.code())),
        RasterEncoding::Ascii => {
            for row in 0..grid.height() {
                let mut line = String::with_capacity(grid.width() * 2);
                for col in 0..grid.width() {
                    if col > 0 {
                        line.push(' ');
                    }
                    line.push(match grid.get(row, col) {
                        ClassId::Soil => '0',
                        ClassId::Crop => '1',
                        ClassId::Weed => '2',
                    });
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<LabelGrid, RasterError> {
    let mut cur = Cursor { bytes, pos: 0 };

    let binary = match cur.take(2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(RasterError::at(0, "expected magic number P2 or P5")),
    };
    if !cur.take_one_whitespace() {
        return Err(RasterError::at(cur.pos, "expected whitespace after magic number"));
    }

    let sidecar_start = cur.pos;
    if cur.take(1) != Some(b"#") {
        return Err(RasterError::at(sidecar_start, "expected placement sidecar comment"));
    }
    let line_end = cur.find(b'\n').ok_or_else(|| {
        RasterError::at(cur.pos, "unterminated sidecar comment")
    })?;
    let sidecar = std::str::from_utf8(&bytes[cur.pos..line_end])
        .map_err(|_| RasterError::at(cur.pos, "sidecar comment is not UTF-8"))?;
    let (resolution, origin_x, origin_y) = parse_sidecar(sidecar, cur.pos)?;
    cur.pos = line_end + 1;

    let width = cur.ascii_usize("width")?;
    let height = cur.ascii_usize("height")?;
    if width == 0 || height == 0 {
        return Err(RasterError::at(cur.pos, "zero raster dimension"));
    }
    if width > MAX_GRID_SIDE || height > MAX_GRID_SIDE {
        return Err(RasterError::at(
            cur.pos,
            format!("raster dimension exceeds {MAX_GRID_SIDE}"),
        ));
    }
    let maxval_at = cur.next_token_start();
    let maxval = cur.ascii_usize("maxval")?;
    if maxval != 2 {
        return Err(RasterError::at(maxval_at, format!("unsupported maxval {maxval}, expected 2")));
    }

    let n = width * height;
    let mut cells = Vec::with_capacity(n);
    if binary {
        if !cur.take_one_whitespace() {
            return Err(RasterError::at(cur.pos, "expected single whitespace before raster data"));
        }
        let data_start = cur.pos;
        let data = &bytes[data_start..];
        if data.len() < n {
            return Err(RasterError::at(
                bytes.len(),
                format!("raster data truncated: {} of {n} cells", data.len()),
            ));
        }
        if data.len() > n {
            return Err(RasterError::at(data_start + n, "trailing bytes after raster data"));
        }
        for (i, &b) in data.iter().enumerate() {
            cells.push(ClassId::from_code(b).ok_or_else(|| {
                RasterError::at(data_start + i, format!("cell value {b} exceeds maxval 2"))
            })?);
        }
    } else {
        for _ in 0..n {
            let at = cur.next_token_start();
            let v = cur.ascii_usize("cell value")?;
            cells.push(u8::try_from(v).ok().and_then(ClassId::from_code).ok_or_else(
                || RasterError::at(at, format!("cell value {v} exceeds maxval 2")),
            )?);
        }
        cur.skip_whitespace();
        if cur.pos != bytes.len() {
            return Err(RasterError::at(cur.pos, "trailing bytes after raster data"));
        }
    }

    Ok(LabelGrid::from_cells(width, height, resolution, (origin_x, origin_y), cells)?)
}

fn parse_sidecar(comment: &str, offset: usize) -> Result<(f64, f64, f64), RasterError> {
    let mut fields = comment.split_whitespace();
    let mut expect = |key: &str| -> Result<f64, RasterError> {
        let token = fields.next().ok_or_else(|| {
            RasterError::at(offset, format!("sidecar comment is missing {key}"))
        })?;
        let value = token.strip_prefix(key).and_then(|rest| rest.strip_prefix('='));
        value
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| RasterError::at(offset, format!("bad sidecar field {token:?}")))
    };
    let resolution = expect("resolution_m_per_px")?;
    let origin_x = expect("origin_x")?;
    let origin_y = expect("origin_y")?;
    Ok((resolution, origin_x, origin_y))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn take_one_whitespace(&mut self) -> bool {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn skip_whitespace(&mut self) {
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn find(&self, byte: u8) -> Option<usize> {
        self.bytes[self.pos..].iter().position(|&b| b == byte).map(|i| self.pos + i)
    }

    fn next_token_start(&self) -> usize {
        let mut p = self.pos;
        while self.bytes.get(p).is_some_and(|b| b.is_ascii_whitespace()) {
            p += 1;
        }
        p
    }

    /// Reads a whitespace-delimited unsigned decimal integer.
    fn ascii_usize(&mut self, what: &str) -> Result<usize, RasterError> {
        self.skip_whitespace();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(RasterError::at(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| RasterError::at(start, format!("{what} out of range")))
    }
}
