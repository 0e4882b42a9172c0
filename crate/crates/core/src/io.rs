//! File formats.
//!
//! Cube and raster files are a short ASCII header terminated by an `END` line,
//! followed by little-endian `f64` values:
//!
//! ```text
//! HSICUBE1                 RASTER1
//! bands <L>                height <H>
//! height <H>               width <W>
//! width <W>                layout row-major f64le
//! layout band-major f64le  END
//! END
//! ```
//!
//! Cube payloads are band-major (all pixels of band 0, then band 1, ...), with
//! pixels row-major inside a band. Endmember CSVs have a header row of names and
//! one row per band. Config files hold `key = value` lines; blank lines and
//! lines starting with `#` are ignored. Every float is written with Rust's
//! shortest round-trip formatting, so all formats round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{EndmemberLibrary, SpectralCube};
use crate::error::{Error, Result};
use crate::grid::GridDims;

pub const CUBE_MAGIC: &str = "HSICUBE1";
pub const RASTER_MAGIC: &str = "RASTER1";
const CUBE_LAYOUT: &str = "band-major f64le";
const RASTER_LAYOUT: &str = "row-major f64le";

/// Reads a whole file, mapping failures to I/O errors.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes a whole file, mapping failures to I/O errors.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| Error::format(path, "not valid UTF-8"))
}

fn encode(header: &str, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = header.as_bytes().to_vec();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a binary file into header fields and payload values.
fn decode(path: &Path, bytes: &[u8], magic: &str, keys: &[&str]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut pos = 0;
    let mut line = |bytes: &[u8]| -> Result<String> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(str::to_owned)
            .map_err(|_| Error::format(path, "header is not UTF-8"))
    };
    if line(bytes)? != magic {
        return Err(Error::format(path, format!("missing {magic} magic")));
    }
    let mut fields = Vec::with_capacity(keys.len());
    for key in keys {
        let l = line(bytes)?;
        let value = l
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| Error::format(path, format!("expected `{key} <n>`, found `{l}`")))?;
        let n: usize = value
            .parse()
            .map_err(|_| Error::format(path, format!("bad {key} value `{value}`")))?;
        if n == 0 {
            return Err(Error::format(path, format!("{key} must be positive")));
        }
        fields.push(n);
    }
    let layout = line(bytes)?;
    if !layout.starts_with("layout ") {
        return Err(Error::format(path, "missing layout line"));
    }
    if line(bytes)? != "END" {
        return Err(Error::format(path, "missing END line"));
    }
    let payload = &bytes[pos..];
    let expected = fields.iter().product::<usize>() * 8;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((fields, values))
}

pub fn encode_cube(cube: &SpectralCube) -> Vec<u8> {
    let dims = cube.dims();
    let header = format!(
        "{CUBE_MAGIC}\nbands {}\nheight {}\nwidth {}\nlayout {CUBE_LAYOUT}\nEND\n",
        cube.bands(),
        dims.height(),
        dims.width()
    );
    // column-major storage of an L x N matrix is pixel-major; transpose for band-major
    encode(&header, cube.data().transpose().iter().copied())
}

pub fn write_cube(path: &Path, cube: &SpectralCube) -> Result<()> {
    write_bytes(path, &encode_cube(cube))
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    let bytes = read_bytes(path)?;
    let (f, values) = decode(path, &bytes, CUBE_MAGIC, &["bands", "height", "width"])?;
    let (bands, dims) = (f[0], GridDims::new(f[1], f[2])?);
    let data = DMatrix::from_row_slice(bands, dims.len(), &values);
    SpectralCube::new(dims, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn encode_raster(dims: GridDims, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != dims.len() {
        return Err(Error::validation(format!(
            "{} raster values for {} pixels",
            values.len(),
            dims.len()
        )));
    }
    let header = format!(
        "{RASTER_MAGIC}\nheight {}\nwidth {}\nlayout {RASTER_LAYOUT}\nEND\n",
        dims.height(),
        dims.width()
    );
    Ok(encode(&header, values.iter().copied()))
}

pub fn write_raster(path: &Path, dims: GridDims, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_raster(dims, values)?)
}

pub fn read_raster(path: &Path) -> Result<(GridDims, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    let (f, values) = decode(path, &bytes, RASTER_MAGIC, &["height", "width"])?;
    Ok((GridDims::new(f[0], f[1])?, values))
}

/// Reads a 0/1 raster as a boolean mask.
pub fn read_mask(path: &Path) -> Result<(GridDims, Vec<bool>)> {
    let (dims, values) = read_raster(path)?;
    let mask = values
        .iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::format(path, format!("mask value {v} is not 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    Ok((dims, mask))
}

pub fn mask_values(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

pub fn encode_endmembers_csv(lib: &EndmemberLibrary) -> String {
    let mut out = lib.names().join(",");
    out.push('\n');
    let e = lib.data();
    for l in 0..e.nrows() {
        let row: Vec<String> = e.row(l).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_endmembers_csv(path: &Path, lib: &EndmemberLibrary) -> Result<()> {
    write_bytes(path, encode_endmembers_csv(lib).as_bytes())
}

pub fn read_endmembers_csv(path: &Path) -> Result<EndmemberLibrary> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty endmember file"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_owned()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != names.len() {
            return Err(Error::format(
                path,
                format!("row {} has {} fields, header has {}", k + 1, row.len(), names.len()),
            ));
        }
        for field in row {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("bad number `{field}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::format(path, "no band rows"));
    }
    let data = DMatrix::from_row_slice(rows, names.len(), &values);
    EndmemberLibrary::with_names(data, names).map_err(|e| Error::format(path, e.to_string()))
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::format(path, format!("line {}: empty key", n + 1)));
            }
            entries.push((key.to_owned(), value.trim().to_owned()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    /// Text form, preceded by `# comment` lines.
    pub fn render(&self, comment: &str) -> String {
        let mut out = String::new();
        for line in comment.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path, comment: &str) -> Result<()> {
        write_bytes(path, self.render(comment).as_bytes())
    }
}
