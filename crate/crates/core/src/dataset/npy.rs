//! Minimal NPY v1.0 support for the two array kinds the datasets use:
//! row-major `<f4` matrices and `<i8` vectors.
//!
//! Layout: `\x93NUMPY`, version bytes `1 0`, a little-endian `u16` header
//! length, then an ASCII dict literal padded with spaces and terminated by
//! `\n` so the data starts on a 64-byte boundary, then raw little-endian
//! values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Parsed NPY header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl Header {
    fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

fn format_shape(shape: &[usize]) -> String {
    match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Encodes the preamble (magic through padded header) for a C-order array.
pub fn encode_header(descr: &str, shape: &[usize]) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{descr}', 'fortran_order': False, 'shape': {}, }}",
        format_shape(shape)
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let total = unpadded.div_ceil(ALIGN) * ALIGN;
    let header_len = total - MAGIC.len() - 4;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    out
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Parses the header dict literal written by numpy or by [`encode_header`].
pub fn parse_header_dict(text: &str) -> std::result::Result<Header, String> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or("header is not a dict literal")?;
    let field = |key: &str| -> std::result::Result<&str, String> {
        let needle = format!("'{key}':");
        let start = body
            .find(&needle)
            .ok_or_else(|| format!("header lacks '{key}'"))?
            + needle.len();
        Ok(body[start..].trim_start())
    };

    let descr_src = field("descr")?;
    let descr = descr_src
        .strip_prefix('\'')
        .and_then(|t| t.split('\'').next())
        .ok_or("malformed descr")?
        .to_string();

    let fo = field("fortran_order")?;
    let fortran_order = if fo.starts_with("False") {
        false
    } else if fo.starts_with("True") {
        true
    } else {
        return Err("malformed fortran_order".into());
    };

    let shape_src = field("shape")?;
    let inner = shape_src
        .strip_prefix('(')
        .and_then(|t| t.split(')').next())
        .ok_or("malformed shape")?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|e| format!("bad dimension {s:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<Header> {
    let mut pre = [0u8; 8];
    r.read_exact(&mut pre).map_err(|e| Error::io(path.display(), e))?;
    if &pre[..6] != MAGIC {
        return Err(format_err(path, "not an NPY file (bad magic)"));
    }
    let header_len = match pre[6] {
        1 => {
            let mut b = [0u8; 2];
            r.read_exact(&mut b).map_err(|e| Error::io(path.display(), e))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| Error::io(path.display(), e))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(format_err(path, format!("unsupported NPY version {v}.{}", pre[7]))),
    };
    let mut text = vec![0u8; header_len];
    r.read_exact(&mut text).map_err(|e| Error::io(path.display(), e))?;
    let text = String::from_utf8(text).map_err(|_| format_err(path, "header is not text"))?;
    parse_header_dict(&text).map_err(|m| format_err(path, m))
}

fn write_array(path: &Path, descr: &str, shape: &[usize], bytes: impl Iterator<Item = [u8; 8]>, width: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path.display(), e);
    w.write_all(&encode_header(descr, shape)).map_err(io)?;
    for b in bytes {
        w.write_all(&b[..width]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a C-order `<f4` matrix of shape `(rows, cols)`.
pub fn write_f32_matrix(path: &Path, data: &[f32], rows: usize, cols: usize) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} values for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    let bytes = data.iter().map(|v| {
        let mut b = [0u8; 8];
        b[..4].copy_from_slice(&v.to_le_bytes());
        b
    });
    write_array(path, "<f4", &[rows, cols], bytes, 4)
}

/// Writes an `<i8` vector.
pub fn write_i64_vector(path: &Path, data: &[i64]) -> Result<()> {
    write_array(path, "<i8", &[data.len()], data.iter().map(|v| v.to_le_bytes()), 8)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::io(path.display(), e))?,
    ))
}

fn read_payload<R: Read>(r: &mut R, path: &Path, header: &Header, width: usize) -> Result<Vec<u8>> {
    let mut bytes = vec![0u8; header.element_count() * width];
    r.read_exact(&mut bytes)
        .map_err(|_| format_err(path, "file is shorter than its header declares"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path.display(), e))? != 0 {
        return Err(format_err(path, "trailing bytes after array data"));
    }
    Ok(bytes)
}

fn expect_c_order(path: &Path, h: &Header) -> Result<()> {
    if h.fortran_order {
        return Err(format_err(path, "Fortran-ordered arrays are not supported"));
    }
    Ok(())
}

/// Reads a 2-D `<f4` array, returning `(data, rows, cols)`.
pub fn read_f32_matrix(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let mut r = open(path)?;
    let h = read_header(&mut r, path)?;
    expect_c_order(path, &h)?;
    if h.descr != "<f4" {
        return Err(format_err(path, format!("expected dtype <f4, found {}", h.descr)));
    }
    let [rows, cols] = h.shape[..] else {
        return Err(format_err(path, format!("expected a 2-D array, found shape {:?}", h.shape)));
    };
    let bytes = read_payload(&mut r, path, &h, 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((data, rows, cols))
}

/// Reads a 1-D `<i8` array.
pub fn read_i64_vector(path: &Path) -> Result<Vec<i64>> {
    let mut r = open(path)?;
    let h = read_header(&mut r, path)?;
    expect_c_order(path, &h)?;
    if h.descr != "<i8" {
        return Err(format_err(path, format!("expected dtype <i8, found {}", h.descr)));
    }
    if h.shape.len() != 1 {
        return Err(format_err(path, format!("expected a 1-D array, found shape {:?}", h.shape)));
    }
    let bytes = read_payload(&mut r, path, &h, 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_arrays(ds: &LabeledDataset, x_path: &Path, y_path: &Path) -> Result<()> {
    write_f32_matrix(x_path, &ds.spectra, ds.len(), ds.n_datapoints)?;
    write_i64_vector(y_path, &ds.labels)
}

pub fn load_arrays(role: Split, x_path: &Path, y_path: &Path) -> Result<LabeledDataset> {
    let (spectra, rows, cols) = read_f32_matrix(x_path)?;
    let labels = read_i64_vector(y_path)?;
    if labels.len() != rows {
        return Err(Error::Format(format!(
            "{} has {rows} rows but {} has {} labels",
            x_path.display(),
            y_path.display(),
            labels.len()
        )));
    }
    LabeledDataset::new(role, cols, spectra, labels)
}
