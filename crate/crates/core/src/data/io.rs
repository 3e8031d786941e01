//! CSV and IDX dataset files.
//!
//! CSV: header `f0,...,f{d-1},label`, one sample per line. Values are
//! written in Rust's shortest round-trip decimal form (at most 17
//! significant digits), so save → load is bit-exact.
//!
//! IDX: big-endian, magic `0x0000TTNN` where `TT` is the element type
//! (`0x08` u8, `0x09` i8, `0x0B` i16, `0x0C` i32, `0x0D` f32, `0x0E` f64)
//! and `NN` the number of dimensions. u8 images are scaled to `[0, 1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..ds.dim() {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for i in 0..ds.len() {
        for v in ds.sample(i) {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{}\n", ds.labels()[i]));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads a CSV dataset. `num_classes = None` infers `max(label) + 1`.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(&name, "line 1", "file is empty"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = cols.len().saturating_sub(1);
    let header_ok = cols.last() == Some(&"label") && cols[..dim].iter().enumerate().all(|(j, c)| *c == format!("f{j}"));
    if !header_ok || dim == 0 {
        return Err(Error::parse(&name, "line 1", format!("expected header f0,...,f{{d-1}},label; found `{header}`")));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let loc = format!("line {}", lineno + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::parse(&name, &loc, format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        for (j, f) in fields[..dim].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(&name, &loc, format!("column f{j}: `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(&name, &loc, format!("column f{j} is not finite")));
            }
            data.push(v);
        }
        let y: usize = fields[dim]
            .parse()
            .map_err(|_| Error::parse(&name, &loc, format!("label `{}` is not a class index", fields[dim])))?;
        if let Some(k) = num_classes {
            if y >= k {
                return Err(Error::parse(&name, &loc, format!("label {y} >= number of classes {k}")));
            }
        }
        labels.push(y);
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Matrix::from_vec(labels.len(), dim, data)?;
    Dataset::new(features, labels, k, Provenance::new(format!("csv {name}")))
}

/// A decoded IDX array.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub type_code: u8,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let name = path.display().to_string();
    let bytes = fs::read(path)?;
    parse_idx(&bytes, &name)
}

fn parse_idx(bytes: &[u8], name: &str) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::parse(name, "byte 0", "truncated magic number"));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let type_code = bytes[2];
    let ndim = bytes[3] as usize;
    let width = match type_code {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        _ => 0,
    };
    if bytes[0] != 0 || bytes[1] != 0 || width == 0 || ndim == 0 {
        return Err(Error::parse(
            name,
            "byte 0",
            format!("bad magic number: expected 0x0000TTNN with TT in {{08,09,0B,0C,0D,0E}}, found {magic:#010x}"),
        ));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::parse(name, "byte 4", "truncated dimension header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() != header + count * width {
        return Err(Error::parse(
            name,
            format!("byte {header}"),
            format!("expected {} data bytes for dims {:?}, found {}", count * width, dims, bytes.len() - header),
        ));
    }
    let body = &bytes[header..];
    let values: Vec<f64> = body
        .chunks_exact(width)
        .map(|c| match type_code {
            0x08 => f64::from(c[0]),
            0x09 => f64::from(c[0] as i8),
            0x0B => f64::from(i16::from_be_bytes([c[0], c[1]])),
            0x0C => f64::from(i32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            0x0D => f64::from(f32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            _ => f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]),
        })
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::parse(name, format!("byte {}", header + pos * width), "non-finite value"));
    }
    Ok(IdxArray { type_code, dims, values })
}

/// Loads an IDX image file plus IDX label file (MNIST layout). u8 pixel
/// intensities are divided by 255.
pub fn load_idx(images: &Path, labels: &Path, num_classes: usize) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    let lab_name = labels.display().to_string();
    if lab.dims.len() != 1 {
        return Err(Error::parse(&lab_name, "byte 3", format!("label file must be 1-D, found {} dims", lab.dims.len())));
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::parse(&lab_name, "byte 4", format!("{} labels for {} images", lab.dims[0], n)));
    }
    let dim: usize = img.dims[1..].iter().product::<usize>().max(1);
    let scale = if img.type_code == 0x08 { 1.0 / 255.0 } else { 1.0 };
    let features = Matrix::from_vec(n, dim, img.values.iter().map(|v| v * scale).collect())?;
    let header = 4 + 4 * lab.dims.len();
    let width = if lab.type_code == 0x0E { 8 } else if matches!(lab.type_code, 0x0C | 0x0D) { 4 } else if lab.type_code == 0x0B { 2 } else { 1 };
    let mut ys = Vec::with_capacity(n);
    for (i, &v) in lab.values.iter().enumerate() {
        if v < 0.0 || v.fract() != 0.0 || v as usize >= num_classes {
            return Err(Error::parse(
                &lab_name,
                format!("byte {}", header + i * width),
                format!("label {v} outside [0, {num_classes})"),
            ));
        }
        ys.push(v as usize);
    }
    Dataset::new(
        features,
        ys,
        num_classes,
        Provenance::new(format!("idx {} + {}", images.display(), lab_name)),
    )
}

/// Writes features as an f64 IDX array (`n × dim`) and labels as u8.
pub fn save_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    if ds.num_classes() > 256 {
        return Err(Error::InvalidArgument("u8 label file holds at most 256 classes".into()));
    }
    let mut img = Vec::with_capacity(12 + ds.len() * ds.dim() * 8);
    img.extend_from_slice(&[0, 0, 0x0E, 2]);
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(ds.dim() as u32).to_be_bytes());
    for v in ds.features().as_slice() {
        img.extend_from_slice(&v.to_be_bytes());
    }
    fs::File::create(images)?.write_all(&img)?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&[0, 0, 0x08, 1]);
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels().iter().map(|&y| y as u8));
    fs::File::create(labels)?.write_all(&lab)?;
    Ok(())
}
