//! Versioned textual checkpoint format: string metadata plus named,
//! shape-annotated f64 tensors stored as hex bit patterns so round-trips are
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Params;
use crate::{Error, Result};

const MAGIC: &str = "evtrav-checkpoint v1";

/// Raw tensor payload: shape and flat values.
pub type TensorData = (Vec<usize>, Vec<f64>);

/// Serializes metadata and every parameter tensor of `net`.
pub fn save<P: Params + ?Sized>(
    path: &Path,
    meta: &BTreeMap<String, String>,
    net: &mut P,
) -> Result<()> {
    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    net.visit_params("", &mut |name, t| {
        tensors.push((name, t.shape.clone(), t.values.clone()));
    });

    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in meta {
        if k.contains(char::is_whitespace) {
            return Err(Error::domain(format!("meta key '{k}' contains whitespace")));
        }
        writeln!(out, "meta {k} {v}").expect("write to string");
    }
    for (name, shape, values) in &tensors {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join(",")).expect("write to string");
        let mut line = String::with_capacity(values.len() * 17);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{:016x}", v.to_bits()).expect("write to string");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("end\n");
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a checkpoint back as metadata plus named raw tensors.
pub fn load_raw(path: &Path) -> Result<(BTreeMap<String, String>, BTreeMap<String, TensorData>)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::parse(&p, format!("expected header '{MAGIC}'")));
    }
    let mut meta = BTreeMap::new();
    let mut tensors = BTreeMap::new();
    let mut saw_end = false;
    while let Some(line) = lines.next() {
        if line == "end" {
            saw_end = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once(' ')
                .ok_or_else(|| Error::parse(&p, format!("bad meta line '{line}'")))?;
            meta.insert(k.to_string(), v.to_string());
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let (name, dims_str) = rest
                .split_once(' ')
                .ok_or_else(|| Error::parse(&p, format!("bad tensor line '{line}'")))?;
            let shape: Vec<usize> = dims_str
                .split(',')
                .map(|d| {
                    d.parse::<usize>()
                        .map_err(|_| Error::parse(&p, format!("bad dim '{d}'")))
                })
                .collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let data_line = lines
                .next()
                .ok_or_else(|| Error::parse(&p, format!("missing data for tensor '{name}'")))?;
            let values: Vec<f64> = data_line
                .split_ascii_whitespace()
                .map(|h| {
                    u64::from_str_radix(h, 16)
                        .map(f64::from_bits)
                        .map_err(|_| Error::parse(&p, format!("bad hex value '{h}'")))
                })
                .collect::<Result<_>>()?;
            if values.len() != n {
                return Err(Error::parse(
                    &p,
                    format!("tensor '{name}' has {} values for shape {shape:?}", values.len()),
                ));
            }
            tensors.insert(name.to_string(), (shape, values));
        } else if !line.trim().is_empty() {
            return Err(Error::parse(&p, format!("unrecognized line '{line}'")));
        }
    }
    if !saw_end {
        return Err(Error::parse(&p, "truncated checkpoint: missing 'end'"));
    }
    Ok((meta, tensors))
}

/// Loads tensors into an already-constructed network whose parameter names
/// and shapes must match the file exactly.
pub fn load_into<P: Params + ?Sized>(
    path: &Path,
    net: &mut P,
) -> Result<BTreeMap<String, String>> {
    let (meta, mut tensors) = load_raw(path)?;
    let mut missing = Vec::new();
    net.visit_params("", &mut |name, t| {
        match tensors.remove(&name) {
            Some((shape, values)) if shape == t.shape => {
                t.values = values;
            }
            Some((shape, _)) => missing.push(format!(
                "tensor '{name}' shape mismatch: file {shape:?} vs net {:?}",
                t.shape
            )),
            None => missing.push(format!("tensor '{name}' absent from checkpoint")),
        }
    });
    if !missing.is_empty() {
        return Err(Error::parse(path.display().to_string(), missing.join("; ")));
    }
    if !tensors.is_empty() {
        let extra: Vec<String> = tensors.keys().cloned().collect();
        return Err(Error::parse(
            path.display().to_string(),
            format!("checkpoint has extra tensors: {}", extra.join(", ")),
        ));
    }
    Ok(meta)
}
