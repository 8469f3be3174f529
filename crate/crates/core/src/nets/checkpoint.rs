//! Plain-text parameter checkpoints.
//!
//! ```text
//! rte-apnn-checkpoint 1
//! meta <key> <value>
//! array <name> <rows> <cols>
//! <rows * cols values, row-major, whitespace separated>
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so save followed by load
//! reproduces every parameter bit for bit. Arrays are named
//! `<network>.<slot>`, e.g. `rho.block0.weight1`.

use std::fmt::Write as _;
use std::path::Path;

use super::resnet::describe;
use super::surrogate::NetBundle;
use crate::error::{Error, Result};

pub const MAGIC: &str = "rte-apnn-checkpoint 1";

/// Renders a checkpoint for `bundle` with optional metadata pairs.
pub fn to_text<B: NetBundle + ?Sized>(bundle: &B, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in meta {
        let _ = writeln!(out, "meta {k} {v}");
    }
    for (net, prefix) in bundle.nets().into_iter().zip(bundle.names()) {
        for (name, rows, cols, data) in describe(net, prefix) {
            let _ = writeln!(out, "array {name} {rows} {cols}");
            let line: Vec<String> = data.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Parsed checkpoint contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, usize, usize, Vec<f64>)>,
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint { line, message: message.into() }
}

pub fn parse(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(1, format!("missing header `{MAGIC}`"))),
    }
    let mut ck = Checkpoint::default();
    while let Some((n, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("meta") => {
                let key = parts.next().ok_or_else(|| bad(n, "meta without key"))?;
                let value: Vec<&str> = parts.collect();
                ck.meta.push((key.to_string(), value.join(" ")));
            }
            Some("array") => {
                let name = parts.next().ok_or_else(|| bad(n, "array without name"))?.to_string();
                let rows: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(n, "bad row count"))?;
                let cols: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(n, "bad column count"))?;
                let (m, data_line) = lines.next().ok_or_else(|| bad(n + 1, "missing array data"))?;
                let data = data_line
                    .split_whitespace()
                    .map(|s| s.parse::<f64>().map_err(|e| bad(m, format!("{s}: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                if data.len() != rows * cols {
                    return Err(bad(m, format!("{name}: expected {} values, found {}", rows * cols, data.len())));
                }
                ck.arrays.push((name, rows, cols, data));
            }
            Some(other) => return Err(bad(n, format!("unknown record `{other}`"))),
            None => {}
        }
    }
    Ok(ck)
}

/// Copies checkpoint arrays into `bundle`; names and shapes must match.
pub fn apply<B: NetBundle + ?Sized>(ck: &Checkpoint, bundle: &mut B) -> Result<()> {
    let names = bundle.names();
    let mut seen = 0;
    for (net, prefix) in bundle.nets_mut().into_iter().zip(names) {
        for slot in net.shape().slots() {
            let full = format!("{prefix}.{}", slot.name);
            let (_, rows, cols, data) = ck
                .arrays
                .iter()
                .find(|a| a.0 == full)
                .ok_or_else(|| Error::Checkpoint { line: 0, message: format!("missing array {full}") })?;
            if (*rows, *cols) != (slot.rows, slot.cols) {
                return Err(Error::Checkpoint {
                    line: 0,
                    message: format!("{full}: shape {rows}x{cols}, expected {}x{}", slot.rows, slot.cols),
                });
            }
            net.array_mut(&slot.name).expect("slot exists").copy_from_slice(data);
            seen += 1;
        }
    }
    if seen != ck.arrays.len() {
        return Err(Error::Checkpoint { line: 0, message: format!("{} unexpected arrays", ck.arrays.len() - seen) });
    }
    Ok(())
}

/// Writes atomically through a sibling temp file.
pub fn save<B: NetBundle + ?Sized>(path: &Path, bundle: &B, meta: &[(&str, String)]) -> Result<()> {
    crate::io::write_atomic(path, to_text(bundle, meta).as_bytes())
}

pub fn load<B: NetBundle + ?Sized>(path: &Path, bundle: &mut B) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck = parse(&text)?;
    apply(&ck, bundle)?;
    Ok(ck)
}
