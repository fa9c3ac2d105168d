//! Plain-text model files.
//!
//! ```text
//! # comments start with '#'
//! [rates]
//! 0 1 0.5        # x y W(x,y)
//! [g]
//! 0 1 1          # x y g(x,y)
//! [h]
//! 0 0.25         # x h(x)
//! ```
//!
//! States are 0-based; entries that are not listed are 0. The number of
//! states is one more than the largest index cited. Values are written with
//! Rust's shortest round-trip float formatting, so `write(read(f))` is
//! bit-exact on the parsed values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{JumpModel, ModelSpec};

#[derive(Clone, Copy)]
enum Section {
    Rates,
    G,
    H,
}

/// Parse model text into an unvalidated description.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let mut spec = ModelSpec::default();
    let mut section = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = Some(match line {
                "[rates]" => Section::Rates,
                "[g]" => Section::G,
                "[h]" => Section::H,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown section {other}"),
                    })
                }
            });
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let state = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("bad state index `{s}`")));
        let value = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad value `{s}`")));
        match section {
            None => return Err(parse_err("entry before any section header".into())),
            Some(Section::Rates) | Some(Section::G) => {
                if fields.len() != 3 {
                    return Err(parse_err(format!("expected `x y value`, got {} fields", fields.len())));
                }
                let entry = (state(fields[0])?, state(fields[1])?, value(fields[2])?);
                if matches!(section, Some(Section::Rates)) {
                    spec.rates.push(entry);
                } else {
                    spec.g.push(entry);
                }
            }
            Some(Section::H) => {
                if fields.len() != 2 {
                    return Err(parse_err(format!("expected `x value`, got {} fields", fields.len())));
                }
                spec.h.push((state(fields[0])?, value(fields[1])?));
            }
        }
    }
    Ok(spec)
}

/// Parse and validate a model.
pub fn read_model(text: &str) -> Result<JumpModel> {
    JumpModel::build(&parse_model(text)?)
}

pub fn read_model_file(path: &Path) -> Result<JumpModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    read_model(&text)
}

/// Serialize a model description.
pub fn write_spec(spec: &ModelSpec) -> String {
    let mut out = String::new();
    out.push_str("[rates]\n");
    for &(x, y, w) in &spec.rates {
        let _ = writeln!(out, "{x} {y} {w:?}");
    }
    out.push_str("[g]\n");
    for &(x, y, g) in &spec.g {
        let _ = writeln!(out, "{x} {y} {g:?}");
    }
    out.push_str("[h]\n");
    for &(x, h) in &spec.h {
        let _ = writeln!(out, "{x} {h:?}");
    }
    out
}

pub fn write_model(model: &JumpModel) -> String {
    write_spec(&model.to_spec())
}
