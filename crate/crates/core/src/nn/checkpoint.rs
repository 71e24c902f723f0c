//! Flat text checkpoint format for [`Mlp`].
//!
//! ```text
//! sgfd-mlp 1
//! layers 4 128 3
//! hidden relu
//! output identity
//! params 1027
//! -1.2345678901234567e-01
//! ...
//! ```
//!
//! Parameters are written row-major per layer (weights, then biases) with 17
//! significant digits, which round-trips `f64` (and `f32`) exactly.

use std::io::{BufRead, Write};

use super::{Activation, Mlp};
use crate::error::{Result, SgfdError};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "sgfd-mlp";

pub fn write_text<T: Scalar, W: Write>(net: &Mlp<T>, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(usize::to_string).collect();
    writeln!(out, "layers {}", sizes.join(" "))?;
    writeln!(out, "hidden {}", net.hidden_activation().tag())?;
    writeln!(out, "output {}", net.output_activation().tag())?;
    writeln!(out, "params {}", net.num_params())?;
    for p in net.params() {
        writeln!(out, "{:.16e}", p.as_f64())?;
    }
    Ok(())
}

pub fn to_text<T: Scalar>(net: &Mlp<T>) -> String {
    let mut buf = Vec::new();
    write_text(net, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("checkpoint text is ascii")
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> SgfdError {
    SgfdError::Parse(format!("checkpoint line {line}: {msg}"))
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>,
    key: &str,
    buf: &'a mut String,
) -> Result<&'a str> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| SgfdError::Parse(format!("checkpoint truncated before `{key}`")))?;
    *buf = line?;
    buf.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| parse_err(no + 1, format!("expected `{key}`")))
}

pub fn read_text<T: Scalar, R: BufRead>(input: R) -> Result<Mlp<T>> {
    let mut lines = input.lines().enumerate();
    let mut buf = String::new();

    let version = header(&mut lines, MAGIC, &mut buf)?;
    let version: u32 = version.trim().parse().map_err(|e| parse_err(1, e))?;
    if version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format version {version}"),
        ));
    }
    let sizes: Vec<usize> = header(&mut lines, "layers", &mut buf)?
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(2, e))?;
    let hidden = header(&mut lines, "hidden", &mut buf)?.trim().to_string();
    let hidden = Activation::from_tag(&hidden).ok_or_else(|| parse_err(3, "unknown activation"))?;
    let output = header(&mut lines, "output", &mut buf)?.trim().to_string();
    let output = Activation::from_tag(&output).ok_or_else(|| parse_err(4, "unknown activation"))?;
    let count: usize = header(&mut lines, "params", &mut buf)?
        .trim()
        .parse()
        .map_err(|e| parse_err(5, e))?;

    let mut params = Vec::with_capacity(count);
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|e| parse_err(no + 1, e))?;
        params.push(T::of(v));
    }
    if params.len() != count {
        return Err(SgfdError::Parse(format!(
            "checkpoint declares {count} parameters but holds {}",
            params.len()
        )));
    }
    Mlp::from_params(&sizes, hidden, output, params)
}

pub fn save<T: Scalar>(net: &Mlp<T>, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_text(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Scalar>(path: &std::path::Path) -> Result<Mlp<T>> {
    let file = std::fs::File::open(path)?;
    read_text(std::io::BufReader::new(file))
}
