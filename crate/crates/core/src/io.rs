//! File formats: `.vjsonl` feature streams, JSON documents, embedding tables.
//!
//! Every float is written with 17 significant digits so values survive a
//! text round trip bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FrameFeatures, Sequence, SequenceHeader};

/// JSON formatter printing `f64` in scientific notation with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Writes sequences as consecutive header + frame blocks.
pub fn write_vjsonl<W: Write>(mut w: W, seqs: &[Sequence]) -> Result<()> {
    for s in seqs {
        writeln!(w, "{}", to_json_string(&s.header)?)?;
        for f in &s.frames {
            writeln!(w, "{}", to_json_string(f)?)?;
        }
    }
    Ok(())
}

pub fn save_vjsonl(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    write_vjsonl(&mut w, seqs)?;
    w.flush()?;
    Ok(())
}

/// Parses one or more sequence blocks. Errors carry the 1-based line number.
pub fn read_vjsonl<R: BufRead>(r: R, source: &str) -> Result<Vec<Sequence>> {
    let parse_err = |line: usize, msg: String| Error::Parse { path: source.to_string(), line, msg };
    let mut out = Vec::new();
    let mut current: Option<Sequence> = None;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let expecting_header = match &current {
            None => true,
            Some(s) => s.frames.len() == s.header.num_frames,
        };
        if expecting_header {
            if let Some(done) = current.take() {
                out.push(done);
            }
            let header: SequenceHeader =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("header: {e}")))?;
            current = Some(Sequence { header, frames: Vec::new() });
        } else {
            let seq = current.as_mut().expect("header parsed");
            let frame: FrameFeatures = serde_json::from_str(&line).map_err(|e| {
                parse_err(lineno, format!("frame {}: {e}", seq.frames.len()))
            })?;
            seq.frames.push(frame);
        }
    }
    if let Some(s) = current {
        if s.frames.len() != s.header.num_frames {
            return Err(parse_err(
                0,
                format!(
                    "sequence {} truncated: {} of {} frames",
                    s.header.id,
                    s.frames.len(),
                    s.header.num_frames
                ),
            ));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_vjsonl(path: &Path) -> Result<Vec<Sequence>> {
    let f = fs::File::open(path)?;
    read_vjsonl(BufReader::new(f), &path.display().to_string())
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    word: String,
    vec: Vec<f64>,
}

pub fn save_embeddings(path: &Path, table: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for (word, vec) in table {
        let line = EmbeddingLine { word: word.clone(), vec: vec.clone() };
        writeln!(w, "{}", to_json_string(&line)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = BTreeMap::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EmbeddingLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.insert(e.word, e.vec);
    }
    Ok(out)
}
