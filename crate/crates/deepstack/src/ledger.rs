//! Append-only CSV ledgers, training-log CSVs and split manifests.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use deepstack_core::data::{Dataset, Part};
use deepstack_core::train::TrainLog;

use crate::error::{Error, Result};

pub const GENERATIVE_HEADER: &str = "dataset,scheme,depth,mean_ll,stderr,sigma,S,seed";
pub const CLASSIFICATION_HEADER: &str = "dataset,scheme,depth,stage,error,ci,seed";
pub const GENERATIVE_LEDGER: &str = "generative.csv";
pub const CLASSIFICATION_LEDGER: &str = "classification.csv";

/// Appends `row` under an exclusive lock, writing `header` first when the
/// file is new or empty. Refuses to append to a file with another header.
pub fn append_row(path: &Path, header: &str, row: &str) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f: File = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(io)?;
    f.lock().map_err(io)?;
    let result = (|| {
        let mut existing = String::new();
        f.seek(SeekFrom::Start(0)).map_err(io)?;
        f.read_to_string(&mut existing).map_err(io)?;
        match existing.lines().next() {
            None => writeln!(f, "{header}").map_err(io)?,
            Some(h) if h == header => {
                if !existing.ends_with('\n') {
                    writeln!(f).map_err(io)?;
                }
            }
            Some(h) => {
                return Err(Error::Config(format!(
                    "{}: ledger header '{h}' does not match '{header}'",
                    path.display()
                )))
            }
        }
        writeln!(f, "{row}").map_err(io)?;
        f.flush().map_err(io)
    })();
    let _ = f.unlock();
    result
}

/// Quotes a field if it contains a comma, quote or newline.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Splits one CSV line, honouring double quotes.
pub fn split_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().map(split_line).unwrap_or_default();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let r = split_line(l);
        if r.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("{} fields, header has {}", r.len(), header.len()),
            });
        }
        rows.push(r);
    }
    Ok((header, rows))
}

/// `epoch,train_err,valid_err,seconds,penalty_1..penalty_N`; an absent
/// validation error is left empty.
pub fn train_log_csv(log: &TrainLog, depth: usize) -> String {
    let mut out = String::from("epoch,train_err,valid_err,seconds");
    for i in 1..=depth {
        out.push_str(&format!(",penalty_{i}"));
    }
    out.push('\n');
    for r in &log.records {
        out.push_str(&format!(
            "{},{},{},{}",
            r.epoch,
            r.train_err,
            r.valid_err.map(|v| v.to_string()).unwrap_or_default(),
            r.seconds
        ));
        for i in 0..depth {
            out.push_str(&format!(",{}", r.penalties.get(i).copied().unwrap_or(0.0)));
        }
        out.push('\n');
    }
    out
}

/// `part,index` rows giving each split's source row indices.
pub fn split_manifest(dataset: &Dataset) -> String {
    let mut out = String::from("part,index\n");
    for (part, subset) in dataset.parts() {
        let name = part_name(part);
        for i in &subset.source {
            out.push_str(&format!("{name},{i}\n"));
        }
    }
    out
}

pub fn part_name(part: Part) -> &'static str {
    match part {
        Part::Train => "train",
        Part::Valid => "valid",
        Part::Test => "test",
    }
}

/// Source indices per split, in train/valid/test order.
pub fn read_split_manifest(path: &Path) -> Result<[Vec<usize>; 3]> {
    let (header, rows) = read_csv(path)?;
    if header != ["part", "index"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header 'part,index'".into(),
        });
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (i, r) in rows.iter().enumerate() {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg,
        };
        let slot = match r[0].as_str() {
            "train" => 0,
            "valid" => 1,
            "test" => 2,
            p => return Err(bad(format!("unknown part '{p}'"))),
        };
        parts[slot].push(r[1].parse().map_err(|_| bad(format!("bad index '{}'", r[1])))?);
    }
    Ok(parts)
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
