//! Plain-text example format.
//!
//! ```text
//! #day 0
//! 1 3:0.5 7:1
//! 0 2:1
//! #day 1
//! ...
//! ```
//!
//! Blank lines are ignored. Feature indices must be strictly increasing on
//! each line and day markers strictly increasing through the file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Batch, Example, SparseVector};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_example(text: &str, line: usize) -> Result<Example> {
    let mut tokens = text.split_ascii_whitespace();
    let label = match tokens.next() {
        Some("1") => true,
        Some("0") => false,
        Some(other) => return Err(parse_err(line, format!("label must be 0 or 1, got '{other}'"))),
        None => return Err(parse_err(line, "empty example")),
    };
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected <index>:<value>, got '{tok}'")))?;
        let i: u32 = i.parse().map_err(|_| parse_err(line, format!("bad feature index '{i}'")))?;
        let v: f64 = v.parse().map_err(|_| parse_err(line, format!("bad feature value '{v}'")))?;
        if let Some(&prev) = indices.last() {
            if i == prev {
                return Err(parse_err(line, format!("duplicate feature index {i}")));
            }
            if i < prev {
                return Err(parse_err(line, format!("feature index {i} after {prev}")));
            }
        }
        indices.push(i);
        values.push(v);
    }
    let features = SparseVector::new(indices, values).map_err(|e| parse_err(line, e.to_string()))?;
    Ok(Example::new(features, label))
}

pub fn read_examples<R: BufRead>(input: R) -> Result<Vec<Batch>> {
    let mut batches: Vec<Batch> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix("#day") {
            let id: u32 = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad day marker '{text}'")))?;
            if let Some(last) = batches.last() {
                if id <= last.id {
                    return Err(parse_err(lineno, format!("day {id} does not follow day {}", last.id)));
                }
            }
            batches.push(Batch::new(id, Vec::new()));
            continue;
        }
        let ex = parse_example(text, lineno)?;
        batches
            .last_mut()
            .ok_or_else(|| parse_err(lineno, "example before the first day marker"))?
            .examples
            .push(ex);
    }
    Ok(batches)
}

pub fn parse_examples(path: &Path) -> Result<Vec<Batch>> {
    read_examples(BufReader::new(File::open(path)?))
}

pub fn write_examples<W: Write>(out: W, batches: &[Batch]) -> Result<()> {
    let mut out = BufWriter::new(out);
    for b in batches {
        writeln!(out, "#day {}", b.id)?;
        for e in &b.examples {
            out.write_all(if e.label { b"1" } else { b"0" })?;
            for (i, v) in e.features.iter() {
                write!(out, " {i}:{v}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Vec<Batch>> {
        read_examples(s.as_bytes())
    }

    #[test]
    fn single_line() {
        let b = read("#day 0\n1 3:0.5 7:1.0\n").unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].id, 0);
        let e = &b[0].examples[0];
        assert!(e.label);
        assert_eq!(e.features.indices(), &[3, 7]);
        assert_eq!(e.features.values(), &[0.5, 1.0]);
    }

    #[test]
    fn empty_input() {
        assert!(read("").unwrap().is_empty());
        assert!(read("\n\n").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("#day 0\n1 3:1 3:2\n", 2),
            ("#day 0\n\n2 3:1\n", 3),
            ("#day 1\n#day 0\n", 2),
            ("1 3:1\n", 1),
            ("#day 0\n1 4:1 2:1\n", 2),
            ("#day 0\n1 x:1\n", 2),
            ("#day 0\n0 1:nan\n", 2),
            ("#day zero\n", 1),
        ];
        for (text, line) in cases {
            match read(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn roundtrip_with_empty_day() {
        let b = read("#day 2\n0\n1 0:0.25\n#day 5\n#day 9\n1 1:1e-300 4:3\n").unwrap();
        assert_eq!(b[1].examples.len(), 0);
        let mut buf = Vec::new();
        write_examples(&mut buf, &b).unwrap();
        assert_eq!(read_examples(&buf[..]).unwrap(), b);
    }
}
