//! Snapshot persistence.
//!
//! Text format, one field per line:
//!
//! ```text
//! batchol-snapshot 1
//! dimension <d>
//! batch_id <id | none>
//! bias <f64>
//! weights <d values>
//! counts <d+1 values>      (optional)
//! fisher <d+1 values>      (optional)
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! snapshot back reproduces it bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::update::RoundState;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::optim::PerCoordState;

pub const SNAPSHOT_MAGIC: &str = "batchol-snapshot";
const VERSION: u32 = 1;

/// Model state after training through `batch_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub model: LinearModel,
    /// Last batch trained on; `None` for a model that has not been updated
    /// online yet.
    pub batch_id: Option<u32>,
    pub state: RoundState,
}

impl Snapshot {
    pub fn initial(model: LinearModel) -> Self {
        Self {
            model,
            batch_id: None,
            state: RoundState::default(),
        }
    }
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{}", v.to_string());
    }
    s
}

pub fn write_snapshot<W: Write>(mut out: W, snap: &Snapshot) -> Result<()> {
    let d = snap.model.dimension();
    writeln!(out, "{SNAPSHOT_MAGIC} {VERSION}")?;
    writeln!(out, "dimension {d}")?;
    match snap.batch_id {
        Some(id) => writeln!(out, "batch_id {id}")?,
        None => writeln!(out, "batch_id none")?,
    }
    writeln!(out, "bias {}", snap.model.bias)?;
    writeln!(out, "weights {}", join(&snap.model.weights))?;
    if let Some(c) = &snap.state.counts {
        writeln!(out, "counts {}", join(&c.counts))?;
    }
    if let Some(f) = &snap.state.fisher {
        writeln!(out, "fisher {}", join(f))?;
    }
    writeln!(out, "end")?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(rest: &str, expected: usize, what: &str) -> Result<Vec<T>> {
    let v: Vec<T> = rest
        .split_ascii_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Snapshot(format!("bad {what} value '{t}'"))))
        .collect::<Result<_>>()?;
    if v.len() != expected {
        return Err(Error::Snapshot(format!("{what}: expected {expected} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Snapshot("unexpected end of file".into()))
    };
    let header = next()?;
    match header.split_once(' ') {
        Some((SNAPSHOT_MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        _ => return Err(Error::Snapshot(format!("unrecognized header '{header}'"))),
    }

    let mut dimension = None;
    let mut batch_id = None;
    let mut bias = None;
    let mut weights = None;
    let mut counts = None;
    let mut fisher = None;
    loop {
        let line = next()?;
        if line == "end" {
            break;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        let need_dim = || dimension.ok_or_else(|| Error::Snapshot(format!("'{key}' before dimension")));
        match key {
            "dimension" => {
                dimension = Some(rest.trim().parse().map_err(|_| Error::Snapshot("bad dimension".into()))?)
            }
            "batch_id" => {
                batch_id = Some(match rest.trim() {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| Error::Snapshot("bad batch_id".into()))?),
                })
            }
            "bias" => bias = Some(rest.trim().parse::<f64>().map_err(|_| Error::Snapshot("bad bias".into()))?),
            "weights" => weights = Some(parse_list::<f64>(rest, need_dim()?, "weights")?),
            "counts" => counts = Some(parse_list::<u64>(rest, need_dim()? + 1, "counts")?),
            "fisher" => fisher = Some(parse_list::<f64>(rest, need_dim()? + 1, "fisher")?),
            other => return Err(Error::Snapshot(format!("unknown field '{other}'"))),
        }
    }
    let missing = |f: &str| Error::Snapshot(format!("missing field '{f}'"));
    let model = LinearModel::new(weights.ok_or_else(|| missing("weights"))?, bias.ok_or_else(|| missing("bias"))?);
    Ok(Snapshot {
        model,
        batch_id: batch_id.ok_or_else(|| missing("batch_id"))?,
        state: RoundState {
            counts: counts.map(|counts| PerCoordState { counts }),
            fisher,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(s: &Snapshot) -> Snapshot {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, s).unwrap();
        read_snapshot(&buf[..]).unwrap()
    }

    proptest! {
        #[test]
        fn lossless(
            weights in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20),
            bias in -1e300f64..1e300,
            id in prop::option::of(any::<u32>()),
            with_state in any::<bool>(),
        ) {
            let d = weights.len();
            let state = if with_state {
                RoundState {
                    counts: Some(PerCoordState { counts: (0..=d as u64).map(|i| i * 1_000_003).collect() }),
                    fisher: Some((0..=d).map(|i| (i as f64).sqrt() / 3.0).collect()),
                }
            } else {
                RoundState::default()
            };
            let s = Snapshot { model: LinearModel::new(weights, bias), batch_id: id, state };
            prop_assert_eq!(roundtrip(&s), s);
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_snapshot(&b"garbage 1\n"[..]).is_err());
        assert!(read_snapshot(&b"batchol-snapshot 2\nend\n"[..]).is_err());
        let short = "batchol-snapshot 1\ndimension 2\nbatch_id 0\nbias 0\nweights 1\nend\n";
        assert!(read_snapshot(short.as_bytes()).is_err());
        let truncated = "batchol-snapshot 1\ndimension 1\nbatch_id 0\nbias 0\nweights 1\n";
        assert!(read_snapshot(truncated.as_bytes()).is_err());
    }
}
