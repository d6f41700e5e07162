//! JSON-lines point sets: one `{"x":…,"y":…,"score":…}` object per line.

use std::fmt::Write as _;
use std::path::Path;

use pointscatter::ScoredPoint;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    x: f64,
    y: f64,
    score: f64,
}

pub fn encode(points: &[ScoredPoint]) -> String {
    let mut out = String::new();
    for p in points {
        let rec = Record {
            x: p.point.x,
            y: p.point.y,
            score: p.score,
        };
        let line = serde_json::to_string(&rec).expect("finite floats serialize");
        writeln!(out, "{line}").expect("string write");
    }
    out
}

/// Parses JSON lines; blank lines are skipped. Errors name the 1-based line.
pub fn decode(text: &str) -> CliResult<Vec<ScoredPoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| {
            // serde reports positions within the single line it was given
            let msg = e.to_string();
            let msg = msg
                .rsplit_once(" at line ")
                .map_or(msg.as_str(), |(m, _)| m);
            CliError::Parse(format!("line {}, column {}: {msg}", i + 1, e.column()))
        })?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(CliError::Parse(format!(
                "line {}: score {} outside [0, 1]",
                i + 1,
                rec.score
            )));
        }
        out.push(ScoredPoint::new(rec.x, rec.y, rec.score));
    }
    Ok(out)
}

pub fn read(path: &Path) -> CliResult<Vec<ScoredPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    decode(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write(path: &Path, points: &[ScoredPoint]) -> CliResult<()> {
    std::fs::write(path, encode(points)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode() {
        let pts = vec![
            ScoredPoint::new(1.0, 2.5, 0.75),
            ScoredPoint::new(0.0, 0.0, 1.0),
        ];
        let text = encode(&pts);
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"x":1.0,"y":2.5,"score":0.75}"#
        );
        assert_eq!(decode(&text).unwrap(), pts);
        assert!(decode("").unwrap().is_empty());
    }

    #[test]
    fn missing_score_names_the_line() {
        let text = "{\"x\":1,\"y\":2,\"score\":0.5}\n{\"x\":1,\"y\":2}\n";
        match decode(text) {
            Err(CliError::Parse(m)) => assert!(
                m.starts_with("line 2, column ") && m.ends_with("missing field `score`"),
                "{m}"
            ),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(decode("{\"x\":1,\"y\":2,\"score\":1.5}").is_err());
        assert!(decode("not json").is_err());
    }
}
