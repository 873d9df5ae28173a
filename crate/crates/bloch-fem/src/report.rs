//! Result emission: CSV behind a `# key=value` header, or JSON.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::ErrorTableRow;

pub type Header = Vec<(String, String)>;

/// Header lines, a blank-free CSV table of rows.
pub fn write_csv<W: Write>(out: &mut W, header: &[(String, String)], rows: &[ErrorTableRow]) -> Result<()> {
    writeln!(out, "# bloch-fem results")?;
    for (k, v) in header {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(["example", "N", "h", "relative_error", "wall_time", "iterations", "warnings"])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Parses what [`write_csv`] wrote.
pub fn read_csv(text: &str) -> Result<(Header, Vec<ErrorTableRow>)> {
    let mut header = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                header.push((k.to_string(), v.to_string()));
            }
        } else if !line.starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ErrorTableRow>, _>>()
        .map_err(|e| Error::Config(format!("malformed result table: {e}")))?;
    Ok((header, rows))
}

#[derive(Serialize)]
struct JsonDoc<'a, E: Serialize> {
    config: std::collections::BTreeMap<&'a str, &'a str>,
    rows: &'a [ErrorTableRow],
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a E>,
}

pub fn write_json<W: Write, E: Serialize>(
    out: &mut W,
    header: &[(String, String)],
    rows: &[ErrorTableRow],
    extra: Option<&E>,
) -> Result<()> {
    let doc = JsonDoc {
        config: header.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        rows,
        extra,
    };
    serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, err: f64) -> ErrorTableRow {
        ErrorTableRow {
            example: 1,
            copies: n,
            h: 0.16,
            relative_error: err,
            wall_time: 0.1 + 1.0 / 3.0,
            iterations: 7,
            warnings: "Wood anomaly in block 10, mode 0; tail, with comma".into(),
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let rows = vec![row(10, 5.471625767181065e-2), row(20, 1.6435928496559504e-2)];
        let header = vec![("k".to_string(), "1".to_string()), ("basis".into(), "modulated".into())];
        let mut buf = Vec::new();
        write_csv(&mut buf, &header, &rows).unwrap();
        let (h, back) = read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, rows);
    }

    #[test]
    fn json_has_rows_and_config() {
        let mut buf = Vec::new();
        write_json(&mut buf, &[("N".into(), "10".into())], &[row(10, 0.5)], None::<&()>).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["config"]["N"], "10");
        assert_eq!(v["rows"][0]["relative_error"], 0.5);
    }
}
