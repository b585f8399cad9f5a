//! Plain columnar text formats.
//!
//! Sequences:
//!
//! ```text
//! # label: table_s2
//! # g0: 2.0000000000000000e-3
//! # lambda0: 4.1887902047863905e0
//! # columns: x_over_lambda0 amplitude phase_rad
//! -9.0900000000000003e-1 8.7999999999999995e-2 1.2189379495928117e0
//! ```
//!
//! Numbers are written with 17 significant digits, which round-trips every f64.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::coupling::{CouplingPoint, CouplingSequence, DEFAULT_G0};
use crate::error::{Error, Result};

const SEQUENCE_COLUMNS: &str = "x_over_lambda0 amplitude phase_rad";

pub fn sequence_to_string(seq: &CouplingSequence) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# label: {}", seq.label);
    let _ = writeln!(s, "# g0: {:.16e}", seq.g0);
    let _ = writeln!(s, "# lambda0: {:.16e}", seq.lambda0);
    let _ = writeln!(s, "# columns: {SEQUENCE_COLUMNS}");
    for p in seq.points() {
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", p.x, p.amplitude, p.phase);
    }
    s
}

/// Parses the sequence format. A missing `g0` defaults to 0.002; `lambda0`
/// is required because positions are stored in its units.
pub fn sequence_from_str(text: &str) -> Result<CouplingSequence> {
    let mut label = String::new();
    let mut g0 = None;
    let mut lambda0 = None;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else { continue };
            let value = value.trim();
            match key.trim() {
                "label" => label = value.to_string(),
                "g0" => g0 = Some(parse_number(value, lineno)?),
                "lambda0" => lambda0 = Some(parse_number(value, lineno)?),
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 columns ({SEQUENCE_COLUMNS}), found {}", fields.len()),
            });
        }
        let x = parse_number(fields[0], lineno)?;
        let a = parse_number(fields[1], lineno)?;
        let t = parse_number(fields[2], lineno)?;
        points.push(CouplingPoint::new(x, a, t));
    }
    let lambda0 = lambda0.ok_or(Error::Parse {
        line: 0,
        message: "missing '# lambda0:' header".into(),
    })?;
    CouplingSequence::new(points, g0.unwrap_or(DEFAULT_G0), lambda0, label)
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("'{s}': {e}"),
    })
}

/// Writes a `#`-headed numeric table: metadata lines, a column line, then rows.
pub fn write_table<W: Write>(
    mut out: W,
    meta: &[(&str, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "# columns: {}", columns.join(" "))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables;

    #[test]
    fn round_trip_is_bit_exact() {
        for seq in [tables::table_s1(), tables::table_s2(), tables::table_s1_refit()] {
            let text = sequence_to_string(&seq);
            let back = sequence_from_str(&text).unwrap();
            assert_eq!(back, seq);
            for (a, b) in back.points().iter().zip(seq.points()) {
                assert_eq!(a.x.to_bits(), b.x.to_bits());
                assert_eq!(a.phase.to_bits(), b.phase.to_bits());
            }
        }
    }

    #[test]
    fn awkward_values_round_trip() {
        let pts = vec![
            CouplingPoint::new(-1.0 / 3.0, 1e-300, -3.141592653589793),
            CouplingPoint::new(0.1 + 0.2, 5e-324, 1e-17),
        ];
        let seq = CouplingSequence::new(pts, 0.1 + 0.7, std::f64::consts::E, "with spaces in label").unwrap();
        assert_eq!(sequence_from_str(&sequence_to_string(&seq)).unwrap(), seq);
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "# lambda0: 1\n0 1 0\n0.5 x 0\n";
        assert_eq!(sequence_from_str(text).unwrap_err(), Error::Parse { line: 3, message: "'x': invalid float literal".into() });
        assert!(matches!(sequence_from_str("# lambda0: 1\n1 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(sequence_from_str("0 1 0\n").is_err());
    }

    #[test]
    fn table_layout() {
        let mut buf = Vec::new();
        write_table(&mut buf, &[("t", "1".into())], &["a", "b"], vec![vec![1.0, 0.5]]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "# t: 1\n# columns: a b\n1.0000000000000000e0 5.0000000000000000e-1\n");
    }
}
