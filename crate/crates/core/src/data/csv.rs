use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{data_err, Result, TradeError};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeaderMode {
    /// Treat the first record as a header when any of its cells is non-numeric.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: HeaderMode,
    pub expected_cols: Option<usize>,
    pub expected_rows: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            header: HeaderMode::Auto,
            expected_cols: None,
            expected_rows: None,
        }
    }
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| TradeError::io(path, e))?;
    read_csv(file, opts).map_err(|e| match e {
        TradeError::Parse { line, reason } => TradeError::Parse {
            line,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Parses a rectangular numeric table. Blank lines are skipped.
pub fn read_csv<R: Read>(input: R, opts: &CsvOptions) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    let mut header_checked = false;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| TradeError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        if !header_checked {
            header_checked = true;
            let is_header = match opts.header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => parsed.is_err(),
            };
            if is_header {
                cols = Some(rec.len());
                continue;
            }
        }
        let values = parsed.map_err(|_| {
            let (c, cell) = rec
                .iter()
                .enumerate()
                .find(|(_, s)| s.parse::<f64>().is_err())
                .expect("some cell failed to parse");
            TradeError::Parse {
                line,
                reason: format!("column {} holds non-numeric value `{cell}`", c + 1),
            }
        })?;
        match cols {
            Some(n) if n != values.len() => {
                return Err(TradeError::Parse {
                    line,
                    reason: format!("expected {n} columns, found {}", values.len()),
                })
            }
            _ => cols = Some(values.len()),
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if let Some(want) = opts.expected_cols {
        if want != cols {
            return Err(data_err(format!("expected {want} columns, found {cols}")));
        }
    }
    if let Some(want) = opts.expected_rows {
        if want != rows {
            return Err(data_err(format!("expected {want} rows, found {rows}")));
        }
    }
    Matrix::new(rows, cols, data)
}

pub fn write_csv(path: &Path, x: &Matrix, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| data_err(format!("{}: {e}", path.display()));
    if let Some(h) = header {
        w.write_record(h).map_err(io)?;
    }
    for r in 0..x.rows() {
        w.write_record(x.row(r).iter().map(|v| format!("{v:?}"))).map_err(io)?;
    }
    w.flush().map_err(|e| TradeError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Matrix> {
        read_csv(s.as_bytes(), &CsvOptions::default())
    }

    #[test]
    fn known_values_round_trip() {
        let m = parse("1.5,2\n-3,4e-3\n0.1,7\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.as_slice(), &[1.5, 2.0, -3.0, 4e-3, 0.1, 7.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv(&p, &m, None).unwrap();
        assert_eq!(load_csv(&p, &CsvOptions::default()).unwrap(), m);
    }

    #[test]
    fn trailing_blank_line_is_not_a_row() {
        assert_eq!(parse("1,2\n3,4\n5,6\n\n").unwrap().rows(), 3);
    }

    #[test]
    fn header_detection() {
        let m = parse("a,b\n1,2\n").unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0]);
        let opts = CsvOptions {
            header: HeaderMode::Present,
            ..Default::default()
        };
        assert_eq!(read_csv("1,2\n3,4\n".as_bytes(), &opts).unwrap().rows(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("1,2\n3\n") {
            Err(TradeError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1,2\n3,x\n") {
            Err(TradeError::Parse { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("`x`"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delimiter_and_shape_checks() {
        let opts = CsvOptions {
            delimiter: b';',
            expected_cols: Some(2),
            expected_rows: Some(2),
            ..Default::default()
        };
        assert!(read_csv("1;2\n3;4\n".as_bytes(), &opts).is_ok());
        assert!(read_csv("1;2\n".as_bytes(), &opts).is_err());
    }
}
