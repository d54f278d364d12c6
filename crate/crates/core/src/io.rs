//! File formats: sweep CSV (`f_hz,s21_re,s21_im`), Touchstone `.s2p` import
//! (S21 only) and plain frequency plans (one value in Hz per line).

use crate::model::ComplexSample;
use crate::synth::{GridKind, Sweep, SweepError};
use num_complex::Complex64;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use thiserror::Error;

pub const SWEEP_HEADER: &str = "f_hz,s21_re,s21_im";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: frequency is not strictly greater than the previous row")]
    NotIncreasing { line: usize },
    #[error("no data rows")]
    Empty,
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, IoError> {
    tok.trim().parse::<f64>().map_err(|_| IoError::Parse {
        line,
        message: format!("cannot parse {what} from {:?}", tok.trim()),
    })
}

/// Converts sample-level sweep errors into line-numbered ones, given the
/// line number of each sample.
fn to_sweep(samples: Vec<ComplexSample>, lines: &[usize], kind: GridKind, prov: String) -> Result<Sweep, IoError> {
    Sweep::new(samples, kind, prov).map_err(|e| match e {
        SweepError::Empty => IoError::Empty,
        SweepError::NotIncreasing { index } => IoError::NotIncreasing { line: lines[index] },
        SweepError::InvalidSample { index } => IoError::Parse {
            line: lines[index],
            message: "non-finite value or non-positive frequency".to_string(),
        },
    })
}

/// Parses sweep CSV text. Line numbers in errors are 1-based and count the header.
pub fn parse_sweep_csv(text: &str, kind: GridKind, provenance: impl Into<String>) -> Result<Sweep, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_HEADER => {}
        Some((_, h)) => {
            return Err(IoError::Parse {
                line: 1,
                message: format!("expected header {SWEEP_HEADER:?}, found {:?}", h.trim()),
            })
        }
        None => return Err(IoError::Empty),
    }
    let mut samples = Vec::new();
    let mut line_nos = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 3 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let f = parse_f64(fields[0], line, "f_hz")?;
        let re = parse_f64(fields[1], line, "s21_re")?;
        let im = parse_f64(fields[2], line, "s21_im")?;
        samples.push(ComplexSample::new(f, Complex64::new(re, im)));
        line_nos.push(line);
    }
    to_sweep(samples, &line_nos, kind, provenance.into())
}

pub fn read_sweep_csv(path: &Path) -> Result<Sweep, IoError> {
    let text = read(path)?;
    parse_sweep_csv(&text, GridKind::Spd, path.display().to_string())
}

/// Writes the sweep with 17 significant digits, enough to round-trip every `f64`.
pub fn write_sweep_csv_to<W: Write>(sweep: &Sweep, mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for s in sweep.samples() {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", s.f, s.s21.re, s.s21.im)?;
    }
    Ok(())
}

pub fn write_sweep_csv(sweep: &Sweep, path: &Path) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_sweep_csv_to(sweep, &mut buf).expect("writing to memory");
    write_file(path, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TsFormat {
    Ri,
    Ma,
    Db,
}

/// Parses a two-port Touchstone file and keeps the S21 column pair.
pub fn parse_touchstone_s21(text: &str, provenance: impl Into<String>) -> Result<Sweep, IoError> {
    let mut unit = 1e9;
    let mut format = TsFormat::Ma;
    let mut seen_option = false;
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(opts) = content.strip_prefix('#') {
            if seen_option {
                continue;
            }
            seen_option = true;
            let mut it = opts.split_whitespace().map(|t| t.to_ascii_uppercase());
            while let Some(t) = it.next() {
                match t.as_str() {
                    "HZ" => unit = 1.0,
                    "KHZ" => unit = 1e3,
                    "MHZ" => unit = 1e6,
                    "GHZ" => unit = 1e9,
                    "RI" => format = TsFormat::Ri,
                    "MA" => format = TsFormat::Ma,
                    "DB" => format = TsFormat::Db,
                    "S" => {}
                    "R" => {
                        it.next();
                    }
                    other => {
                        return Err(IoError::Parse {
                            line,
                            message: format!("unsupported option {other:?}"),
                        })
                    }
                }
            }
            continue;
        }
        if content.starts_with('[') {
            return Err(IoError::Parse {
                line,
                message: "Touchstone 2.0 keywords are not supported".to_string(),
            });
        }
        tokens.extend(content.split_whitespace().map(|t| (line, t.to_string())));
    }
    if !tokens.len().is_multiple_of(9) {
        let line = tokens.last().map(|t| t.0).unwrap_or(1);
        return Err(IoError::Parse {
            line,
            message: format!("{} values is not a whole number of 9-value two-port records", tokens.len()),
        });
    }
    let mut samples = Vec::new();
    let mut line_nos = Vec::new();
    for rec in tokens.chunks(9) {
        let line = rec[0].0;
        let f = parse_f64(&rec[0].1, rec[0].0, "frequency")? * unit;
        // Two-port record order: S11, S21, S12, S22.
        let a = parse_f64(&rec[3].1, rec[3].0, "S21")?;
        let b = parse_f64(&rec[4].1, rec[4].0, "S21")?;
        let s21 = match format {
            TsFormat::Ri => Complex64::new(a, b),
            TsFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            TsFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        };
        samples.push(ComplexSample::new(f, s21));
        line_nos.push(line);
    }
    to_sweep(samples, &line_nos, GridKind::Spd, provenance.into())
}

pub fn read_touchstone_s21(path: &Path) -> Result<Sweep, IoError> {
    let text = read(path)?;
    parse_touchstone_s21(&text, path.display().to_string())
}

/// Reads `.s2p` as Touchstone and anything else as sweep CSV.
pub fn read_sweep(path: &Path) -> Result<Sweep, IoError> {
    let is_s2p = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("s2p"));
    if is_s2p {
        read_touchstone_s21(path)
    } else {
        read_sweep_csv(path)
    }
}

/// One frequency per line, shortest round-trip representation.
pub fn format_plan(freqs: &[f64]) -> String {
    let mut s = String::with_capacity(freqs.len() * 24);
    for f in freqs {
        s.push_str(&format!("{f:?}\n"));
    }
    s
}

pub fn write_plan(freqs: &[f64], path: &Path) -> Result<(), IoError> {
    write_file(path, format_plan(freqs).as_bytes())
}

pub fn parse_plan(text: &str) -> Result<Vec<f64>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        out.push(parse_f64(raw, i + 1, "frequency")?);
    }
    if out.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(out)
}

pub fn read_plan(path: &Path) -> Result<Vec<f64>, IoError> {
    parse_plan(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Sweep {
        let f = [4.0e9, 4.000_000_1e9, 4.1e9 + 1.0 / 3.0];
        let v = [
            Complex64::new(0.1 + 1e-17, -0.2),
            Complex64::new(1.0 / 3.0, std::f64::consts::PI),
            Complex64::new(-1e-300, 7.0),
        ];
        Sweep::from_parts(&f, &v, GridKind::Spd, "t").unwrap()
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let sw = sample();
        let mut buf = Vec::new();
        write_sweep_csv_to(&sw, &mut buf).unwrap();
        let back = parse_sweep_csv(std::str::from_utf8(&buf).unwrap(), GridKind::Spd, "t").unwrap();
        assert_eq!(back.samples(), sw.samples());
    }

    #[test]
    fn csv_errors_are_line_numbered() {
        let text = "f_hz,s21_re,s21_im\n1,0,0\n2,0,x\n";
        match parse_sweep_csv(text, GridKind::Spd, "") {
            Err(IoError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let text = "f_hz,s21_re,s21_im\n1,0,0\n3,0,0\n2,0,0\n4,0,0\n";
        match parse_sweep_csv(text, GridKind::Spd, "") {
            Err(IoError::NotIncreasing { line: 4 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_sweep_csv("f_hz,s21_re,s21_im\n", GridKind::Spd, ""),
            Err(IoError::Empty)
        ));
        assert!(matches!(
            parse_sweep_csv("freq,re,im\n1,0,0\n", GridKind::Spd, ""),
            Err(IoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn touchstone_formats() {
        let ri = "! comment\n# GHz S RI R 50\n1.0 0 0 0.5 0.5 0 0 0 0\n1.5 0 0 -1 0 0 0 0 0\n";
        let sw = parse_touchstone_s21(ri, "").unwrap();
        assert_eq!(sw.freqs(), vec![1e9, 1.5e9]);
        assert_eq!(sw.values()[0], Complex64::new(0.5, 0.5));
        let ma = "# MHz S MA R 50\n100 0 0 2 90 0 0 0 0\n";
        let v = parse_touchstone_s21(ma, "").unwrap().values()[0];
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-12);
        let db = "# Hz S DB R 50\n100 0 0 -20 180 0 0 0 0\n";
        let v = parse_touchstone_s21(db, "").unwrap().values()[0];
        assert!((v - Complex64::new(-0.1, 0.0)).norm() < 1e-12);
        assert!(parse_touchstone_s21("# GHz S RI R 50\n1 0 0 0.5\n", "").is_err());
    }

    #[test]
    fn plan_round_trip() {
        let f = vec![4.364e9, 4.364e9 + 0.1, 5e9 / 3.0];
        let back = parse_plan(&format_plan(&f)).unwrap();
        assert_eq!(back, f);
        assert!(matches!(parse_plan("\n"), Err(IoError::Empty)));
    }
}
