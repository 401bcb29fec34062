//! Text format:
//!
//! ```text
//! #leakybias-ds v1 n=<n> d=<d> seed=<seed> meta=<rest of line>
//! y,x_1,...,x_d        (n lines, 17 significant digits)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &str = "#leakybias-ds v1";

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_text(ds: &Dataset) -> String {
    let mut out = String::with_capacity(ds.n() * (ds.d() + 1) * 24 + 80);
    let _ = writeln!(out, "{MAGIC} n={} d={} seed={} meta={}", ds.n(), ds.d(), ds.seed(), ds.meta());
    for i in 0..ds.n() {
        out.push_str(&fmt17(ds.y(i)));
        for &v in ds.x(i) {
            out.push(',');
            out.push_str(&fmt17(v));
        }
        out.push('\n');
    }
    out
}

fn at(line: usize, col: usize) -> String {
    format!("line {line}, offset {col}")
}

/// Reads `key=value` at the start of `rest`; returns the value and the remainder.
fn take_field<'a>(rest: &'a str, key: &str, line: usize, col: usize) -> Result<(&'a str, &'a str)> {
    let body = rest
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::parse(at(line, col), format!("expected `{key}=`")))?;
    match body.find(' ') {
        Some(k) => Ok((&body[..k], &body[k + 1..])),
        None => Ok((body, "")),
    }
}

fn parse_header(header: &str) -> Result<(usize, usize, u64, String)> {
    let rest = header
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(at(1, 0), format!("expected header starting with `{MAGIC}`")))?;
    let col = |r: &str| header.len() - r.len();
    let (n, r) = take_field(rest, "n", 1, col(rest))?;
    let n: usize = n.parse().map_err(|_| Error::parse(at(1, col(rest)), format!("bad n `{n}`")))?;
    let (d, r2) = take_field(r, "d", 1, col(r))?;
    let d: usize = d.parse().map_err(|_| Error::parse(at(1, col(r)), format!("bad d `{d}`")))?;
    let (seed, r3) = take_field(r2, "seed", 1, col(r2))?;
    let seed: u64 = seed.parse().map_err(|_| Error::parse(at(1, col(r2)), format!("bad seed `{seed}`")))?;
    let meta = r3
        .strip_prefix("meta=")
        .ok_or_else(|| Error::parse(at(1, col(r3)), "expected `meta=`"))?;
    Ok((n, d, seed, meta.to_string()))
}

pub fn parse(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(at(1, 0), "empty file"))?;
    let (n, d, seed, meta) = parse_header(header)?;
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let lineno = i + 2;
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(at(lineno, 0), format!("expected {n} data lines, found {i}")))?;
        let mut count = 0;
        let mut offset = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(at(lineno, offset), format!("bad number `{field}`")))?;
            if count == 0 {
                ys.push(v);
            } else {
                xs.push(v);
            }
            count += 1;
            offset += field.len() + 1;
        }
        if count != d + 1 {
            return Err(Error::parse(at(lineno, 0), format!("expected {} fields, found {count}", d + 1)));
        }
    }
    if let Some((k, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(at(n + 2 + k, 0), "trailing data after the last sample"));
    }
    let xs = Matrix::from_vec(n, d, xs)?;
    Dataset::new(xs, ys, seed, meta).map_err(|e| Error::parse("content", e.to_string()))
}

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(ds)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_mixture;

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = gen_mixture(7, 13, 0.3, 0.2, 99).unwrap();
        let back = parse(&to_text(&ds)).unwrap();
        assert_eq!(ds, back);
        assert_eq!(back.meta(), ds.meta());
    }

    #[test]
    fn extreme_values_round_trip() {
        let xs = Matrix::from_rows(&[vec![f64::MIN_POSITIVE, -1e300, 0.1 + 0.2]]).unwrap();
        let ds = Dataset::new(xs, vec![-1.0], u64::MAX, "a b=c").unwrap();
        assert_eq!(parse(&to_text(&ds)).unwrap(), ds);
    }

    #[test]
    fn parse_errors_carry_location() {
        let bad = "#leakybias-ds v1 n=1 d=2 seed=0 meta=\n1,2,x\n";
        let msg = parse(bad).unwrap_err().to_string();
        assert!(msg.contains("line 2, offset 4"), "{msg}");
        let short = "#leakybias-ds v1 n=2 d=1 seed=0 meta=\n1,2\n";
        assert!(parse(short).unwrap_err().to_string().contains("line 3"));
        let fields = "#leakybias-ds v1 n=1 d=2 seed=0 meta=\n1,2\n";
        assert!(parse(fields).unwrap_err().to_string().contains("expected 3 fields"));
        assert!(parse("#leakybias-ds v2 n=1").is_err());
        assert!(parse("#leakybias-ds v1 n=1 d=1 seed=0 meta=\n0.5,1\n").is_err());
    }
}
