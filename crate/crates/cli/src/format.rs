//! Output writers: fixed-format CSV and pretty JSON.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// C-style `%.12e`: `1.234500000000e+00`, exponent signed with at least two digits.
pub fn sci12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Central differences in the interior, one-sided at the ends.
pub fn central_difference(x: &[f64], r: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (x[b] - x[a]) / (r[b] - r[a])
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(path)),
        _ => Ok(()),
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    if !header.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, to_json(value)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_printf() {
        assert_eq!(sci12(1.0), "1.000000000000e+00");
        assert_eq!(sci12(0.0), "0.000000000000e+00");
        assert_eq!(sci12(-2.5e-7), "-2.500000000000e-07");
        assert_eq!(sci12(6.02214076e23), "6.022140760000e+23");
        assert_eq!(sci12(1e-300), "1.000000000000e-300");
        assert_eq!(sci12(f64::INFINITY), "inf");
    }

    #[test]
    fn differences_of_a_quadratic() {
        let r: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let x: Vec<f64> = r.iter().map(|r| r * r).collect();
        let d = central_difference(&x, &r);
        for i in 1..10 {
            assert!((d[i] - 2.0 * r[i]).abs() < 1e-12);
        }
        assert!((d[0] - 0.1).abs() < 1e-12);
    }
}
