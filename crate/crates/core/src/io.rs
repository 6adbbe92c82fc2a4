//! Plain-text field dumps: CSV for round trips and PGM heatmaps for 2-D fields.
//!
//! CSV layout: a header `# d=<d> N=<N> n=<n> order=row-major`, then `N^(d−1)`
//! lines of `N` comma-separated values with the last axis varying fastest.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};

pub fn write_csv(f: &ScalarField) -> String {
    let grid = f.grid();
    let mut out = format!(
        "# d={} N={} n={} order=row-major\n",
        grid.dim(),
        grid.n_pts(),
        grid.n()
    );
    for row in f.values().chunks(grid.n_pts()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn header_value(header: &str, key: &str) -> Option<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.parse().ok())
}

/// Reads a CSV written by [`write_csv`]; the header must match `grid`.
pub fn read_csv(text: &str, grid: TorusGrid) -> Result<ScalarField> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .filter(|h| h.starts_with('#'))
        .ok_or_else(|| Error::Config("field CSV is missing its header line".into()))?;
    let dims = (
        header_value(header, "d"),
        header_value(header, "N"),
        header_value(header, "n"),
    );
    if dims != (Some(grid.dim()), Some(grid.n_pts()), Some(grid.n())) {
        return Err(Error::Config(format!(
            "field CSV header `{header}` does not match grid d={} N={} n={}",
            grid.dim(),
            grid.n_pts(),
            grid.n()
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "field CSV row {}: cannot parse `{}`",
                    row + 1,
                    tok.trim()
                ))
            })?;
            values.push(v);
        }
        if values.len() - before != grid.n_pts() {
            return Err(Error::Config(format!(
                "field CSV row {} has {} values, expected {}",
                row + 1,
                values.len() - before,
                grid.n_pts()
            )));
        }
    }
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "field CSV holds {} values, expected {}",
            values.len(),
            grid.len()
        )));
    }
    ScalarField::new(grid, values)
}

/// 8-bit ASCII PGM of a 2-D field, rows along the first axis. The value range
/// goes into a comment so the image can be read quantitatively.
pub fn write_pgm(f: &ScalarField) -> Result<String> {
    let grid = f.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid(format!(
            "heatmaps need a 2-dimensional field, got d = {}",
            grid.dim()
        )));
    }
    let (lo, hi) = (f.min(), f.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = grid.n_pts();
    let mut out = String::new();
    writeln!(out, "P2\n# min={lo} max={hi}\n{n} {n}\n255").expect("writing to a String");
    for row in f.values().chunks(n) {
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                (((v - lo) / span) * 255.0)
                    .round()
                    .clamp(0.0, 255.0)
                    .to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = TorusGrid::new(3, 8, 3).unwrap();
        let f = ScalarField::from_fn(grid, |x| (x[0] + 2.0 * x[1]).sin() / 3.0 + x[2].exp());
        let text = write_csv(&f);
        assert!(text.starts_with("# d=3 N=8 n=3 order=row-major\n"));
        assert_eq!(text.lines().count(), 1 + 64);
        let back = read_csv(&text, grid).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn csv_rejects_mismatch() {
        let grid = TorusGrid::new(2, 8, 2).unwrap();
        let text = write_csv(&ScalarField::zeros(grid));
        let other = TorusGrid::new(2, 16, 2).unwrap();
        assert!(read_csv(&text, other).is_err());
        let short = text.replacen("0,0\n", "0\n", 1);
        assert!(read_csv(&short, grid).is_err());
    }

    #[test]
    fn pgm_spans_full_range() {
        let grid = TorusGrid::new(2, 8, 2).unwrap();
        let f = ScalarField::from_fn(grid, |x| 8.0 * x[0] - 3.0);
        let pgm = write_pgm(&f).unwrap();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert!(lines.next().unwrap().starts_with("# min=-3 max="));
        assert_eq!(lines.next(), Some("8 8"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.next(), Some("0 0 0 0 0 0 0 0"));
        assert_eq!(lines.last(), Some("255 255 255 255 255 255 255 255"));
        assert!(write_pgm(&ScalarField::zeros(TorusGrid::new(1, 8, 2).unwrap())).is_err());
    }
}
