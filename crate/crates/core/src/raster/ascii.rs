//! ESRI ASCII grid reading and writing.
//!
//! Output uses a fixed header layout and shortest round-trip number
//! formatting, so integer grids written here read back and re-write
//! byte-for-byte.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::GridSpec;
use crate::error::{Result, SdaError};
use crate::geometry::Point;

/// Raw contents of an ASCII grid file. Values are row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub nodata: Option<f64>,
}

pub fn read_ascii_grid<R: BufRead>(reader: R) -> Result<AsciiGrid> {
    let ctx = "ESRI ASCII grid";
    let mut tokens = Vec::new();
    let mut header: Vec<(String, f64)> = Vec::new();
    let mut in_header = true;
    for line in reader.lines() {
        let line = line.map_err(|e| SdaError::parse(ctx, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if in_header {
            let mut it = trimmed.split_whitespace();
            let key = it.next().unwrap_or_default();
            if key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let value = it
                    .next()
                    .ok_or_else(|| SdaError::parse(ctx, format!("header `{key}` has no value")))?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| SdaError::parse(ctx, format!("header `{key}` value `{value}` is not a number")))?;
                header.push((key.to_ascii_lowercase(), value));
                continue;
            }
            in_header = false;
        }
        tokens.extend(trimmed.split_whitespace().map(str::to_owned));
    }

    let get = |k: &str| header.iter().find(|(key, _)| key == k).map(|(_, v)| *v);
    let need = |k: &str| get(k).ok_or_else(|| SdaError::parse(ctx, format!("missing `{k}` header")));
    let ncols = need("ncols")?;
    let nrows = need("nrows")?;
    let cell = need("cellsize")?;
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(SdaError::parse(ctx, "ncols/nrows must be positive integers"));
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);
    let x0 = match (get("xllcorner"), get("xllcenter")) {
        (Some(x), _) => x,
        (None, Some(x)) => x - cell / 2.0,
        _ => return Err(SdaError::parse(ctx, "missing `xllcorner` header")),
    };
    let y0 = match (get("yllcorner"), get("yllcenter")) {
        (Some(y), _) => y,
        (None, Some(y)) => y - cell / 2.0,
        _ => return Err(SdaError::parse(ctx, "missing `yllcorner` header")),
    };
    let nodata = get("nodata_value");

    if tokens.len() != ncols * nrows {
        return Err(SdaError::parse(
            ctx,
            format!("expected {} values, found {}", ncols * nrows, tokens.len()),
        ));
    }
    let values = tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| SdaError::parse(ctx, format!("value `{t}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = GridSpec::new(Point::new(x0, y0), cell, ncols, nrows)?;
    Ok(AsciiGrid { grid, values, nodata })
}

pub fn write_ascii_grid<W: Write>(mut w: W, grid: &AsciiGrid) -> std::io::Result<()> {
    let g = &grid.grid;
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", g.ncols);
    let _ = writeln!(out, "nrows {}", g.nrows);
    let _ = writeln!(out, "xllcorner {}", g.origin.x);
    let _ = writeln!(out, "yllcorner {}", g.origin.y);
    let _ = writeln!(out, "cellsize {}", g.cell_size);
    if let Some(nd) = grid.nodata {
        let _ = writeln!(out, "NODATA_value {nd}");
    }
    for row in grid.values.chunks(g.ncols) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\nxllcorner 100\nyllcorner 200\ncellsize 300\nNODATA_value -9999\n1 2 3\n4 -9999 6\n";

    #[test]
    fn integer_grid_round_trips_bytes() {
        let g = read_ascii_grid(SAMPLE.as_bytes()).unwrap();
        assert_eq!(g.grid.ncols, 3);
        assert_eq!(g.values, vec![1.0, 2.0, 3.0, 4.0, -9999.0, 6.0]);
        assert_eq!(g.nodata, Some(-9999.0));
        let mut buf = Vec::new();
        write_ascii_grid(&mut buf, &g).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn accepts_scientific_notation_and_centers() {
        let text = "NCOLS 2\nNROWS 1\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\n1.5e2 2E-1\n";
        let g = read_ascii_grid(text.as_bytes()).unwrap();
        assert_eq!(g.values, vec![150.0, 0.2]);
        assert_eq!(g.grid.origin, Point::new(0.0, 0.0));
        assert_eq!(g.nodata, None);
    }

    #[test]
    fn rejects_bad_value_count() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(read_ascii_grid(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn values_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 6), cs in 0.5f64..500.0) {
            let grid = AsciiGrid {
                grid: GridSpec::new(Point::new(12.5, -3.0), cs, 3, 2).unwrap(),
                values: vals,
                nodata: Some(-9999.0),
            };
            let mut buf = Vec::new();
            write_ascii_grid(&mut buf, &grid).unwrap();
            let back = read_ascii_grid(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &grid);
            let mut again = Vec::new();
            write_ascii_grid(&mut again, &back).unwrap();
            prop_assert_eq!(buf, again);
        }
    }
}
