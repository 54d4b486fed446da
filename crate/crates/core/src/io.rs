//! Binary grid, dataset and mask files, PGM previews and history tables.
//!
//! Every numeric file is a single ASCII header line followed by raw
//! little-endian payload:
//!
//! | kind    | header                     | payload                              |
//! |---------|----------------------------|--------------------------------------|
//! | `RGRID` | `RGRID nx ny h ox oy`      | `nx*ny` f64, row-major               |
//! | `CGRID` | `CGRID nx ny h ox oy`      | `nx*ny` (re, im) f64 pairs           |
//! | `MSTAT` | `MSTAT S R`                | `S*R` (re, im) f64 pairs, by source  |
//! | `BGRID` | `BGRID nx ny h ox oy`      | `nx*ny` bytes, 0 or 1                |

use num_complex::Complex64;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::csi::FunctionalValue;
use crate::error::{Error, Result};
use crate::medium::{Grid, Point};
use crate::segment::RegionMask;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn grid_header(kind: &str, g: &Grid) -> String {
    format!("{kind} {} {} {} {} {}\n", g.nx, g.ny, g.h, g.origin.x, g.origin.y)
}

fn split_header<'a>(bytes: &'a [u8], kind: &str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let end =
        bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err(format!("{kind}: missing header line")))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(format!("{kind}: header is not text")))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.first() != Some(&kind) {
        return Err(format_err(format!("expected {kind} header, found {header:?}")));
    }
    Ok((fields[1..].to_vec(), &bytes[end + 1..]))
}

fn parse<T: std::str::FromStr>(field: &str, kind: &str) -> Result<T> {
    field.parse().map_err(|_| format_err(format!("{kind}: bad header field {field:?}")))
}

fn parse_grid(fields: &[&str], kind: &str) -> Result<Grid> {
    if fields.len() != 5 {
        return Err(format_err(format!("{kind}: header needs nx ny h ox oy")));
    }
    Grid::new(
        Point::new(parse(fields[3], kind)?, parse(fields[4], kind)?),
        parse(fields[2], kind)?,
        parse(fields[0], kind)?,
        parse(fields[1], kind)?,
    )
    .map_err(|e| format_err(format!("{kind}: {e}")))
}

fn floats(payload: &[u8], count: usize, kind: &str) -> Result<Vec<f64>> {
    if payload.len() != 8 * count {
        return Err(format_err(format!("{kind}: expected {} payload bytes, found {}", 8 * count, payload.len())));
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn pairs(values: Vec<f64>) -> Vec<Complex64> {
    values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn encode_real_grid(grid: &Grid, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {} cells", values.len(), grid.len())));
    }
    let mut out = grid_header("RGRID", grid).into_bytes();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_real_grid(bytes: &[u8]) -> Result<(Grid, Vec<f64>)> {
    let (fields, payload) = split_header(bytes, "RGRID")?;
    let grid = parse_grid(&fields, "RGRID")?;
    let values = floats(payload, grid.len(), "RGRID")?;
    Ok((grid, values))
}

pub fn encode_complex_grid(grid: &Grid, values: &[Complex64]) -> Result<Vec<u8>> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {} cells", values.len(), grid.len())));
    }
    let mut out = grid_header("CGRID", grid).into_bytes();
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_complex_grid(bytes: &[u8]) -> Result<(Grid, Vec<Complex64>)> {
    let (fields, payload) = split_header(bytes, "CGRID")?;
    let grid = parse_grid(&fields, "CGRID")?;
    Ok((grid, pairs(floats(payload, 2 * grid.len(), "CGRID")?)))
}

/// Source-major `S x R` matrix.
pub fn encode_multistatic(n_sources: usize, n_receivers: usize, values: &[Complex64]) -> Result<Vec<u8>> {
    if values.len() != n_sources * n_receivers {
        return Err(Error::DimensionMismatch(format!("{} values for {n_sources} x {n_receivers} data", values.len())));
    }
    let mut out = format!("MSTAT {n_sources} {n_receivers}\n").into_bytes();
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_multistatic(bytes: &[u8]) -> Result<(usize, usize, Vec<Complex64>)> {
    let (fields, payload) = split_header(bytes, "MSTAT")?;
    if fields.len() != 2 {
        return Err(format_err("MSTAT: header needs S R"));
    }
    let (s, r): (usize, usize) = (parse(fields[0], "MSTAT")?, parse(fields[1], "MSTAT")?);
    Ok((s, r, pairs(floats(payload, 2 * s * r, "MSTAT")?)))
}

pub fn encode_mask(mask: &RegionMask) -> Vec<u8> {
    let mut out = grid_header("BGRID", &mask.grid).into_bytes();
    out.extend(mask.inside.iter().map(|&b| b as u8));
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<RegionMask> {
    let (fields, payload) = split_header(bytes, "BGRID")?;
    let grid = parse_grid(&fields, "BGRID")?;
    if payload.len() != grid.len() || payload.iter().any(|&b| b > 1) {
        return Err(format_err("BGRID: payload must be one 0/1 byte per cell"));
    }
    RegionMask::new(grid, payload.iter().map(|&b| b == 1).collect())
}

/// 8-bit PGM with min-max normalization; the top image row is the
/// largest `y`.
pub fn encode_pgm(grid: &Grid, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {} cells", values.len(), grid.len())));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for iy in (0..grid.ny).rev() {
        for ix in 0..grid.nx {
            let v = values[grid.index(ix, iy)];
            let level = if v.is_finite() { ((v - lo) / span * 255.0).round() } else { 0.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

pub fn encode_mask_pgm(mask: &RegionMask) -> Vec<u8> {
    let values: Vec<f64> = mask.inside.iter().map(|&b| b as u8 as f64).collect();
    let mut out = format!("P5\n{} {}\n255\n", mask.grid.nx, mask.grid.ny).into_bytes();
    let g = mask.grid;
    for iy in (0..g.ny).rev() {
        for ix in 0..g.nx {
            out.push(if values[g.index(ix, iy)] > 0.0 { 255 } else { 0 });
        }
    }
    out
}

/// Width, height and pixels of a P5 image.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let text_end = {
        let mut seen = 0;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                seen += 1;
                if seen == 3 {
                    end = Some(i + 1);
                    break;
                }
            }
        }
        end.ok_or_else(|| format_err("PGM: truncated header"))?
    };
    let header = std::str::from_utf8(&bytes[..text_end]).map_err(|_| format_err("PGM: header is not text"))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 4 || fields[0] != "P5" || fields[3] != "255" {
        return Err(format_err("PGM: expected an 8-bit P5 header"));
    }
    let (w, h): (usize, usize) = (parse(fields[1], "PGM")?, parse(fields[2], "PGM")?);
    let pixels = bytes[text_end..].to_vec();
    if pixels.len() != w * h {
        return Err(format_err("PGM: pixel count does not match the header"));
    }
    Ok((w, h, pixels))
}

pub fn encode_history(history: &[FunctionalValue]) -> String {
    let mut out = String::from("step,total,data_term,state_term\n");
    for (i, v) in history.iter().enumerate() {
        out.push_str(&format!("{i},{:e},{:e},{:e}\n", v.total, v.data_term, v.state_term));
    }
    out
}

pub fn decode_history(text: &str) -> Result<Vec<FunctionalValue>> {
    let mut lines = text.lines();
    if lines.next() != Some("step,total,data_term,state_term") {
        return Err(format_err("history: unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 || cols[0].parse::<usize>().ok() != Some(i) {
                return Err(format_err(format!("history: malformed row {}", i + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format_err(format!("history: bad number {s:?}")));
            Ok(FunctionalValue {
                total: num(cols[1])?,
                data_term: num(cols[2])?,
                state_term: num(cols[3])?,
                degenerate: false,
            })
        })
        .collect()
}

pub fn write_real_grid(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_real_grid(grid, values)?)
}

pub fn read_real_grid(path: &Path) -> Result<(Grid, Vec<f64>)> {
    decode_real_grid(&fs::read(path)?)
}

pub fn write_complex_grid(path: &Path, grid: &Grid, values: &[Complex64]) -> Result<()> {
    write_bytes(path, &encode_complex_grid(grid, values)?)
}

pub fn read_complex_grid(path: &Path) -> Result<(Grid, Vec<Complex64>)> {
    decode_complex_grid(&fs::read(path)?)
}

pub fn write_multistatic(path: &Path, n_sources: usize, n_receivers: usize, values: &[Complex64]) -> Result<()> {
    write_bytes(path, &encode_multistatic(n_sources, n_receivers, values)?)
}

pub fn read_multistatic(path: &Path) -> Result<(usize, usize, Vec<Complex64>)> {
    decode_multistatic(&fs::read(path)?)
}

pub fn write_mask(path: &Path, mask: &RegionMask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<RegionMask> {
    decode_mask(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_pgm(grid, values)?)
}

pub fn write_mask_pgm(path: &Path, mask: &RegionMask) -> Result<()> {
    write_bytes(path, &encode_mask_pgm(mask))
}

pub fn write_history(path: &Path, history: &[FunctionalValue]) -> Result<()> {
    write_bytes(path, encode_history(history).as_bytes())
}

pub fn read_history(path: &Path) -> Result<Vec<FunctionalValue>> {
    decode_history(&fs::read_to_string(path)?)
}
