//! File formats: the binary matrix container, CSV output, P5 PGM frames and
//! flat key=value config files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binary matrix container: 8-byte magic, u64 rows, u64 cols, then row-major
/// f64 data, all little-endian.
pub const MATRIX_MAGIC: &[u8; 8] = b"F64MAT01";

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(MATRIX_MAGIC).map_err(io_err)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.ncols() as u64).to_le_bytes()).map_err(io_err)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(f);
    let io_err = |e| Error::io(path.display().to_string(), e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::InvalidInput(format!("{}: bad matrix magic", path.display())));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io_err)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(io_err)?;
    let cols = u64::from_le_bytes(b8) as usize;
    if rows.checked_mul(cols).is_none() || rows * cols > 1 << 30 {
        return Err(Error::InvalidInput(format!("{}: implausible dimensions", path.display())));
    }
    let mut data = vec![0.0f64; rows * cols];
    for v in data.iter_mut() {
        r.read_exact(&mut b8).map_err(io_err)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// CSV matrix loader (no header, comma separated).
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("{}:{}: bad number {t:?}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: ragged row",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: empty matrix", path.display())));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Reads a matrix by extension: `.mat`/`.bin` binary, anything else CSV.
pub fn read_matrix_auto(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mat") | Some("bin") => read_matrix(path),
        _ => read_matrix_csv(path),
    }
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        rows.push(row.join(","));
    }
    write_text(path, &(rows.join("\n") + "\n"))
}

/// CSV with a header row; all values pre-formatted by the caller.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// 8-bit binary PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::InvalidInput("pixel buffer does not match dimensions".into()));
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    let io_err = |e| Error::io(path.display().to_string(), e);
    write!(w, "P5\n{width} {height}\n255\n").map_err(io_err)?;
    w.write_all(pixels).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let data = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let bad = |msg: &str| Error::InvalidInput(format!("{}: {msg}", path.display()));
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(bad("not a P5 PGM"));
    }
    // Header: three whitespace-separated tokens (width, height, maxval),
    // with # comments allowed, then a single whitespace before the raster.
    let mut pos = 2;
    let mut tokens = Vec::new();
    while tokens.len() < 3 && pos < data.len() {
        while pos < data.len() && (data[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !(data[pos] as char).is_whitespace() {
            pos += 1;
        }
        tokens.push(
            std::str::from_utf8(&data[start..pos])
                .map_err(|_| bad("non-utf8 header"))?
                .parse::<usize>()
                .map_err(|_| bad("bad header token"))?,
        );
    }
    if tokens.len() != 3 {
        return Err(bad("truncated header"));
    }
    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    if data.len() < pos + width * height {
        return Err(bad("truncated raster"));
    }
    Ok(Pgm { width, height, pixels: data[pos..pos + width * height].to_vec() })
}

/// Loads a directory of PGM frames (sorted by file name) into a matrix with
/// one column per frame, pixels scaled to [0, 1].
pub fn read_frame_dir(dir: &Path) -> Result<(DMatrix<f64>, usize, usize)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no PGM frames found", dir.display())));
    }
    let first = read_pgm(&files[0])?;
    let (w, h) = (first.width, first.height);
    let mut y = DMatrix::zeros(w * h, files.len());
    for (j, f) in files.iter().enumerate() {
        let img = read_pgm(f)?;
        if img.width != w || img.height != h {
            return Err(Error::InvalidInput(format!(
                "{}: frame size {}x{} differs from {}x{}",
                f.display(),
                img.width,
                img.height,
                w,
                h
            )));
        }
        for (i, &px) in img.pixels.iter().enumerate() {
            y[(i, j)] = px as f64 / 255.0;
        }
    }
    Ok((y, w, h))
}

/// Columns of a pixel matrix written back out as PGM frames, linearly
/// rescaled to [0, 255] over the whole stack.
pub fn write_frame_stack(dir: &Path, stem: &str, m: &DMatrix<f64>, width: usize, height: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    for j in 0..m.ncols() {
        let pixels: Vec<u8> = (0..width * height)
            .map(|i| (((m[(i, j)] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        write_pgm(&dir.join(format!("{stem}_{j:04}.pgm")), width, height, &pixels)?;
    }
    Ok(())
}

/// Flat key=value config text: `#` comments, one pair per line.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn write_config(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let body: String = sorted.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_text(path, &body)
}
