//! Little-endian raw frame dump for cross-implementation comparison.
//!
//! ```text
//! header:
//!   magic         8 bytes  "ISACRAW1"
//!   n_subcarriers u32
//!   n_symbols     u32
//!   f_c           f64      Hz
//!   delta_f       f64      Hz
//!   l_cp          f64
//!   dl_mask       n_symbols bytes, 1 = DL, 0 = UL
//! frame (repeated until EOF):
//!   frame_index   u64
//!   timestamp     f64      s
//!   tx grid       n_subcarriers * n_symbols * (f32 I, f32 Q), subcarrier-major
//!   rx grid       same layout
//! ```

use std::io::{self, Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use super::{RadioFrame, Result, SceneError, TddMask};

pub const MAGIC: &[u8; 8] = b"ISACRAW1";

/// Frame-independent metadata carried in the dump header.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHeader {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub f_c: f64,
    pub delta_f: f64,
    pub l_cp: f64,
    pub dl_mask: TddMask,
}

impl RawHeader {
    pub fn symbol_duration(&self) -> f64 {
        (1.0 + self.l_cp) / self.delta_f
    }
}

pub fn write_header<W: Write>(w: &mut W, h: &RawHeader) -> Result<()> {
    if h.dl_mask.len() != h.n_symbols {
        return Err(SceneError::Format("mask length differs from symbol count".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(h.n_subcarriers as u32).to_le_bytes())?;
    w.write_all(&(h.n_symbols as u32).to_le_bytes())?;
    for v in [h.f_c, h.delta_f, h.l_cp] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mask: Vec<u8> = h.dl_mask.as_slice().iter().map(|&d| d as u8).collect();
    w.write_all(&mask)?;
    Ok(())
}

fn write_grid<W: Write>(w: &mut W, grid: &Array2<Complex64>) -> Result<()> {
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for z in grid.iter() {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_frame<W: Write>(w: &mut W, h: &RawHeader, tx: &RadioFrame, rx: &RadioFrame) -> Result<()> {
    let dims = (h.n_subcarriers, h.n_symbols);
    if tx.grid.dim() != dims || rx.grid.dim() != dims {
        return Err(SceneError::Format("frame dimensions differ from header".into()));
    }
    w.write_all(&rx.frame_index.to_le_bytes())?;
    w.write_all(&rx.timestamp.to_le_bytes())?;
    write_grid(w, &tx.grid)?;
    write_grid(w, &rx.grid)
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_header<R: Read>(r: &mut R) -> Result<RawHeader> {
    let magic: [u8; 8] = read_array(r)?;
    if &magic != MAGIC {
        return Err(SceneError::Format("bad magic".into()));
    }
    let n_subcarriers = u32::from_le_bytes(read_array(r)?) as usize;
    let n_symbols = u32::from_le_bytes(read_array(r)?) as usize;
    let f_c = f64::from_le_bytes(read_array(r)?);
    let delta_f = f64::from_le_bytes(read_array(r)?);
    let l_cp = f64::from_le_bytes(read_array(r)?);
    let mut mask = vec![0u8; n_symbols];
    r.read_exact(&mut mask)?;
    if mask.iter().any(|&b| b > 1) {
        return Err(SceneError::Format("mask bytes must be 0 or 1".into()));
    }
    Ok(RawHeader {
        n_subcarriers,
        n_symbols,
        f_c,
        delta_f,
        l_cp,
        dl_mask: TddMask::new(mask.into_iter().map(|b| b == 1).collect()),
    })
}

fn read_grid<R: Read>(r: &mut R, h: &RawHeader) -> Result<Array2<Complex64>> {
    let mut buf = vec![0u8; h.n_subcarriers * h.n_symbols * 8];
    r.read_exact(&mut buf)?;
    let values: Vec<Complex64> = buf
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
            )
        })
        .collect();
    Array2::from_shape_vec((h.n_subcarriers, h.n_symbols), values)
        .map_err(|e| SceneError::Format(e.to_string()))
}

/// Reads the next (tx, rx) pair, or `None` at a clean end of file.
pub fn read_frame<R: Read>(r: &mut R, h: &RawHeader) -> Result<Option<(RadioFrame, RadioFrame)>> {
    let mut first = [0u8; 8];
    let mut filled = 0;
    while filled < 8 {
        match r.read(&mut first[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(SceneError::Format("truncated frame header".into())),
            n => filled += n,
        }
    }
    let frame_index = u64::from_le_bytes(first);
    let timestamp = f64::from_le_bytes(read_array(r)?);
    let tx = read_grid(r, h)?;
    let rx = read_grid(r, h)?;
    let make = |grid| RadioFrame {
        grid,
        dl_mask: h.dl_mask.clone(),
        frame_index,
        timestamp,
    };
    Ok(Some((make(tx), make(rx))))
}
