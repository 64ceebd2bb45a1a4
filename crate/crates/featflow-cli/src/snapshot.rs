//! Self-describing binary snapshots of field values on the test grid.
//!
//! Layout: a 32-byte header (8-byte magic, u32 version, u32 rows, u32 cols,
//! u32 components, f64 time, all little-endian), followed by the field
//! values as 64-bit floats, one component after another, row-major within a
//! component. CSV export is available for plotting.

use std::io::{Read, Write};

use thiserror::Error;

const MAGIC: &[u8; 8] = b"FFSNAP01";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("payload size mismatch: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Field values on a `rows × cols` grid for every component at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub rows: u32,
    pub cols: u32,
    pub components: u32,
    /// `[component][row-major grid]`, flattened.
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn new(time: f64, rows: u32, cols: u32, components: u32, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), (rows * cols * components) as usize);
        Snapshot {
            time,
            rows,
            cols,
            components,
            data,
        }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = (self.rows * self.cols) as usize;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn write(&self, out: &mut impl Write) -> Result<(), SnapshotError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&self.rows.to_le_bytes())?;
        out.write_all(&self.cols.to_le_bytes())?;
        out.write_all(&self.components.to_le_bytes())?;
        out.write_all(&self.time.to_le_bytes())?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(input: &mut impl Read) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(SnapshotError::BadVersion(version));
        }
        input.read_exact(&mut u32buf)?;
        let rows = u32::from_le_bytes(u32buf);
        input.read_exact(&mut u32buf)?;
        let cols = u32::from_le_bytes(u32buf);
        input.read_exact(&mut u32buf)?;
        let components = u32::from_le_bytes(u32buf);
        let mut f64buf = [0u8; 8];
        input.read_exact(&mut f64buf)?;
        let time = f64::from_le_bytes(f64buf);
        let expected = (rows * cols * components) as usize;
        let mut data = Vec::with_capacity(expected);
        for _ in 0..expected {
            match input.read_exact(&mut f64buf) {
                Ok(()) => data.push(f64::from_le_bytes(f64buf)),
                Err(_) => {
                    return Err(SnapshotError::Truncated {
                        expected,
                        found: data.len(),
                    })
                }
            }
        }
        Ok(Snapshot {
            time,
            rows,
            cols,
            components,
            data,
        })
    }

    /// CSV export: one row per grid point (`row,col,phi_0,...,phi_{d-1}`).
    pub fn write_csv(&self, out: &mut impl Write) -> Result<(), SnapshotError> {
        write!(out, "row,col")?;
        for c in 0..self.components {
            write!(out, ",phi_{c}")?;
        }
        writeln!(out)?;
        let n = (self.rows * self.cols) as usize;
        for r in 0..self.rows {
            for col in 0..self.cols {
                write!(out, "{r},{col}")?;
                let idx = (r * self.cols + col) as usize;
                for c in 0..self.components as usize {
                    write!(out, ",{:e}", self.data[c * n + idx])?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}
