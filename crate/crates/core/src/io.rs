//! Trajectory export: CSV and a compact little-endian binary format.
//!
//! CSV columns are `i,t,index,x,value` in one dimension and
//! `i,t,index,x1,...,xd,value` otherwise. The binary layout is the magic
//! `ZKTRAJ01`, then `d: u64`, `N_1..N_d: u64`, `h: f64`, `tau: f64`,
//! `fields: u64`, followed by every field's values in storage order as `f64`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};
use crate::stepper::{Trajectory, TrajectoryMeta};

const MAGIC: &[u8; 8] = b"ZKTRAJ01";

pub fn csv_header(dim: usize) -> String {
    if dim == 1 {
        "i,t,index,x,value".to_string()
    } else {
        let xs: Vec<String> = (1..=dim).map(|a| format!("x{a}")).collect();
        format!("i,t,index,{},value", xs.join(","))
    }
}

/// Renders the trajectory as CSV (shortest round-trip float formatting).
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let grid = traj.grid();
    let mut out = csv_header(grid.dim());
    out.push('\n');
    let coords = grid.all_coords();
    for (i, f) in traj.fields().iter().enumerate() {
        let t = traj.time(i);
        for (idx, v) in f.values().iter().enumerate() {
            let _ = write!(out, "{i},{t:e},{idx}");
            for x in &coords[idx] {
                let _ = write!(out, ",{x:e}");
            }
            let _ = writeln!(out, ",{v:e}");
        }
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    w.write_all(trajectory_to_csv(traj).as_bytes())?;
    Ok(())
}

pub fn write_trajectory_binary(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    let grid = traj.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for n in grid.points() {
        w.write_all(&(*n as u64).to_le_bytes())?;
    }
    w.write_all(&grid.h().to_le_bytes())?;
    w.write_all(&traj.tau().to_le_bytes())?;
    w.write_all(&(traj.fields().len() as u64).to_le_bytes())?;
    for f in traj.fields() {
        for v in f.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn word(r: &mut impl Read) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated trajectory file: {e}")))?;
    Ok(b)
}

fn read_count(r: &mut impl Read, what: &str, limit: u64) -> Result<usize> {
    let v = u64::from_le_bytes(word(r)?);
    if v == 0 || v > limit {
        return Err(Error::Format(format!("implausible {what} {v}")));
    }
    Ok(v as usize)
}

/// Reads the binary format back; metadata is not stored and comes back empty.
pub fn read_trajectory_binary(mut r: impl Read) -> Result<Trajectory> {
    if &word(&mut r)? != MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let dim = read_count(&mut r, "dimension", 16)?;
    let points = (0..dim)
        .map(|_| read_count(&mut r, "point count", 1 << 32))
        .collect::<Result<Vec<_>>>()?;
    let h = f64::from_le_bytes(word(&mut r)?);
    let tau = f64::from_le_bytes(word(&mut r)?);
    let count = read_count(&mut r, "field count", 1 << 40)?;
    let periods: Vec<f64> = points.iter().map(|n| *n as f64 * h).collect();
    let grid = TorusGrid::new(dim, &periods, &points).map_err(|e| Error::Format(e.to_string()))?;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let values = (0..grid.len())
            .map(|_| word(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        fields.push(GridField::new(grid.clone(), values).map_err(|e| Error::Format(e.to_string()))?);
    }
    Trajectory::new(grid, tau, fields, TrajectoryMeta::default()).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Trajectory {
        let g = TorusGrid::new(2, &[1.0, 0.5], &[4, 2]).unwrap();
        let f0 = g.sample(|x| x[0] + 10.0 * x[1]).unwrap();
        let f1 = f0.scaled(0.5);
        Trajectory::new(g, 0.1, vec![f0, f1], TrajectoryMeta::default()).unwrap()
    }

    #[test]
    fn csv_layout() {
        let csv = trajectory_to_csv(&traj());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "i,t,index,x1,x2,value");
        assert_eq!(lines.clone().count(), 16);
        assert_eq!(lines.nth(1).unwrap(), "0,0e0,1,0e0,2.5e-1,2.5e0");
        assert_eq!(csv_header(1), "i,t,index,x,value");
    }

    #[test]
    fn binary_round_trip() {
        let t = traj();
        let mut buf = Vec::new();
        write_trajectory_binary(&t, &mut buf).unwrap();
        let back = read_trajectory_binary(buf.as_slice()).unwrap();
        assert_eq!(back.fields(), t.fields());
        assert_eq!(back.tau(), t.tau());
        assert!(read_trajectory_binary(&buf[..buf.len() - 3]).is_err());
        assert!(read_trajectory_binary(&b"garbage!"[..]).is_err());
    }
}
