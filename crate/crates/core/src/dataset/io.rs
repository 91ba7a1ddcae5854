use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::DenseMatrix;
use crate::trajectory::Trajectory;

/// Binary trajectory: `N`, `state_dim`, `M` as little-endian u64, then `M+1` times,
/// then `M+1` row-major `N x state_dim` states, all little-endian f64.
pub fn write_trajectory<W: Write>(traj: &Trajectory<f64>, mut w: W) -> Result<()> {
    let (n, d) = traj.initial().shape();
    let m = traj.num_steps();
    for v in [n as u64, d as u64, m as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in &traj.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for s in &traj.states {
        for v in s.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<Trajectory<f64>> {
    let mut b = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b).map_err(|_| Error::Format("truncated trajectory header".into()))?;
        Ok(u64::from_le_bytes(b))
    };
    let n = next_u64(&mut r)? as usize;
    let d = next_u64(&mut r)? as usize;
    let m = next_u64(&mut r)? as usize;
    let total = (m + 1)
        .checked_mul(1 + n * d)
        .ok_or_else(|| Error::Format("trajectory header overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(Error::Format(format!(
            "trajectory payload has {} bytes, header implies {}",
            bytes.len(),
            total * 8
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let times = vals[..m + 1].to_vec();
    let states = vals[m + 1..]
        .chunks(n * d)
        .take(m + 1)
        .map(|c| DenseMatrix::new(n, d, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(times, states)
}

pub fn save_trajectory(traj: &Trajectory<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_trajectory(traj, BufWriter::new(File::create(path)?))
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory<f64>> {
    read_trajectory(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let states = (0..3).map(|k| DenseMatrix::from_fn(4, 2, |i, j| (k * 8 + i * 2 + j) as f64 * 0.1)).collect();
        let traj = Trajectory::new(vec![0.0, 0.05, 0.12], states).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&traj, &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * (3 + 3 * 8));
        assert_eq!(&buf[..8], &4u64.to_le_bytes());
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), traj);
        assert!(read_trajectory(&buf[..buf.len() - 1]).is_err());
    }
}
