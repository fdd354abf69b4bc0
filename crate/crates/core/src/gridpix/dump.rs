//! Binary trajectory dumps.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "TDAETRAJ"
//! version    u32      1
//! channels   u32
//! height     u32
//! width      u32
//! steps      u64
//! per step:
//!   obs      f32 × channels·height·width   observation at the start of the step
//!   action   u32
//!   reward   f64
//!   flags    u8     bit 0 terminated, bit 1 truncated
//! ```

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 8] = b"TDAETRAJ";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub obs: Vec<f32>,
    pub action: u32,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub obs_shape: [usize; 3],
    pub steps: Vec<TrajectoryStep>,
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let d: usize = traj.obs_shape.iter().product();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for s in traj.obs_shape {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(traj.steps.len() as u64).to_le_bytes())?;
    for step in &traj.steps {
        if step.obs.len() != d {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "observation size mismatch"));
        }
        for v in &step.obs {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&step.action.to_le_bytes())?;
        w.write_all(&step.reward.to_le_bytes())?;
        let flags = (step.terminated as u8) | ((step.truncated as u8) << 1);
        w.write_all(&[flags])?;
    }
    w.flush()
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_trajectory<R: Read>(mut r: R) -> io::Result<Trajectory> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if &read_array::<_, 8>(&mut r)? != MAGIC {
        return Err(bad("not a trajectory dump"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(bad(&format!("unsupported trajectory version {version}")));
    }
    let mut obs_shape = [0usize; 3];
    for s in &mut obs_shape {
        *s = u32::from_le_bytes(read_array(&mut r)?) as usize;
    }
    let d: usize = obs_shape.iter().product();
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut steps = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let mut obs = Vec::with_capacity(d);
        for _ in 0..d {
            obs.push(f32::from_le_bytes(read_array(&mut r)?));
        }
        let action = u32::from_le_bytes(read_array(&mut r)?);
        let reward = f64::from_le_bytes(read_array(&mut r)?);
        let [flags] = read_array::<_, 1>(&mut r)?;
        steps.push(TrajectoryStep {
            obs,
            action,
            reward,
            terminated: flags & 1 != 0,
            truncated: flags & 2 != 0,
        });
    }
    Ok(Trajectory { obs_shape, steps })
}
