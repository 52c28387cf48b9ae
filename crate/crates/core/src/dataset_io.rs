//! Little-endian dataset container.
//!
//! ```text
//! "LSDE"                      magic
//! u32                         format version
//! u8                          noise tag (0 gaussian, 1 alpha-stable, 2 student)
//! f64 pairs                   eta, epsilon, [alpha|nu], T, N ranges
//! u64                         record count
//! per record:
//!   u64 seed, u32 N, f64 h, f64 x0, u32 M, f64 x M theta, f32 x N values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::family::{NoiseFamily, ParamVector, Range, SdeFamily};
use crate::sim::{Dataset, DatasetRecord, Trajectory};

pub const MAGIC: &[u8; 4] = b"LSDE";
pub const VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn write_range<W: Write>(w: &mut W, r: Range) -> Result<()> {
    w.write_f64::<LE>(r.lo)?;
    w.write_f64::<LE>(r.hi)?;
    Ok(())
}

fn read_range<R: Read>(r: &mut R) -> Result<Range> {
    Ok(Range::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?))
}

pub fn write_family<W: Write>(w: &mut W, family: &SdeFamily) -> Result<()> {
    w.write_u8(family.noise.tag())?;
    write_range(w, family.eta)?;
    write_range(w, family.epsilon)?;
    if let Some(s) = family.shape {
        write_range(w, s)?;
    }
    write_range(w, family.span)?;
    write_range(w, Range::new(family.length.0 as f64, family.length.1 as f64))?;
    Ok(())
}

pub fn read_family<R: Read>(r: &mut R) -> Result<SdeFamily> {
    let tag = r.read_u8()?;
    let noise = NoiseFamily::from_tag(tag).ok_or_else(|| format_err(format!("unknown noise tag {tag}")))?;
    let eta = read_range(r)?;
    let epsilon = read_range(r)?;
    let shape = match noise {
        NoiseFamily::Gaussian => None,
        _ => Some(read_range(r)?),
    };
    let span = read_range(r)?;
    let n = read_range(r)?;
    let fam = SdeFamily {
        noise,
        eta,
        epsilon,
        shape,
        span,
        length: (n.lo as u32, n.hi as u32),
    };
    fam.validate().map_err(|e| format_err(format!("bad family descriptor: {e}")))?;
    Ok(fam)
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    write_family(w, &ds.family)?;
    w.write_u64::<LE>(ds.records.len() as u64)?;
    for rec in &ds.records {
        let traj = &rec.trajectory;
        w.write_u64::<LE>(rec.seed)?;
        w.write_u32::<LE>(traj.values.len() as u32)?;
        w.write_f64::<LE>(traj.h)?;
        w.write_f64::<LE>(traj.x0)?;
        let theta = rec.theta.to_vec();
        w.write_u32::<LE>(theta.len() as u32)?;
        for t in theta {
            w.write_f64::<LE>(t)?;
        }
        for &v in &traj.values {
            w.write_f32::<LE>(v as f32)?;
        }
    }
    Ok(())
}

/// Header of a dataset file, readable without loading the records.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub family: SdeFamily,
    pub count: u64,
}

pub fn read_header<R: Read>(r: &mut R) -> Result<DatasetHeader> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("bad magic, not a dataset file"));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let family = read_family(r)?;
    let count = r.read_u64::<LE>()?;
    Ok(DatasetHeader {
        version,
        family,
        count,
    })
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let header = read_header(r)?;
    let m_expected = header.family.param_dim();
    let mut records = Vec::with_capacity(header.count.min(1 << 20) as usize);
    for i in 0..header.count {
        let seed = r.read_u64::<LE>()?;
        let n = r.read_u32::<LE>()? as usize;
        let h = r.read_f64::<LE>()?;
        let x0 = r.read_f64::<LE>()?;
        let m = r.read_u32::<LE>()? as usize;
        if m != m_expected {
            return Err(format_err(format!("record {i}: expected {m_expected} parameters, found {m}")));
        }
        let theta: Vec<f64> = (0..m).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>()?;
        let mut values = vec![0f32; n];
        r.read_f32_into::<LE>(&mut values)?;
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        if !(h > 0.0) {
            return Err(format_err(format!("record {i}: non-positive h")));
        }
        records.push(DatasetRecord {
            trajectory: Trajectory { values, h, x0 },
            theta: ParamVector::from_slice(header.family.noise, &theta)?,
            seed,
        });
    }
    Ok(Dataset {
        family: header.family,
        records,
    })
}

pub fn save(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

pub fn load_header(path: impl AsRef<Path>) -> Result<DatasetHeader> {
    read_header(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, X0Policy};

    #[test]
    fn layout_of_header() {
        let fam = SdeFamily::gaussian().with_length(10, 12);
        let (ds, _) = generate_dataset(1, &fam, 1, X0Policy::Fixed(0.0), 1).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert_eq!(&buf[..4], b"LSDE");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf[8], 0);
        // 4 ranges for the gaussian family
        let count_at = 9 + 4 * 16;
        assert_eq!(u64::from_le_bytes(buf[count_at..count_at + 8].try_into().unwrap()), 1);
        let n = ds.records[0].trajectory.len();
        let rec_len = 8 + 4 + 8 + 8 + 4 + 2 * 8 + 4 * n;
        assert_eq!(buf.len(), count_at + 8 + rec_len);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_dataset(&mut &b"NOPE\x01\0\0\0"[..]).is_err());
        assert!(read_dataset(&mut &b"LSDE\x07\0\0\0"[..]).is_err());
        let fam = SdeFamily::student().with_length(10, 12);
        let (ds, _) = generate_dataset(1, &fam, 2, X0Policy::default(), 1).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_dataset(&mut &buf[..]).is_err());
    }
}
