//! Binary weight files.
//!
//! Layout (little-endian): magic `PENW`, `u32` version, `u32` tensor count, then per
//! tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and `f64`
//! data. Any number of tagged sections follow, each a 4-byte tag, a `u64` payload
//! length and the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PENW";
pub const VERSION: u32 = 1;
pub const ADAM_TAG: [u8; 4] = *b"ADAM";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn write_tensor_body<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| format_err("tensor rank above 255"))?;
    w.write_u8(rank)?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| format_err("tensor dim above u32"))?;
        w.write_u32::<LE>(d)?;
    }
    for &v in t.data() {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_tensor_body<R: Read>(r: &mut R) -> Result<Tensor> {
    let rank = r.read_u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.read_u32::<LE>()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= 1 << 31)
        .ok_or_else(|| format_err(format!("implausible tensor shape {shape:?}")))?;
    let mut data = vec![0.0; n];
    r.read_f64_into::<LE>(&mut data)?;
    Tensor::new(&shape, data)
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Replace or add a tagged section.
    pub fn set_section(&mut self, tag: [u8; 4], payload: Vec<u8>) {
        match self.sections.iter_mut().find(|(t, _)| *t == tag) {
            Some(slot) => slot.1 = payload,
            None => self.sections.push((tag, payload)),
        }
    }

    pub fn section(&self, tag: [u8; 4]) -> Option<&[u8]> {
        self.sections.iter().find(|(t, _)| *t == tag).map(|(_, p)| p.as_slice())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| format_err("tensor name too long"))?;
            w.write_u16::<LE>(len)?;
            w.write_all(name.as_bytes())?;
            write_tensor_body(w, t)?;
        }
        for (tag, payload) in &self.sections {
            w.write_all(tag)?;
            w.write_u64::<LE>(payload.len() as u64)?;
            w.write_all(payload)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(format_err("not a weight file (bad magic)"));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let count = r.read_u32::<LE>()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.read_u16::<LE>()? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| format_err("tensor name is not UTF-8"))?;
            tensors.push((name, read_tensor_body(r)?));
        }
        let mut sections = Vec::new();
        loop {
            let mut tag = [0u8; 4];
            match r.read_exact(&mut tag) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = r.read_u64::<LE>()?;
            let mut payload = Vec::new();
            r.by_ref().take(len).read_to_end(&mut payload)?;
            if payload.len() as u64 != len {
                return Err(format_err("truncated section"));
            }
            sections.push((tag, payload));
        }
        Ok(Self { tensors, sections })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn set_adam(&mut self, opt: &Adam) -> Result<()> {
        self.set_section(ADAM_TAG, encode_adam(opt)?);
        Ok(())
    }

    pub fn adam(&self) -> Result<Option<Adam>> {
        self.section(ADAM_TAG).map(decode_adam).transpose()
    }
}

pub fn encode_adam(opt: &Adam) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    w.write_u64::<LE>(opt.step_count())?;
    for v in [opt.lr, opt.beta1, opt.beta2, opt.eps] {
        w.write_f64::<LE>(v)?;
    }
    let (m, v) = opt.moments();
    w.write_u32::<LE>(m.len() as u32)?;
    for t in m.iter().chain(v) {
        write_tensor_body(&mut w, t)?;
    }
    Ok(w)
}

pub fn decode_adam(mut r: &[u8]) -> Result<Adam> {
    let step = r.read_u64::<LE>()?;
    let mut hp = [0.0; 4];
    r.read_f64_into::<LE>(&mut hp)?;
    let n = r.read_u32::<LE>()? as usize;
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        m.push(read_tensor_body(&mut r)?);
    }
    for _ in 0..n {
        v.push(read_tensor_body(&mut r)?);
    }
    if !r.is_empty() {
        return Err(format_err("trailing bytes in optimizer section"));
    }
    Ok(Adam::from_parts(hp[0], hp[1], hp[2], hp[3], step, m, v))
}
