//! Binary tensor container.
//!
//! Layout (little-endian): magic `XAST`, `u32` version, then tensors until end
//! of file. Each tensor is `u32` name length, UTF-8 name, `u8` dtype tag,
//! `u32` rank, `u64` per dimension, row-major payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, XmcError};

pub const MAGIC: &[u8; 4] = b"XAST";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U32(Vec<u32>),
    U8(Vec<u8>),
}

impl Data {
    fn tag(&self) -> u8 {
        match self {
            Data::F64(_) => 1,
            Data::U64(_) => 2,
            Data::U32(_) => 3,
            Data::U8(_) => 4,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Data::F64(v) => v.len(),
            Data::U64(v) => v.len(),
            Data::U32(v) => v.len(),
            Data::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Data,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub tensors: Vec<Tensor>,
}

fn bad(msg: impl Into<String>) -> XmcError {
    XmcError::Container(msg.into())
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, name: &str, dims: &[usize], data: Data) -> Result<()> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(bad(format!("{name}: shape {dims:?} vs {} values", data.len())));
        }
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        self.tensors.push(Tensor {
            name: name.to_string(),
            dims: dims.iter().map(|&d| d as u64).collect(),
            data,
        });
        Ok(())
    }

    pub fn put_f64(&mut self, name: &str, dims: &[usize], v: Vec<f64>) -> Result<()> {
        self.put(name, dims, Data::F64(v))
    }

    pub fn put_u32(&mut self, name: &str, v: Vec<u32>) -> Result<()> {
        let n = v.len();
        self.put(name, &[n], Data::U32(v))
    }

    pub fn put_u64(&mut self, name: &str, v: Vec<u64>) -> Result<()> {
        let n = v.len();
        self.put(name, &[n], Data::U64(v))
    }

    pub fn put_u8(&mut self, name: &str, v: Vec<u8>) -> Result<()> {
        let n = v.len();
        self.put(name, &[n], Data::U8(v))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    pub fn f64(&self, name: &str) -> Result<(&[u64], &[f64])> {
        let t = self.get(name)?;
        match &t.data {
            Data::F64(v) => Ok((&t.dims, v)),
            _ => Err(bad(format!("{name}: expected f64"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.data {
            Data::U64(v) => Ok(v),
            _ => Err(bad(format!("{name}: expected u64"))),
        }
    }

    pub fn u32(&self, name: &str) -> Result<&[u32]> {
        match &self.get(name)?.data {
            Data::U32(v) => Ok(v),
            _ => Err(bad(format!("{name}: expected u32"))),
        }
    }

    pub fn u8(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.data {
            Data::U8(v) => Ok(v),
            _ => Err(bad(format!("{name}: expected u8"))),
        }
    }

    pub fn scalar_u64(&self, name: &str) -> Result<u64> {
        self.u64(name)?.first().copied().ok_or_else(|| bad(format!("{name}: empty")))
    }

    pub fn scalar_f64(&self, name: &str) -> Result<f64> {
        self.f64(name)?.1.first().copied().ok_or_else(|| bad(format!("{name}: empty")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.data.tag()])?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for d in &t.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            match &t.data {
                Data::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                Data::U64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                Data::U32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                Data::U8(v) => w.write_all(v)?,
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| bad(e.to_string()))?;
        let mut cur = Cursor { b: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut c = Container::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let tag = cur.take(1)?[0];
            let rank = cur.u32()? as usize;
            let dims: Vec<u64> = (0..rank).map(|_| cur.u64()).collect::<Result<_>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d as usize))
                .ok_or_else(|| bad("tensor too large"))?;
            let data = match tag {
                1 => Data::F64(cur.chunks::<8>(count)?.map(f64::from_le_bytes).collect()),
                2 => Data::U64(cur.chunks::<8>(count)?.map(u64::from_le_bytes).collect()),
                3 => Data::U32(cur.chunks::<4>(count)?.map(u32::from_le_bytes).collect()),
                4 => Data::U8(cur.take(count)?.to_vec()),
                t => return Err(bad(format!("unknown dtype tag {t}"))),
            };
            c.tensors.push(Tensor { name, dims, data });
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| XmcError::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| XmcError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| XmcError::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn chunks<const N: usize>(&mut self, count: usize) -> Result<impl Iterator<Item = [u8; N]> + 'a> {
        let len = count.checked_mul(N).ok_or_else(|| bad("tensor too large"))?;
        let s = self.take(len)?;
        Ok(s.chunks_exact(N).map(|c| c.try_into().expect("chunk")))
    }
}
