//! Little-endian binary blocks and CSV helpers shared by the exporters.

use std::io::{BufWriter, Read, Write};

use crate::error::{Error, Result};

pub const BLOCK_MAGIC: &[u8; 4] = b"RCGB";
pub const BLOCK_VERSION: u32 = 1;

pub struct BinWriter<W: Write> {
    inner: BufWriter<W>,
}

impl<W: Write> BinWriter<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: BufWriter::new(w),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn i64(&mut self, v: i64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn string(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    pub fn f64_slice(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(r: R) -> Self {
        Self { inner: r }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated binary file".into()),
            _ => Error::Io(e),
        })
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn i64(&mut self) -> Result<i64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(i64::from_le_bytes(b))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if n > 1 << 20 {
            return Err(Error::Format("string field too long".into()));
        }
        let mut b = vec![0u8; n];
        self.fill(&mut b)?;
        String::from_utf8(b).map_err(|_| Error::Format("string field is not UTF-8".into()))
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            self.fill(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    }
}

pub fn read_exact_array<R: Read, const N: usize>(r: &mut BinReader<R>) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.fill(&mut b)?;
    Ok(b)
}

/// A block of values on lattice sites: `rows` vectors over the same site list.
///
/// Binary layout (little-endian): magic `RCGB`, version u32, d u32,
/// site count u64, row count u64, the sites as `d` i64 each, then the
/// values row-major as f64.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteBlock {
    pub dim: usize,
    pub sites: Vec<Vec<i64>>,
    pub rows: Vec<Vec<f64>>,
}

impl SiteBlock {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BinWriter::new(w);
        out.bytes(BLOCK_MAGIC)?;
        out.u32(BLOCK_VERSION)?;
        out.u32(self.dim as u32)?;
        out.u64(self.sites.len() as u64)?;
        out.u64(self.rows.len() as u64)?;
        for s in &self.sites {
            for &c in s {
                out.i64(c)?;
            }
        }
        for r in &self.rows {
            out.f64_slice(r)?;
        }
        out.finish()
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut inp = BinReader::new(r);
        let magic: [u8; 4] = read_exact_array(&mut inp)?;
        if &magic != BLOCK_MAGIC {
            return Err(Error::Format("not a site block file (bad magic)".into()));
        }
        if inp.u32()? != BLOCK_VERSION {
            return Err(Error::Format("unsupported site block version".into()));
        }
        let dim = inp.u32()? as usize;
        let n = inp.u64()? as usize;
        let k = inp.u64()? as usize;
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            sites.push((0..dim).map(|_| inp.i64()).collect::<Result<Vec<_>>>()?);
        }
        let rows = (0..k).map(|_| inp.f64_vec(n)).collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, sites, rows })
    }

    /// CSV with one line per site: `x1..xd` followed by one column per row.
    pub fn write_csv<W: Write>(&self, mut w: W, value_names: &[String]) -> Result<()> {
        let mut head: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        head.extend(value_names.iter().cloned());
        writeln!(w, "{}", head.join(","))?;
        for (j, s) in self.sites.iter().enumerate() {
            let mut line: Vec<String> = s.iter().map(|c| c.to_string()).collect();
            line.extend(self.rows.iter().map(|r| r[j].to_string()));
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
