//! Flat binary checkpoint container.
//!
//! Layout (all integers little-endian, all floats f64 little-endian):
//!
//! ```text
//! magic   b"QNCK"
//! version u32 (currently 1)
//! count   u32                          number of sections
//! section:
//!   name        str
//!   meta_count  u32, then (str key, str value) pairs
//!   step        u64                    optimizer step counter
//!   tensors     u32, then per tensor:
//!     name str, rows u32, cols u32,
//!     rows*cols f64 values, then Adam m, then Adam v
//! str = u32 byte length + UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::mat::Mat;
use crate::params::ParameterSet;
use crate::NnError;

const MAGIC: &[u8; 4] = b"QNCK";
const VERSION: u32 = 1;

/// One named network inside a checkpoint file.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub params: ParameterSet,
}

impl Section {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn save(path: &Path, sections: &[Section]) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sections.len() as u32).to_le_bytes())?;
    for s in sections {
        write_str(&mut w, &s.name)?;
        w.write_all(&(s.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &s.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&s.params.step_count().to_le_bytes())?;
        let tensors: Vec<_> = s.params.entries_for_io().collect();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, value, m, v) in tensors {
            write_str(&mut w, name)?;
            w.write_all(&(value.rows as u32).to_le_bytes())?;
            w.write_all(&(value.cols as u32).to_le_bytes())?;
            for part in [value, m, v] {
                for x in &part.data {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Section>, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut sections = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_str(&mut r)?;
        let meta_count = read_u32(&mut r)? as usize;
        let mut meta = Vec::with_capacity(meta_count);
        for _ in 0..meta_count {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            meta.push((k, v));
        }
        let step = read_u64(&mut r)?;
        let tensor_count = read_u32(&mut r)? as usize;
        let mut params = ParameterSet::new();
        for _ in 0..tensor_count {
            let tname = read_str(&mut r)?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let value = read_mat(&mut r, rows, cols)?;
            let m = read_mat(&mut r, rows, cols)?;
            let v = read_mat(&mut r, rows, cols)?;
            params.push_entry_for_io(tname, value, m, v);
        }
        params.set_step(step);
        sections.push(Section { name, meta, params });
    }
    Ok(sections)
}

/// Loads one named section, erroring if absent.
pub fn load_section(path: &Path, name: &str) -> Result<Section, NnError> {
    load(path)?
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| {
            NnError::Checkpoint(format!("section '{name}' not found in {}", path.display()))
        })
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String, NnError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(NnError::Checkpoint(format!("string length {len} too large")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| NnError::Checkpoint(e.to_string()))
}

fn read_mat(r: &mut impl Read, rows: usize, cols: usize) -> Result<Mat, NnError> {
    let n = rows * cols;
    if n > 1 << 28 {
        return Err(NnError::Checkpoint(format!("tensor size {n} too large")));
    }
    let mut data = vec![0.0f64; n];
    let mut buf = [0u8; 8];
    for x in &mut data {
        r.read_exact(&mut buf)?;
        *x = f64::from_le_bytes(buf);
    }
    Ok(Mat::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64Mcg;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = Pcg64Mcg::seed_from_u64(7);
        let mut ps = ParameterSet::new();
        ps.add_with("w", 3, 4, |_, _| rng.gen_range(-1.0..1.0));
        ps.add_with("b", 3, 1, |_, _| rng.gen_range(-1.0..1.0));
        let dir = std::env::temp_dir().join("qnck_roundtrip_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.qnck");
        let section = Section {
            name: "estimator".into(),
            meta: vec![("recurrent_width".into(), "64".into())],
            params: ps,
        };
        save(&path, std::slice::from_ref(&section)).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].name, "estimator");
        assert_eq!(back[0].meta_value("recurrent_width"), Some("64"));
        assert_eq!(back[0].params.byte_image(), section.params.byte_image());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join("qnck_badmagic_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.qnck");
        std::fs::write(&path, b"NOPE00000000").unwrap();
        assert!(load(&path).is_err());
    }
}
