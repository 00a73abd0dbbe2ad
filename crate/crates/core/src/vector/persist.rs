//! Binary index file, all integers little-endian:
//!
//! ```text
//! magic      [u8; 4] = b"LQVI"
//! version    u32     = 1
//! dim        u32
//! count      u64
//! strategy   u8      0 = exact scan, 1 = graph
//! m          u32     graph params (zero for exact scan)
//! ef_constr  u32
//! ef_search  u32
//! seed       u64
//! entries    count x (row_id u64, dim x f32)    normalized vectors
//! -- graph only --
//! entry      u32
//! per node:  layers u32, then per layer: len u32, len x u32 neighbor positions
//! ```

use std::io::{Read, Write};

use super::{GraphIndex, GraphParams, IndexStrategy, VectorError, VectorIndex};

const MAGIC: &[u8; 4] = b"LQVI";
const VERSION: u32 = 1;

impl VectorIndex {
    pub fn write_to<W: Write>(&self, w: W) -> Result<(), VectorError> {
        let mut w = std::io::BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        let (tag, params, seed) = match (&self.strategy, &self.graph) {
            (IndexStrategy::Graph(p), Some(g)) => (1u8, *p, g.seed),
            _ => (0u8, GraphParams { m: 0, ef_construction: 0, ef_search: 0 }, 0),
        };
        w.write_all(&[tag])?;
        for v in [params.m, params.ef_construction, params.ef_search] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&seed.to_le_bytes())?;
        for (i, id) in self.ids.iter().enumerate() {
            w.write_all(&id.to_le_bytes())?;
            for x in self.vector(i) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        if let Some(g) = &self.graph {
            w.write_all(&g.entry.to_le_bytes())?;
            for node in &g.links {
                w.write_all(&(node.len() as u32).to_le_bytes())?;
                for layer in node {
                    w.write_all(&(layer.len() as u32).to_le_bytes())?;
                    for nb in layer {
                        w.write_all(&nb.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<VectorIndex, VectorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VectorError::Corrupt("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(VectorError::Corrupt(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let params = GraphParams {
            m: read_u32(&mut r)? as usize,
            ef_construction: read_u32(&mut r)? as usize,
            ef_search: read_u32(&mut r)? as usize,
        };
        let seed = read_u64(&mut r)?;
        let mut ids = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            ids.push(read_u64(&mut r)?);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                data.push(f32::from_le_bytes(b));
            }
        }
        let (strategy, graph) = match tag[0] {
            0 => (IndexStrategy::ExactScan, None),
            1 => {
                let entry = read_u32(&mut r)?;
                let mut links = Vec::with_capacity(count);
                for _ in 0..count {
                    let layers = read_u32(&mut r)? as usize;
                    let mut node = Vec::with_capacity(layers);
                    for _ in 0..layers {
                        let len = read_u32(&mut r)? as usize;
                        let mut list = Vec::with_capacity(len);
                        for _ in 0..len {
                            let nb = read_u32(&mut r)?;
                            if nb as usize >= count {
                                return Err(VectorError::Corrupt(format!("neighbor {nb} out of range")));
                            }
                            list.push(nb);
                        }
                        node.push(list);
                    }
                    links.push(node);
                }
                (IndexStrategy::Graph(params), Some(GraphIndex { params, seed, entry, links }))
            }
            t => return Err(VectorError::Corrupt(format!("unknown strategy tag {t}"))),
        };
        Ok(VectorIndex { dim, ids, data, strategy, graph })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, VectorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, VectorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
