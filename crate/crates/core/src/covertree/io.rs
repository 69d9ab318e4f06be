//! Binary tree file: little-endian, versioned.
//!
//! ```text
//! magic "CBLPTREE" | version u32 | dim u64 | n_points u64 | n_nodes u64 | sigma f64 | i_max i32
//! points: n_points·dim f64
//! per node: point u64 | scale i32 | parent i64 (-1 for root) | maxdist f64
//!           | n_dup u64 | dup ids u64…
//! ```
//! Children lists and edge maxima are rebuilt on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::AtomicU64;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{CoverTree, Node, PointSet};
use crate::linalg::dist;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CBLPTREE";
const VERSION: u32 = 1;

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated tree file".into())
    } else {
        Error::Io(e)
    }
}

impl CoverTree {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u64::<LE>(self.points.dim() as u64)?;
        w.write_u64::<LE>(self.points.len() as u64)?;
        w.write_u64::<LE>(self.nodes.len() as u64)?;
        w.write_f64::<LE>(self.sigma)?;
        w.write_i32::<LE>(self.i_max)?;
        for &x in &self.points.data {
            w.write_f64::<LE>(x)?;
        }
        for n in &self.nodes {
            w.write_u64::<LE>(n.point as u64)?;
            w.write_i32::<LE>(n.scale)?;
            w.write_i64::<LE>(n.parent.map_or(-1, |p| p as i64))?;
            w.write_f64::<LE>(n.maxdist)?;
            w.write_u64::<LE>(n.duplicates.len() as u64)?;
            for &d in &n.duplicates {
                w.write_u64::<LE>(d as u64)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a cover tree file".into()));
        }
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported tree file version {version}")));
        }
        let dim = r.read_u64::<LE>().map_err(eof)? as usize;
        let n_points = r.read_u64::<LE>().map_err(eof)? as usize;
        let n_nodes = r.read_u64::<LE>().map_err(eof)? as usize;
        let sigma = r.read_f64::<LE>().map_err(eof)?;
        let i_max = r.read_i32::<LE>().map_err(eof)?;
        if dim == 0 || n_points == 0 || n_nodes == 0 || n_nodes > n_points {
            return Err(Error::Format("inconsistent tree header".into()));
        }
        let mut data = vec![0.0; n_points * dim];
        r.read_f64_into::<LE>(&mut data).map_err(eof)?;
        let points = PointSet::new(dim, data)?;

        let mut nodes = Vec::with_capacity(n_nodes);
        let mut owner = vec![usize::MAX; n_points];
        for id in 0..n_nodes {
            let point = r.read_u64::<LE>().map_err(eof)? as usize;
            let scale = r.read_i32::<LE>().map_err(eof)?;
            let parent = r.read_i64::<LE>().map_err(eof)?;
            let _maxdist = r.read_f64::<LE>().map_err(eof)?;
            let n_dup = r.read_u64::<LE>().map_err(eof)? as usize;
            if point >= n_points || n_dup > n_points {
                return Err(Error::Format(format!("node {id} references a missing point")));
            }
            let parent = match parent {
                -1 if id == 0 => None,
                p if p >= 0 && (p as usize) < id => Some(p as usize),
                _ => return Err(Error::Format(format!("node {id} has an invalid parent"))),
            };
            let mut node = Node::new(point, scale, parent);
            owner[point] = id;
            for _ in 0..n_dup {
                let d = r.read_u64::<LE>().map_err(eof)? as usize;
                if d >= n_points {
                    return Err(Error::Format(format!("node {id} references a missing duplicate")));
                }
                owner[d] = id;
                node.duplicates.push(d);
            }
            nodes.push(node);
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::Format("some points are not attached to the tree".into()));
        }

        let mut tree = CoverTree {
            points,
            nodes,
            owner,
            sigma,
            i_max,
            distance_count: AtomicU64::new(0),
        };
        tree.rebuild_edges();
        Ok(tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Recompute children lists and per-edge subtree maxima from parent links.
    fn rebuild_edges(&mut self) {
        let n = self.nodes.len();
        for id in 1..n {
            let p = self.nodes[id].parent.expect("non-root node has a parent");
            self.nodes[p].children.push(id);
        }
        for id in 0..n {
            let mut ch = std::mem::take(&mut self.nodes[id].children);
            ch.sort_by_key(|&c| (self.nodes[c].scale, self.nodes[c].point));
            let node = &mut self.nodes[id];
            node.child_md = vec![0.0; ch.len()];
            node.children = ch;
        }
        for x in 1..n {
            let px = self.nodes[x].point;
            let mut child = x;
            while let Some(a) = self.nodes[child].parent {
                let d = dist(self.points.point(self.nodes[a].point), self.points.point(px));
                let k = self.nodes[a].children.iter().position(|&c| c == child).unwrap();
                let md = &mut self.nodes[a].child_md[k];
                *md = md.max(d);
                child = a;
            }
        }
        for node in &mut self.nodes {
            node.refresh_suffix();
        }
    }
}
