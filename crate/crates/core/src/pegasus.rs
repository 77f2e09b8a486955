//! The nominal (defect-free) Pegasus qubit graph `P_m`.
//!
//! Qubits are addressed either by a linear index in `[0, 24·m·(m−1))` or by
//! the vendor coordinate tuple `(u, w, k, z)`:
//!
//! * `u` orientation (0 vertical, 1 horizontal)
//! * `w` perpendicular tile offset, `0..m`
//! * `k` qubit offset inside the tile, `0..12`
//! * `z` parallel tile offset, `0..m−1`
//!
//! The linear index is `((u·m + w)·12 + k)·(m−1) + z`, so consecutive
//! indices that do not cross a `k` boundary are joined by external couplers.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Qubits per tile row.
pub const TILE_QUBITS: usize = 12;

/// Maximum degree of any Pegasus qubit.
pub const MAX_DEGREE: usize = 15;

/// Default size of the device class modelled here.
pub const DEFAULT_M: usize = 16;

/// Shift of each vertical qubit's span, indexed by `k`.
pub const VERTICAL_OFFSETS: [usize; 12] = [2, 2, 2, 2, 10, 10, 10, 10, 6, 6, 6, 6];
/// Shift of each horizontal qubit's span, indexed by `k`.
pub const HORIZONTAL_OFFSETS: [usize; 12] = [6, 6, 6, 6, 2, 2, 2, 2, 10, 10, 10, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PegasusCoord {
    pub u: usize,
    pub w: usize,
    pub k: usize,
    pub z: usize,
}

impl PegasusCoord {
    pub fn new(u: usize, w: usize, k: usize, z: usize) -> Self {
        Self { u, w, k, z }
    }
}

/// Immutable adjacency structure of `P_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PegasusGraph {
    m: usize,
    adjacency: Vec<Vec<u32>>,
}

impl PegasusGraph {
    /// Builds `P_m` from the external, odd and internal coupler rules.
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidSize(m));
        }
        let m1 = m - 1;
        let n = 24 * m * m1;
        let mut adjacency = vec![Vec::with_capacity(MAX_DEGREE); n];
        let idx = |u: usize, w: usize, k: usize, z: usize| ((u * m + w) * TILE_QUBITS + k) * m1 + z;
        let mut link = |a: usize, b: usize| {
            adjacency[a].push(b as u32);
            adjacency[b].push(a as u32);
        };

        // external: along z
        for u in 0..2 {
            for w in 0..m {
                for k in 0..TILE_QUBITS {
                    for z in 0..m1 - 1 {
                        link(idx(u, w, k, z), idx(u, w, k, z + 1));
                    }
                }
            }
        }
        // odd: k-parity pairs
        for u in 0..2 {
            for w in 0..m {
                for k in (0..TILE_QUBITS).step_by(2) {
                    for z in 0..m1 {
                        link(idx(u, w, k, z), idx(u, w, k + 1, z));
                    }
                }
            }
        }
        // internal: vertical (0, w, k, z) to horizontal (1, z + [kk < off0[k]], kk, w − [k < off1[kk]])
        for w in 0..m {
            for kk in 0..TILE_QUBITS {
                let lo = if w == 0 { HORIZONTAL_OFFSETS[kk] } else { 0 };
                let hi = if w < m1 {
                    TILE_QUBITS
                } else {
                    HORIZONTAL_OFFSETS[kk]
                };
                for k in lo..hi {
                    for z in 0..m1 {
                        let hw = z + usize::from(kk < VERTICAL_OFFSETS[k]);
                        let hz = w - usize::from(k < HORIZONTAL_OFFSETS[kk]);
                        link(idx(0, w, k, z), idx(1, hw, kk, hz));
                    }
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { m, adjacency })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_qubits(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn check(&self, q: usize) -> Result<()> {
        if q < self.num_qubits() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: q,
                limit: self.num_qubits(),
            })
        }
    }

    pub fn to_linear(&self, c: PegasusCoord) -> Result<usize> {
        let m1 = self.m - 1;
        if c.u > 1 || c.w >= self.m || c.k >= TILE_QUBITS || c.z >= m1 {
            return Err(Error::Parameter(format!(
                "coordinate {c:?} outside P_{}",
                self.m
            )));
        }
        Ok(((c.u * self.m + c.w) * TILE_QUBITS + c.k) * m1 + c.z)
    }

    pub fn from_linear(&self, q: usize) -> Result<PegasusCoord> {
        self.check(q)?;
        let m1 = self.m - 1;
        let z = q % m1;
        let rest = q / m1;
        let k = rest % TILE_QUBITS;
        let rest = rest / TILE_QUBITS;
        Ok(PegasusCoord {
            u: rest / self.m,
            w: rest % self.m,
            k,
            z,
        })
    }

    pub fn neighbors(&self, q: usize) -> Result<&[u32]> {
        self.check(q)?;
        Ok(&self.adjacency[q])
    }

    pub fn degree(&self, q: usize) -> Result<usize> {
        Ok(self.neighbors(q)?.len())
    }

    pub fn is_edge(&self, a: usize, b: usize) -> Result<bool> {
        self.check(b)?;
        Ok(self.neighbors(a)?.binary_search(&(b as u32)).is_ok())
    }

    /// Unchecked adjacency probe for hot loops; out-of-range indices are not edges.
    pub(crate) fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.adjacency.len() && self.adjacency[a].binary_search(&(b as u32)).is_ok()
    }

    /// All edges `(a, b)` with `a < b`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .map(|&b| b as usize)
                .filter(move |&b| b > a)
                .map(move |b| (a, b))
        })
    }

    /// Writes one `a b` line per edge in ascending order.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        for (a, b) in self.edges() {
            let _ = writeln!(buf, "{a} {b}");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads an edge list as produced by [`write_edge_list`](Self::write_edge_list).
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Vec<(usize, usize)>> {
        let mut edges = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a.min(b), a.max(b))),
                _ => {
                    return Err(Error::Malformed(format!(
                        "edge list line {}: {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_m() {
        assert!(matches!(PegasusGraph::new(1), Err(Error::InvalidSize(1))));
        assert!(PegasusGraph::new(0).is_err());
    }

    #[test]
    fn qubit_counts() {
        assert_eq!(PegasusGraph::new(2).unwrap().num_qubits(), 48);
        assert_eq!(PegasusGraph::new(16).unwrap().num_qubits(), 5760);
    }

    #[test]
    fn linear_index_anchors() {
        let g = PegasusGraph::new(16).unwrap();
        assert_eq!(g.to_linear(PegasusCoord::new(0, 0, 0, 0)).unwrap(), 0);
        assert_eq!(g.to_linear(PegasusCoord::new(1, 0, 0, 0)).unwrap(), 2880);
        assert!(g.to_linear(PegasusCoord::new(0, 0, 0, 15)).is_err());
        assert!(g.from_linear(5760).is_err());
    }

    #[test]
    fn no_self_loops_and_range_errors() {
        let g = PegasusGraph::new(3).unwrap();
        for q in 0..g.num_qubits() {
            assert!(!g.is_edge(q, q).unwrap());
        }
        assert!(g.is_edge(0, g.num_qubits()).is_err());
        assert!(g.neighbors(g.num_qubits()).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = PegasusGraph::new(2).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let edges = PegasusGraph::read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(edges, g.edges().collect::<Vec<_>>());
        assert_eq!(edges.len(), g.num_edges());
    }
}
