//! Regular LDPC codes: construction, systematic encoding, packet layout and
//! sum-product decoding.

mod alist;
mod decode;
mod encode;
mod layout;
mod peg;

pub use alist::{read_alist, write_alist};
pub use decode::{bp_decode, BpOutput};
pub use encode::LdpcCode;
pub use layout::{make_packet_layout, PacketLayout, Segment};
pub use peg::construct_regular_ldpc;

use crate::error::{Error, Result};

/// Sparse binary parity-check matrix stored as an edge list.
///
/// Edges are numbered check by check, so the edges of check `c` are
/// `check_start[c]..check_start[c + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
    check_start: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds the matrix from the column index list of every row.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Code(format!("row {r} has a repeated column")));
            }
            for &c in row.iter() {
                if c >= n {
                    return Err(Error::Code(format!("row {r} references column {c} >= {n}")));
                }
                cols[c].push(r);
            }
        }
        let mut check_start = Vec::with_capacity(rows.len() + 1);
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); n];
        for row in &rows {
            check_start.push(edge_var.len());
            for &c in row {
                var_edges[c].push(edge_var.len());
                edge_var.push(c);
            }
        }
        check_start.push(edge_var.len());
        Ok(ParityCheckMatrix { n, rows, cols, check_start, edge_var, var_edges })
    }

    /// Block length in bits.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of parity checks.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Design rate `(n - m) / n`.
    pub fn rate(&self) -> f64 {
        (self.n - self.m()) as f64 / self.n as f64
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn cols(&self) -> &[Vec<usize>] {
        &self.cols
    }

    /// Column weight when every column has the same weight.
    pub fn column_weight(&self) -> Option<usize> {
        let w = self.cols.first()?.len();
        self.cols.iter().all(|c| c.len() == w).then_some(w)
    }

    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    pub fn syndrome_is_zero(&self, bits: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &c| acc ^ (bits[c] & 1)) == 0)
    }

    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        self.rows
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &c| acc ^ (bits[c] & 1)))
            .collect()
    }

    /// Length of the shortest cycle in the Tanner graph (`usize::MAX` when acyclic).
    pub fn girth(&self) -> usize {
        let mut best = usize::MAX;
        // BFS from every variable node over the bipartite graph
        for start in 0..self.n {
            let total = self.n + self.m();
            let mut dist = vec![usize::MAX; total];
            let mut parent = vec![usize::MAX; total];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let neighbours: Vec<usize> = if u < self.n {
                    self.cols[u].iter().map(|&r| self.n + r).collect()
                } else {
                    self.rows[u - self.n].clone()
                };
                for v in neighbours {
                    if v == parent[u] {
                        continue;
                    }
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        parent[v] = u;
                        queue.push_back(v);
                    } else {
                        best = best.min(dist[u] + dist[v] + 1);
                    }
                }
            }
        }
        best
    }

    pub(crate) fn check_edges(&self, c: usize) -> std::ops::Range<usize> {
        self.check_start[c]..self.check_start[c + 1]
    }

    pub(crate) fn edge_var(&self) -> &[usize] {
        &self.edge_var
    }

    pub(crate) fn var_edges(&self) -> &[Vec<usize>] {
        &self.var_edges
    }

    /// Returns the matrix with column `j` of the result taken from column `order[j]`.
    pub(crate) fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        let mut new_pos = vec![0; self.n];
        for (j, &old) in order.iter().enumerate() {
            new_pos[old] = j;
        }
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&c| new_pos[c]).collect())
            .collect();
        Self::from_rows(self.n, rows)
    }
}
