//! Max-Cut problem instances: weighted graphs, random regular generation,
//! classical cut values, and the per-edge combinatorics (endpoint degrees and
//! common-neighbor counts) consumed by the analytic depth-1 cost formula.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbm::BitString;

/// One undirected weighted edge with u < v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected simple graph with real edge weights; vertex indices are dense
/// 0..n and double as qubit indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<Edge>,
}

/// Per-edge record for the analytic cost formula: q_u + 1 and q_v + 1 are the
/// endpoint degrees, `common_neighbors` counts vertices adjacent to both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeCombinatorics {
    pub q_u: usize,
    pub q_v: usize,
    pub common_neighbors: usize,
}

impl Graph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u == v {
                return Err(Error::Validation(format!("self-loop at vertex {u}")));
            }
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) out of range for {n_vertices} vertices"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight of edge ({u}, {v})")));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if !seen.insert((a, b)) {
                return Err(Error::Validation(format!("duplicate edge ({a}, {b})")));
            }
            out.push(Edge { u: a, v: b, weight: w });
        }
        Ok(Self {
            n_vertices,
            edges: out,
        })
    }

    /// Convenience: unit-weight graph from vertex pairs.
    pub fn unweighted(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(n_vertices, edges.iter().map(|&(u, v)| (u, v, 1.0)).collect())
    }

    pub fn triangle() -> Self {
        Self::unweighted(3, &[(0, 1), (1, 2), (0, 2)]).expect("static instance")
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument("ring needs at least 3 vertices".into()));
        }
        Self::unweighted(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>())
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Self::unweighted(n, &edges)
    }

    /// Uniform-ish random d-regular simple graph via the pairing model:
    /// shuffle n*d vertex stubs into a perfect matching and restart from
    /// scratch whenever a self-loop or parallel edge appears. Deterministic
    /// given the seed; all weights 1.
    pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument("need n >= 1 and d >= 1".into()));
        }
        if d >= n {
            return Err(Error::InvalidArgument(format!(
                "degree {d} must be smaller than vertex count {n}"
            )));
        }
        if (n * d) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "n*d = {} is odd; no {d}-regular graph on {n} vertices exists",
                n * d
            )));
        }
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(d)).collect();
        let half = stubs.len() / 2;
        'attempt: loop {
            stubs.shuffle(&mut rng);
            let mut seen = std::collections::HashSet::with_capacity(half);
            let mut edges = Vec::with_capacity(half);
            for i in 0..half {
                let (mut u, mut v) = (stubs[i], stubs[i + half]);
                if u == v {
                    continue 'attempt;
                }
                if u > v {
                    std::mem::swap(&mut u, &mut v);
                }
                if !seen.insert((u, v)) {
                    continue 'attempt;
                }
                edges.push((u, v, 1.0));
            }
            return Self::new(n, edges);
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_vertices];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    pub fn is_unit_weight(&self) -> bool {
        self.edges.iter().all(|e| e.weight == 1.0)
    }

    /// Diagonal cost <B|C|B> = sum over edges of w * (-1)^(B_u xor B_v).
    /// Lower is better; the minimum corresponds to the maximum cut.
    pub fn cut_value(&self, bits: &BitString) -> Result<f64> {
        if bits.len() != self.n_vertices {
            return Err(Error::DimensionMismatch(format!(
                "bitstring length {} does not match {} vertices",
                bits.len(),
                self.n_vertices
            )));
        }
        let mut acc = 0.0;
        for e in &self.edges {
            let aligned = bits.bit(e.u) == bits.bit(e.v);
            acc += if aligned { e.weight } else { -e.weight };
        }
        Ok(acc)
    }

    /// Exact (q_u, q_v, common-neighbor count) per edge, in edge order.
    pub fn edge_combinatorics(&self) -> Vec<EdgeCombinatorics> {
        let mut adj = vec![std::collections::HashSet::new(); self.n_vertices];
        for e in &self.edges {
            adj[e.u].insert(e.v);
            adj[e.v].insert(e.u);
        }
        self.edges
            .iter()
            .map(|e| EdgeCombinatorics {
                q_u: adj[e.u].len() - 1,
                q_v: adj[e.v].len() - 1,
                common_neighbors: adj[e.u].intersection(&adj[e.v]).count(),
            })
            .collect()
    }

    /// Relabel vertices by `perm` (vertex v becomes perm[v]); edge order is
    /// preserved, endpoints reordered to keep u < v.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_vertices {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        Self::new(
            self.n_vertices,
            self.edges
                .iter()
                .map(|e| (perm[e.u], perm[e.v], e.weight))
                .collect(),
        )
    }

    /// Parse the plain-text edge-list format:
    /// a header line `n <N>`, then one edge per line `u v [w]` (weight
    /// defaults to 1.0). Errors carry 1-based line numbers.
    pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (first_no, first) = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break (i + 1, line);
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: "empty edge-list file".into(),
                    })
                }
            }
        };
        let mut parts = first.split_whitespace();
        let n = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(v), None) => v.parse::<usize>().map_err(|e| Error::Parse {
                line: first_no,
                msg: format!("bad vertex count: {e}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: first_no,
                    msg: format!("expected header 'n <N>', got {first:?}"),
                })
            }
        };
        let mut edges = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 'u v [w]', got {trimmed:?}"),
                });
            }
            let u = fields[0].parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad vertex: {e}"),
            })?;
            let v = fields[1].parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad vertex: {e}"),
            })?;
            let w = if fields.len() == 3 {
                fields[2].parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad weight: {e}"),
                })?
            } else {
                1.0
            };
            edges.push((u, v, w));
        }
        Self::new(n, edges)
    }

    /// Write the edge-list format; round-trips exactly (edge order, weights).
    pub fn write_edge_list<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "n {}", self.n_vertices)?;
        for e in &self.edges {
            if e.weight == 1.0 {
                writeln!(writer, "{} {}", e.u, e.v)?;
            } else {
                writeln!(writer, "{} {} {}", e.u, e.v, e.weight)?;
            }
        }
        Ok(())
    }
}
