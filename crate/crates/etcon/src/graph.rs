//! Directed communication graphs with unit edge weights.
//!
//! An edge (i, j) means "agent j receives broadcasts from agent i"; agent i
//! is then an in-neighbor of j. Agents are numbered 1..=N externally and
//! 0..N internally.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n_agents: usize,
    /// Ordered pairs (i, j), 0-based: j receives from i.
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    /// Build from 1-based (sender, receiver) pairs.
    pub fn new(n_agents: usize, edges_1based: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidGraph("need at least one agent".into()));
        }
        let mut edges = BTreeSet::new();
        for &(i, j) in edges_1based {
            if i == 0 || j == 0 || i > n_agents || j > n_agents {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range 1..={n_agents}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at agent {i}")));
            }
            edges.insert((i - 1, j - 1));
        }
        Ok(Self { n_agents, edges })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// 0-based (sender, receiver) pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// In-neighbor sets N_j (0-based), one per agent.
    pub fn in_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_agents];
        for &(i, j) in &self.edges {
            out[j].push(i);
        }
        out
    }

    /// For each sender i, every agent holding a model of i: i itself plus
    /// all receivers of its broadcasts.
    pub fn model_holders(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.n_agents).map(|i| vec![i]).collect();
        for &(i, j) in &self.edges {
            out[i].push(j);
        }
        for holders in &mut out {
            holders.sort_unstable();
            holders.dedup();
        }
        out
    }

    /// Adjacency matrix with a_ij = 1 iff (j, i) is an edge (row i lists who
    /// agent i receives from).
    pub fn adjacency(&self) -> RMatrix {
        let mut a = RMatrix::zeros(self.n_agents, self.n_agents);
        for &(i, j) in &self.edges {
            a[(j, i)] = 1.0;
        }
        a
    }
}

/// Laplacian L = D − A with D the diagonal of row sums of A.
/// Every row sums to zero exactly (integer-valued arithmetic).
pub fn laplacian(g: &DirectedGraph) -> RMatrix {
    let a = g.adjacency();
    let mut l = -a.clone();
    for i in 0..g.n_agents() {
        l[(i, i)] += a.row(i).sum();
    }
    l
}

/// True iff some agent has directed paths to all other agents.
pub fn has_spanning_tree(g: &DirectedGraph) -> bool {
    let n = g.n_agents();
    let mut out_adj = vec![Vec::new(); n];
    for (i, j) in g.edges() {
        out_adj[i].push(j);
    }
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &out_adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    })
}

/// Parse the edge-list text format:
///
/// ```text
/// # comments and blank lines are ignored
/// agents N
/// i j        # agent j receives from agent i (1-based)
/// ```
pub fn parse_edge_list(text: &str) -> Result<DirectedGraph> {
    let mut n_agents: Option<usize> = None;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap();
        if first == "agents" {
            let n = parts
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::InvalidGraph(format!("line {}: malformed agents header", lineno + 1))
                })?;
            if n_agents.replace(n).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "line {}: duplicate agents header",
                    lineno + 1
                )));
            }
            continue;
        }
        let i = first.parse::<usize>().map_err(|_| {
            Error::InvalidGraph(format!("line {}: expected `i j` pair", lineno + 1))
        })?;
        let j = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| {
                Error::InvalidGraph(format!("line {}: expected `i j` pair", lineno + 1))
            })?;
        if parts.next().is_some() {
            return Err(Error::InvalidGraph(format!(
                "line {}: trailing tokens",
                lineno + 1
            )));
        }
        edges.push((i, j));
    }
    let n = n_agents.ok_or_else(|| Error::InvalidGraph("missing `agents N` header".into()))?;
    DirectedGraph::new(n, &edges)
}

/// Inverse of [`parse_edge_list`].
pub fn format_edge_list(g: &DirectedGraph) -> String {
    let mut out = format!("agents {}\n", g.n_agents());
    for (i, j) in g.edges() {
        out.push_str(&format!("{} {}\n", i + 1, j + 1));
    }
    out
}

/// The six-agent graph used by the bundled reference scenario.
pub fn six_agent_reference() -> DirectedGraph {
    DirectedGraph::new(
        6,
        &[(3, 1), (1, 2), (2, 3), (6, 3), (3, 4), (2, 5), (6, 5), (2, 6)],
    )
    .expect("static graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_agent_laplacian_diagonal_and_row_sums() {
        let g = six_agent_reference();
        let l = laplacian(&g);
        let diag: Vec<f64> = (0..6).map(|i| l[(i, i)]).collect();
        assert_eq!(diag, vec![1.0, 1.0, 2.0, 1.0, 2.0, 1.0]);
        for i in 0..6 {
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn empty_graph_laplacian_is_zero() {
        let g = DirectedGraph::new(4, &[]).unwrap();
        assert_eq!(laplacian(&g), RMatrix::zeros(4, 4));
    }

    #[test]
    fn two_cycle_laplacian() {
        let g = DirectedGraph::new(2, &[(1, 2), (2, 1)]).unwrap();
        let l = laplacian(&g);
        assert_eq!(l, RMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn spanning_tree_detection() {
        assert!(has_spanning_tree(&six_agent_reference()));
        assert!(!has_spanning_tree(&DirectedGraph::new(2, &[]).unwrap()));
        let complete3 = DirectedGraph::new(
            3,
            &[(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)],
        )
        .unwrap();
        assert!(has_spanning_tree(&complete3));
        // Directed path 1 -> 2 -> 3 has a spanning tree rooted at 1.
        let path = DirectedGraph::new(3, &[(1, 2), (2, 3)]).unwrap();
        assert!(has_spanning_tree(&path));
        // Reversing one edge orphans agent 3.
        let broken = DirectedGraph::new(3, &[(1, 2), (3, 2)]).unwrap();
        assert!(!has_spanning_tree(&broken));
    }

    #[test]
    fn rejects_self_loops_and_out_of_range_indices() {
        assert!(DirectedGraph::new(3, &[(2, 2)]).is_err());
        assert!(DirectedGraph::new(3, &[(0, 1)]).is_err());
        assert!(DirectedGraph::new(3, &[(1, 4)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = six_agent_reference();
        let text = format_edge_list(&g);
        let back = parse_edge_list(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn edge_list_parser_diagnoses_malformed_input() {
        assert!(parse_edge_list("1 2\n").is_err()); // missing header
        assert!(parse_edge_list("agents x\n1 2\n").is_err());
        assert!(parse_edge_list("agents 3\n1 2 3\n").is_err());
        let ok = parse_edge_list("# cycle\nagents 2\n1 2 # forward\n2 1\n").unwrap();
        assert_eq!(ok.n_edges(), 2);
    }
}
