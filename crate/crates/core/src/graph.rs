//! Graph representation, ingestion, random generation and the matrices
//! derived from adjacency (connectivity patterns, normalized Laplacian,
//! multi-hop powers), plus sampling plans and synthetic signals.
//!
//! Adjacency convention: an edge `src -> dst` with weight `w` sets
//! `adjacency[(src, dst)] = w`. The column of node `n` therefore lists its
//! in-links and the row its out-links. Undirected graphs store both
//! orientations and are exactly symmetric.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{check_len, invalid, Error, Result};
use crate::seed;

/// Token <-> dense index map for graphs read from files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeNames {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeNames {
    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.names.len();
        self.names.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    directed: bool,
    names: Option<NodeNames>,
}

/// Which slice of the adjacency represents a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatternMode {
    #[default]
    Column,
    Row,
    /// Column followed by row; length `2N`.
    Concat,
}

/// A node's connectivity pattern, used as its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityPattern {
    pub vector: Vec<f64>,
    pub source_mode: PatternMode,
}

impl Graph {
    /// Wrap a dense adjacency matrix, validating the graph invariants.
    pub fn from_adjacency(adjacency: DMatrix<f64>, directed: bool) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(Error::DimensionMismatch {
                expected: adjacency.nrows(),
                got: adjacency.ncols(),
            });
        }
        if adjacency.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if adjacency.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("adjacency", "entries must be finite and non-negative"));
        }
        if !directed && adjacency != adjacency.transpose() {
            return Err(invalid("adjacency", "undirected graph must be symmetric"));
        }
        Ok(Graph {
            adjacency,
            directed,
            names: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn names(&self) -> Option<&NodeNames> {
        self.names.as_ref()
    }

    /// Number of edges; undirected edges are counted once.
    pub fn n_edges(&self) -> usize {
        let n = self.n_nodes();
        let mut count = 0;
        for j in 0..n {
            for i in 0..n {
                if self.adjacency[(i, j)] != 0.0 && (self.directed || i <= j) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Weighted degrees `A·1` (out-degree for directed graphs).
    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_iter().map(|r| r.sum()).collect()
    }

    /// Indices `k` with a nonzero entry in column `node`, i.e. nodes linking
    /// into `node`.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.adjacency
            .column(node)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn max_neighbor_count(&self) -> usize {
        (0..self.n_nodes())
            .map(|n| self.neighbors(n).len())
            .max()
            .unwrap_or(0)
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node < self.n_nodes() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: node,
                len: self.n_nodes(),
            })
        }
    }

    /// The connectivity pattern of `node` in the requested mode.
    pub fn connectivity_pattern(&self, node: usize, mode: PatternMode) -> Result<ConnectivityPattern> {
        self.check_node(node)?;
        let column = || self.adjacency.column(node).iter().copied().collect::<Vec<_>>();
        let row = || self.adjacency.row(node).iter().copied().collect::<Vec<_>>();
        let vector = match mode {
            PatternMode::Column => column(),
            PatternMode::Row => row(),
            PatternMode::Concat => {
                let mut v = column();
                v.extend(row());
                v
            }
        };
        Ok(ConnectivityPattern {
            vector,
            source_mode: mode,
        })
    }

    /// Column pattern of `node` restricted to the coordinates in `keep`.
    pub fn restricted_pattern(&self, node: usize, keep: &[usize]) -> Result<Vec<f64>> {
        self.check_node(node)?;
        keep.iter()
            .map(|&k| {
                self.check_node(k)?;
                Ok(self.adjacency[(k, node)])
            })
            .collect()
    }

    /// Graph with one extra node attached through `links` (length N, the
    /// weights to existing nodes). Undirected graphs receive mirrored links.
    pub fn with_new_node(&self, links: &[f64]) -> Result<Graph> {
        let n = self.n_nodes();
        check_len(n, links.len())?;
        let mut a = self.adjacency.clone().resize(n + 1, n + 1, 0.0);
        for (k, &w) in links.iter().enumerate() {
            a[(k, n)] = w;
            if !self.directed {
                a[(n, k)] = w;
            }
        }
        Graph::from_adjacency(a, self.directed)
    }

    /// Normalized Laplacian `I - D^{-1/2} A D^{-1/2}`. Degree-zero nodes get
    /// an identity row and column.
    pub fn normalized_laplacian(&self) -> Result<DMatrix<f64>> {
        if self.directed {
            return Err(Error::DirectedGraph);
        }
        let n = self.n_nodes();
        let inv_sqrt: Vec<f64> = self
            .degrees()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 };
                l[(i, j)] = delta - inv_sqrt[i] * self.adjacency[(i, j)] * inv_sqrt[j];
            }
        }
        for i in 0..n {
            if inv_sqrt[i] == 0.0 {
                for k in 0..n {
                    l[(i, k)] = 0.0;
                    l[(k, i)] = 0.0;
                }
                l[(i, i)] = 1.0;
            }
        }
        Ok(l)
    }

    /// `A^hops` by repeated multiplication.
    pub fn power_adjacency(&self, hops: usize) -> Result<DMatrix<f64>> {
        if hops == 0 {
            return Err(invalid("hops", "must be at least 1"));
        }
        let mut p = self.adjacency.clone();
        for _ in 1..hops {
            p = &p * &self.adjacency;
        }
        Ok(p)
    }
}

/// Parse a whitespace separated edge list: `src dst [weight]` per line,
/// `#` comments, arbitrary node tokens mapped to indices in first-seen
/// order. Duplicate edges keep the last weight. When `weighted` is false the
/// weight column, if present, is validated but every edge gets weight 1.
pub fn load_edge_list(text: &str, directed: bool, weighted: bool) -> Result<Graph> {
    let mut names = NodeNames::default();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        if tokens.len() != 2 && tokens.len() != 3 {
            return Err(parse_err("expected `src dst [weight]`"));
        }
        let w = match tokens.get(2) {
            Some(tok) => {
                let w: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(&format!("unparseable weight `{tok}`")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(parse_err("weight must be finite and non-negative"));
                }
                if weighted {
                    w
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let s = names.intern(tokens[0]);
        let d = names.intern(tokens[1]);
        edges.push((s, d, w));
    }
    if names.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = names.len();
    let mut a = DMatrix::zeros(n, n);
    for (s, d, w) in edges {
        a[(s, d)] = w;
        if !directed {
            a[(d, s)] = w;
        }
    }
    let mut g = Graph::from_adjacency(a, directed)?;
    g.names = Some(names);
    Ok(g)
}

/// Per-node labels read from `node value [value ...]` lines. Each value
/// column is one signal over the graph; nodes missing from the file are
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub columns: Vec<Vec<Option<f64>>>,
}

pub fn load_labels(text: &str, g: &Graph) -> Result<LabelTable> {
    let n = g.n_nodes();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        let mut tokens = line.split_whitespace();
        let node_tok = tokens.next().unwrap_or_default();
        let values: Vec<f64> = tokens
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("unparseable value `{t}`"))))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(parse_err("expected `node value`".into()));
        }
        if columns.is_empty() {
            columns = vec![vec![None; n]; values.len()];
        } else if values.len() != columns.len() {
            return Err(parse_err(format!(
                "expected {} values, found {}",
                columns.len(),
                values.len()
            )));
        }
        let node = match g.names() {
            Some(names) => names.index_of(node_tok),
            None => node_tok.parse::<usize>().ok().filter(|&i| i < n),
        }
        .ok_or_else(|| parse_err(format!("unknown node `{node_tok}`")))?;
        for (col, v) in columns.iter_mut().zip(values) {
            if !v.is_finite() {
                return Err(parse_err("label must be finite".into()));
            }
            col[node] = Some(v);
        }
    }
    if columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(LabelTable { columns })
}

/// Erdős–Rényi graph: every ordered pair `(i, j)`, `i != j`, draws an edge
/// with probability `edge_prob`; the result is symmetrized as `A0 + A0^T`
/// and clamped to `{0, 1}`, so an undirected edge is present with
/// probability `1 - (1 - edge_prob)^2`.
pub fn erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(invalid("edge_prob", format!("{edge_prob} not in [0, 1]")));
    }
    let mut rng = seed::rng(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(edge_prob) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Graph::from_adjacency(a, false)
}

/// Scale a pattern to unit Euclidean norm; zero patterns are left as is.
pub fn unit_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Ordered training nodes and their complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    pub sampled: Vec<usize>,
    pub unsampled: Vec<usize>,
}

impl SamplingPlan {
    /// Uniform random `m`-subset of `0..n` in uniformly random order; the
    /// unsampled nodes keep the remaining shuffled order.
    pub fn random(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(invalid("m", format!("need 1 <= m <= {n}, got {m}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed));
        let unsampled = order.split_off(m);
        Ok(SamplingPlan {
            sampled: order,
            unsampled,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.sampled.len() + self.unsampled.len()
    }

    /// `Ψ x`: the values at the sampled nodes, in sampling order.
    pub fn select(&self, values: &[f64]) -> Vec<f64> {
        self.sampled.iter().map(|&i| values[i]).collect()
    }

    /// `Ψ^T y` as a partial signal: sampled entries set, the rest `None`.
    pub fn scatter(&self, y: &[f64]) -> Result<Vec<Option<f64>>> {
        check_len(self.sampled.len(), y.len())?;
        let mut out = vec![None; self.n_nodes()];
        for (&i, &v) in self.sampled.iter().zip(y) {
            out[i] = Some(v);
        }
        Ok(out)
    }
}

pub fn sample_nodes(g: &Graph, m: usize, seed: u64) -> Result<SamplingPlan> {
    SamplingPlan::random(g.n_nodes(), m, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    pub values: Vec<f64>,
    pub noise_var: f64,
}

/// `x = K α + e` with `α_i ~ U[0.5, 1]` and `e_i ~ N(0, noise_var)`.
pub fn synth_signal(
    g: &Graph,
    kernel_matrix: &DMatrix<f64>,
    noise_var: f64,
    seed: u64,
) -> Result<GraphSignal> {
    let n = g.n_nodes();
    check_len(n, kernel_matrix.nrows())?;
    check_len(n, kernel_matrix.ncols())?;
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(invalid("noise_var", "must be finite and non-negative"));
    }
    let mut rng = seed::rng(seed);
    let coef = Uniform::new_inclusive(0.5, 1.0).expect("valid range");
    let alpha = nalgebra::DVector::from_iterator(n, (0..n).map(|_| coef.sample(&mut rng)));
    let mut x = kernel_matrix * alpha;
    if noise_var > 0.0 {
        let noise = Normal::new(0.0, noise_var.sqrt()).expect("valid std");
        x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("synth_signal"));
    }
    Ok(GraphSignal {
        values: x.iter().copied().collect(),
        noise_var,
    })
}
