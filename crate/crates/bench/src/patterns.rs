//! Connectivity patterns as seen by the pattern-based methods, depending on
//! which nodes have already joined the network.

use gradraker::graph::unit_normalize;
use gradraker::Graph;

use crate::config::PatternScope;

pub struct PatternView<'a> {
    graph: &'a Graph,
    scope: PatternScope,
    normalize: bool,
    /// Coordinates kept under `PatternScope::Sampled`.
    coords: Vec<usize>,
    visible: Vec<bool>,
}

impl<'a> PatternView<'a> {
    /// `sampled` is the training set; `background` lists nodes that are part
    /// of the network from the start without being labelled.
    pub fn new(graph: &'a Graph, scope: PatternScope, normalize: bool, sampled: &[usize], background: &[usize]) -> Self {
        let mut visible = vec![false; graph.n_nodes()];
        for &i in sampled.iter().chain(background) {
            visible[i] = true;
        }
        PatternView {
            graph,
            scope,
            normalize,
            coords: sampled.to_vec(),
            visible,
        }
    }

    /// Length of the patterns this view produces.
    pub fn dim(&self) -> usize {
        match self.scope {
            PatternScope::Sampled => self.coords.len(),
            PatternScope::Progressive | PatternScope::Full => self.graph.n_nodes(),
        }
    }

    /// Links of `node` to the nodes currently visible to it.
    pub fn links(&self, node: usize) -> Vec<f64> {
        let a = self.graph.adjacency();
        match self.scope {
            PatternScope::Full => a.column(node).iter().copied().collect(),
            PatternScope::Progressive | PatternScope::Sampled => (0..self.graph.n_nodes())
                .map(|k| if self.visible[k] { a[(k, node)] } else { 0.0 })
                .collect(),
        }
    }

    pub fn pattern(&self, node: usize) -> Vec<f64> {
        let a = self.graph.adjacency();
        let mut v = match self.scope {
            PatternScope::Sampled => self.coords.iter().map(|&k| a[(k, node)]).collect(),
            PatternScope::Progressive | PatternScope::Full => self.links(node),
        };
        if self.normalize {
            unit_normalize(&mut v);
        }
        v
    }

    /// Mark `node` as joined; later arrivals may link to it.
    pub fn reveal(&mut self, node: usize) {
        self.visible[node] = true;
    }

    /// Patterns for `sampled` followed by the arrivals in order.
    pub fn stream(&mut self, sampled: &[usize], arrivals: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let train = sampled.iter().map(|&i| self.pattern(i)).collect();
        let new = arrivals
            .iter()
            .map(|&i| {
                let p = self.pattern(i);
                self.reveal(i);
                p
            })
            .collect();
        (train, new)
    }
}
