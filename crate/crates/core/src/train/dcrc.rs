//! Data-complexity / random-complexity counting over network descriptions.
//!
//! DC counts the distinct neurons lying on some directed path from a data
//! input to the output; RC counts the same from random inputs. A neuron may
//! count in both. Edges that carry generated parameters (a generator output
//! wired in as the weights of another unit) propagate influence like any
//! other edge by default; [`WeightEdges::Excluded`] stops traversal at them
//! for the alternative bookkeeping.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetNode {
    Data(usize),
    Random(usize),
    Neuron(usize),
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Signal,
    GeneratedParam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetEdge {
    pub from: NetNode,
    pub to: NetNode,
    pub kind: EdgeKind,
}

/// A small directed description of a network for complexity counting.
#[derive(Debug, Clone, Default)]
pub struct NetGraph {
    pub data_inputs: usize,
    pub random_inputs: usize,
    pub neurons: usize,
    pub edges: Vec<NetEdge>,
}

/// How generated-parameter edges participate in path counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightEdges {
    /// Any directed influence counts (default): a generated weight puts the
    /// consuming neuron on the random path.
    Influence,
    /// The random path ends at the emitted parameters: the generator's own
    /// neurons count as delivering to the output, the consumer does not join
    /// the random path.
    Excluded,
}

impl NetGraph {
    pub fn new(data_inputs: usize, random_inputs: usize, neurons: usize) -> Self {
        NetGraph {
            data_inputs,
            random_inputs,
            neurons,
            edges: Vec::new(),
        }
    }

    pub fn edge(&mut self, from: NetNode, to: NetNode) -> &mut Self {
        self.edges.push(NetEdge {
            from,
            to,
            kind: EdgeKind::Signal,
        });
        self
    }

    pub fn param_edge(&mut self, from: NetNode, to: NetNode) -> &mut Self {
        self.edges.push(NetEdge {
            from,
            to,
            kind: EdgeKind::GeneratedParam,
        });
        self
    }

    fn index(&self, node: NetNode) -> Result<usize> {
        match node {
            NetNode::Data(i) if i < self.data_inputs => Ok(i),
            NetNode::Random(i) if i < self.random_inputs => Ok(self.data_inputs + i),
            NetNode::Neuron(i) if i < self.neurons => {
                Ok(self.data_inputs + self.random_inputs + i)
            }
            NetNode::Output => Ok(self.data_inputs + self.random_inputs + self.neurons),
            other => Err(Error::domain(format!("node {other:?} out of range"))),
        }
    }

    fn node_count(&self) -> usize {
        self.data_inputs + self.random_inputs + self.neurons + 1
    }

    fn adjacency(&self, policy: WeightEdges) -> Result<Vec<Vec<usize>>> {
        let mut fwd = vec![Vec::new(); self.node_count()];
        let output = self.index(NetNode::Output)?;
        for e in &self.edges {
            let from = self.index(e.from)?;
            if policy == WeightEdges::Excluded && e.kind == EdgeKind::GeneratedParam {
                // parameters delivered: source reaches the output, but the
                // consumer is not pulled onto the path
                fwd[from].push(output);
                continue;
            }
            fwd[from].push(self.index(e.to)?);
        }
        Ok(fwd)
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.node_count();
        let fwd = self.adjacency(WeightEdges::Influence)?;
        let mut indegree = vec![0usize; n];
        for targets in &fwd {
            for &t in targets {
                indegree[t] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &t in &fwd[v] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push(t);
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            Err(Error::CyclicGraph)
        }
    }
}

fn reachable_from(starts: &[usize], adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = starts.to_vec();
    for &s in starts {
        seen[s] = true;
    }
    while let Some(v) = stack.pop() {
        for &t in &adj[v] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// `(DC, RC)` with the default influence policy.
pub fn dc_rc(graph: &NetGraph) -> Result<(usize, usize)> {
    dc_rc_with(graph, WeightEdges::Influence)
}

/// `(DC, RC)` under an explicit generated-parameter edge policy.
pub fn dc_rc_with(graph: &NetGraph, policy: WeightEdges) -> Result<(usize, usize)> {
    graph.check_acyclic()?;
    let fwd = graph.adjacency(policy)?;
    let n = graph.node_count();
    let mut rev = vec![Vec::new(); n];
    for (from, targets) in fwd.iter().enumerate() {
        for &t in targets {
            rev[t].push(from);
        }
    }

    let output_idx = graph.index(NetNode::Output)?;
    let reaches_output = reachable_from(&[output_idx], &rev);

    let data_starts: Vec<usize> = (0..graph.data_inputs)
        .map(|i| graph.index(NetNode::Data(i)))
        .collect::<Result<_>>()?;
    let random_starts: Vec<usize> = (0..graph.random_inputs)
        .map(|i| graph.index(NetNode::Random(i)))
        .collect::<Result<_>>()?;

    let count_on_paths = |starts: &[usize]| -> usize {
        if starts.is_empty() {
            return 0;
        }
        let from_input = reachable_from(starts, &fwd);
        (0..graph.neurons)
            .filter(|&i| {
                let idx = graph.data_inputs + graph.random_inputs + i;
                from_input[idx] && reaches_output[idx]
            })
            .count()
    };

    Ok((count_on_paths(&data_starts), count_on_paths(&random_starts)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The 2-neuron hat-shaped net: both neurons sit on data and random paths.
    #[test]
    fn two_neuron_hat_net() {
        let mut g = NetGraph::new(1, 2, 2);
        g.edge(NetNode::Data(0), NetNode::Neuron(0))
            .edge(NetNode::Random(0), NetNode::Neuron(0)) // u
            .edge(NetNode::Neuron(0), NetNode::Neuron(1))
            .edge(NetNode::Random(1), NetNode::Neuron(1)) // t
            .edge(NetNode::Neuron(1), NetNode::Output);
        assert_eq!(dc_rc(&g).unwrap(), (2, 2));
    }

    /// Pure generator: random -> 3 generator neurons -> params of a 1-neuron
    /// head that alone sees the data.
    #[test]
    fn pure_generator_counts() {
        let mut g = NetGraph::new(1, 1, 4); // neurons 0..2 generator, 3 head
        g.edge(NetNode::Random(0), NetNode::Neuron(0))
            .edge(NetNode::Neuron(0), NetNode::Neuron(1))
            .edge(NetNode::Neuron(1), NetNode::Neuron(2))
            .param_edge(NetNode::Neuron(2), NetNode::Neuron(3))
            .edge(NetNode::Data(0), NetNode::Neuron(3))
            .edge(NetNode::Neuron(3), NetNode::Output);
        assert_eq!(dc_rc(&g).unwrap(), (1, 4)); // RC = generator neurons + 1

        // alternative counting: the random path ends at the emitted weights
        assert_eq!(dc_rc_with(&g, WeightEdges::Excluded).unwrap(), (1, 3));
    }

    #[test]
    fn no_random_port_means_zero_rc() {
        let mut g = NetGraph::new(1, 0, 3);
        g.edge(NetNode::Data(0), NetNode::Neuron(0))
            .edge(NetNode::Neuron(0), NetNode::Neuron(1))
            .edge(NetNode::Neuron(1), NetNode::Neuron(2))
            .edge(NetNode::Neuron(2), NetNode::Output);
        assert_eq!(dc_rc(&g).unwrap(), (3, 0));
    }

    #[test]
    fn dead_neurons_do_not_count() {
        let mut g = NetGraph::new(1, 0, 3);
        // neuron 1 never reaches the output; neuron 2 unreachable from input
        g.edge(NetNode::Data(0), NetNode::Neuron(0))
            .edge(NetNode::Data(0), NetNode::Neuron(1))
            .edge(NetNode::Neuron(2), NetNode::Output)
            .edge(NetNode::Neuron(0), NetNode::Output);
        assert_eq!(dc_rc(&g).unwrap(), (1, 0));
    }

    #[test]
    fn cycles_rejected() {
        let mut g = NetGraph::new(1, 0, 2);
        g.edge(NetNode::Data(0), NetNode::Neuron(0))
            .edge(NetNode::Neuron(0), NetNode::Neuron(1))
            .edge(NetNode::Neuron(1), NetNode::Neuron(0))
            .edge(NetNode::Neuron(1), NetNode::Output);
        assert!(matches!(dc_rc(&g), Err(Error::CyclicGraph)));
    }

    #[test]
    fn single_input_class_covers_reachable_neurons() {
        // DC + RC >= total reachable neurons when all inputs are one kind.
        let mut g = NetGraph::new(2, 0, 4);
        g.edge(NetNode::Data(0), NetNode::Neuron(0))
            .edge(NetNode::Data(1), NetNode::Neuron(1))
            .edge(NetNode::Neuron(0), NetNode::Neuron(2))
            .edge(NetNode::Neuron(1), NetNode::Neuron(2))
            .edge(NetNode::Neuron(2), NetNode::Neuron(3))
            .edge(NetNode::Neuron(3), NetNode::Output);
        let (dc, rc) = dc_rc(&g).unwrap();
        assert!(dc + rc >= 4);
    }
}
