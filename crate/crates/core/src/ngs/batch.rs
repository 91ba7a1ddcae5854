use crate::error::{param_err, Result};
use crate::graph::Graph;
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;

/// Everything one network step consumes for a single graph.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a, T> {
    /// Encoded state `S(t_m)`, one row per node.
    pub state: &'a DenseMatrix<T>,
    pub node_coeffs: &'a DenseMatrix<T>,
    pub edge_coeffs: &'a DenseMatrix<T>,
    pub global_coeffs: &'a [T],
    pub dt: T,
    pub graph: &'a Graph,
}

/// Connectivity of one or more graphs stacked block-diagonally.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub num_nodes: usize,
    pub num_graphs: usize,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    pub node_graph: Vec<usize>,
    pub edge_graph: Vec<usize>,
    /// Directed edges deliver their update to the receiver only.
    pub directed: bool,
}

impl Topology {
    pub fn from_graph(g: &Graph) -> Self {
        Self::stack(&[g]).expect("single graph")
    }

    pub fn stack(graphs: &[&Graph]) -> Result<Self> {
        let directed = graphs.first().is_some_and(|g| g.is_directed());
        if graphs.iter().any(|g| g.is_directed() != directed) {
            return param_err("cannot batch directed and undirected graphs together");
        }
        let mut t = Self {
            num_nodes: 0,
            num_graphs: graphs.len(),
            senders: Vec::new(),
            receivers: Vec::new(),
            node_graph: Vec::new(),
            edge_graph: Vec::new(),
            directed,
        };
        for (k, g) in graphs.iter().enumerate() {
            let off = t.num_nodes;
            for &(i, j) in g.edges() {
                t.senders.push(off + i);
                t.receivers.push(off + j);
                t.edge_graph.push(k);
            }
            t.node_graph.extend(std::iter::repeat_n(k, g.num_nodes()));
            t.num_nodes += g.num_nodes();
        }
        Ok(t)
    }

    pub fn num_edges(&self) -> usize {
        self.senders.len()
    }

    /// Edge-model evaluations: one per directed edge, two per undirected edge.
    pub(crate) fn messages(&self) -> Messages {
        let e = self.num_edges();
        if self.directed {
            return Messages {
                src: self.senders.clone(),
                dst: self.receivers.clone(),
                edge: (0..e).collect(),
                graph: self.edge_graph.clone(),
            };
        }
        Messages {
            src: [&self.senders[..], &self.receivers[..]].concat(),
            dst: [&self.receivers[..], &self.senders[..]].concat(),
            edge: (0..e).chain(0..e).collect(),
            graph: [&self.edge_graph[..], &self.edge_graph[..]].concat(),
        }
    }
}

pub(crate) struct Messages {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge: Vec<usize>,
    pub graph: Vec<usize>,
}

/// Raw (pre-encoder) features of a batch of graphs.
#[derive(Clone, Debug)]
pub struct GraphBatch<T> {
    pub topology: Topology,
    /// `[s_i | v_i]` per node.
    pub node_feats: DenseMatrix<T>,
    pub edge_feats: DenseMatrix<T>,
    /// `[g | dt]` per graph.
    pub global_feats: DenseMatrix<T>,
    /// Encoded states, stacked.
    pub states: DenseMatrix<T>,
    /// First node row of every graph, plus the total at the end.
    pub node_offsets: Vec<usize>,
}

impl<T: Scalar> GraphBatch<T> {
    pub fn from_inputs(inputs: &[StepInput<'_, T>]) -> Result<Self> {
        if inputs.is_empty() {
            return param_err("empty batch");
        }
        let graphs: Vec<&Graph> = inputs.iter().map(|i| i.graph).collect();
        let topology = Topology::stack(&graphs)?;
        let mut node_parts = Vec::with_capacity(inputs.len());
        let mut states = Vec::with_capacity(inputs.len());
        let mut edges = Vec::with_capacity(inputs.len());
        let mut node_offsets = vec![0];
        let gw = inputs[0].global_coeffs.len() + 1;
        let mut globals = Vec::with_capacity(inputs.len() * gw);
        for inp in inputs {
            let n = inp.graph.num_nodes();
            if inp.state.rows() != n || inp.node_coeffs.rows() != n {
                return param_err(format!(
                    "state/node coefficient rows ({}, {}) do not match {n} nodes",
                    inp.state.rows(),
                    inp.node_coeffs.rows()
                ));
            }
            if inp.edge_coeffs.rows() != inp.graph.num_edges() {
                return param_err(format!(
                    "{} edge coefficient rows for {} edges",
                    inp.edge_coeffs.rows(),
                    inp.graph.num_edges()
                ));
            }
            if !(inp.dt > T::zero()) {
                return param_err("time step must be positive");
            }
            if inp.global_coeffs.len() + 1 != gw {
                return param_err("global coefficient widths differ within the batch");
            }
            node_parts.push(DenseMatrix::hcat(&[inp.state, inp.node_coeffs])?);
            states.push(inp.state);
            edges.push(inp.edge_coeffs);
            globals.extend_from_slice(inp.global_coeffs);
            globals.push(inp.dt);
            node_offsets.push(node_offsets.last().unwrap() + n);
        }
        let node_refs: Vec<&DenseMatrix<T>> = node_parts.iter().collect();
        Ok(Self {
            topology,
            node_feats: DenseMatrix::vcat(&node_refs)?,
            edge_feats: DenseMatrix::vcat(&edges)?,
            global_feats: DenseMatrix::new(inputs.len(), gw, globals)?,
            states: DenseMatrix::vcat(&states)?,
            node_offsets,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.topology.num_graphs
    }
}

/// Sum of `src` rows into `n` buckets given by `idx`.
pub(crate) fn scatter_add<T: Scalar>(src: &DenseMatrix<T>, idx: &[usize], n: usize, out: &mut DenseMatrix<T>) {
    debug_assert_eq!(out.rows(), n);
    for (r, &k) in idx.iter().enumerate() {
        let row = src.row(r);
        for (o, &v) in out.row_mut(k).iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Per-segment elementwise minimum; empty segments give zero. Also returns the
/// winning row per (segment, channel), `usize::MAX` when empty.
pub(crate) fn segment_min<T: Scalar>(
    x: &DenseMatrix<T>,
    seg: &[usize],
    num_segments: usize,
) -> (DenseMatrix<T>, Vec<usize>) {
    let c = x.cols();
    let mut out = DenseMatrix::zeros(num_segments, c);
    let mut arg = vec![usize::MAX; num_segments * c];
    for (r, &s) in seg.iter().enumerate() {
        let row = x.row(r);
        for ch in 0..c {
            let a = &mut arg[s * c + ch];
            if *a == usize::MAX || row[ch] < x.get(*a, ch) {
                *a = r;
            }
        }
    }
    for s in 0..num_segments {
        for ch in 0..c {
            let a = arg[s * c + ch];
            if a != usize::MAX {
                out.set(s, ch, x.get(a, ch));
            }
        }
    }
    (out, arg)
}

pub(crate) fn segment_min_backward<T: Scalar>(dout: &DenseMatrix<T>, arg: &[usize], dx: &mut DenseMatrix<T>) {
    let c = dout.cols();
    for s in 0..dout.rows() {
        for ch in 0..c {
            let a = arg[s * c + ch];
            if a != usize::MAX {
                let v = dx.get(a, ch) + dout.get(s, ch);
                dx.set(a, ch, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacking_offsets() {
        let a = Graph::path(3);
        let b = Graph::complete(3);
        let t = Topology::stack(&[&a, &b]).unwrap();
        assert_eq!(t.num_nodes, 6);
        assert_eq!(t.senders, vec![0, 1, 3, 3, 4]);
        assert_eq!(t.receivers, vec![1, 2, 4, 5, 5]);
        assert_eq!(t.edge_graph, vec![0, 0, 1, 1, 1]);
        assert_eq!(t.node_graph, vec![0, 0, 0, 1, 1, 1]);
        let d = Graph::new(2, vec![(0, 1)], true).unwrap();
        assert!(Topology::stack(&[&a, &d]).is_err());
    }

    #[test]
    fn min_and_its_gradient() {
        let x = DenseMatrix::new(4, 2, vec![3.0, -1.0, 2.0, 5.0, 7.0, 0.0, -4.0, 1.0]).unwrap();
        let (m, arg) = segment_min(&x, &[0, 0, 1, 1], 3);
        assert_eq!(m.data(), &[2.0, -1.0, -4.0, 0.0, 0.0, 0.0]);
        let mut dx = DenseMatrix::zeros(4, 2);
        segment_min_backward(&DenseMatrix::from_fn(3, 2, |_, _| 1.0), &arg, &mut dx);
        assert_eq!(dx.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    }
}
