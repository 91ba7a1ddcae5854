use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::neural::{DenseMatrix, Mlp2, MlpCache};
use crate::scalar::Scalar;

use super::batch::{scatter_add, segment_min, segment_min_backward, Topology};

/// Latent node, edge and per-graph global vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGraphState<T> {
    pub nodes: DenseMatrix<T>,
    pub edges: DenseMatrix<T>,
    /// One row per graph in the batch.
    pub globals: DenseMatrix<T>,
}

impl<T: Scalar> LatentGraphState<T> {
    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            nodes: DenseMatrix::zeros(self.nodes.rows(), self.nodes.cols()),
            edges: DenseMatrix::zeros(self.edges.rows(), self.edges.cols()),
            globals: DenseMatrix::zeros(self.globals.rows(), self.globals.cols()),
        }
    }
}

/// One graph-network block: edge update, sum to nodes, node update, min to global,
/// global update. On undirected graphs the edge update averages both orientations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnLayer<T> {
    pub phi_e: Mlp2<T>,
    pub phi_v: Mlp2<T>,
    pub phi_g: Mlp2<T>,
}

pub(crate) struct LayerCache<T> {
    e: MlpCache<T>,
    v: MlpCache<T>,
    g: MlpCache<T>,
    arg_v: Vec<usize>,
    arg_e: Vec<usize>,
}

impl<T: Scalar> GnLayer<T> {
    pub fn init<R: Rng + ?Sized>(latent: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            phi_e: Mlp2::init(4 * latent, hidden, latent, rng),
            phi_v: Mlp2::init(3 * latent, hidden, latent, rng),
            phi_g: Mlp2::init(3 * latent, hidden, latent, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            phi_e: self.phi_e.zeros_like(),
            phi_v: self.phi_v.zeros_like(),
            phi_g: self.phi_g.zeros_like(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.phi_v.output_dim()
    }

    pub fn apply(&self, lat: &LatentGraphState<T>, topo: &Topology) -> Result<LatentGraphState<T>> {
        Ok(self.forward(lat, topo)?.0)
    }

    pub(crate) fn forward(
        &self,
        lat: &LatentGraphState<T>,
        topo: &Topology,
    ) -> Result<(LatentGraphState<T>, LayerCache<T>)> {
        let d = self.latent_dim();
        if lat.nodes.shape() != (topo.num_nodes, d)
            || lat.edges.shape() != (topo.num_edges(), d)
            || lat.globals.shape() != (topo.num_graphs, d)
        {
            return param_err("latent state shape does not match graph and layer width");
        }
        let n = topo.num_nodes;
        let m = topo.messages();
        let e_in = DenseMatrix::hcat(&[
            &lat.edges.gather_rows(&m.edge),
            &lat.nodes.gather_rows(&m.src),
            &lat.nodes.gather_rows(&m.dst),
            &lat.globals.gather_rows(&m.graph),
        ])?;
        let (e_raw, e_cache) = self.phi_e.forward(&e_in)?;
        let mut e_new = DenseMatrix::zeros(topo.num_edges(), d);
        scatter_add(&e_raw, &m.edge, topo.num_edges(), &mut e_new);
        if !topo.directed {
            e_new = e_new.map(|v| v * T::lit(0.5));
        }

        let mut agg = DenseMatrix::zeros(n, d);
        scatter_add(&e_new, &topo.receivers, n, &mut agg);
        if !topo.directed {
            scatter_add(&e_new, &topo.senders, n, &mut agg);
        }
        let v_in = DenseMatrix::hcat(&[&lat.nodes, &agg, &lat.globals.gather_rows(&topo.node_graph)])?;
        let (v_new, v_cache) = self.phi_v.forward(&v_in)?;

        let (v_bar, arg_v) = segment_min(&v_new, &topo.node_graph, topo.num_graphs);
        let (e_bar, arg_e) = segment_min(&e_new, &topo.edge_graph, topo.num_graphs);
        let g_in = DenseMatrix::hcat(&[&v_bar, &e_bar, &lat.globals])?;
        let (g_new, g_cache) = self.phi_g.forward(&g_in)?;

        Ok((
            LatentGraphState {
                nodes: v_new,
                edges: e_new,
                globals: g_new,
            },
            LayerCache {
                e: e_cache,
                v: v_cache,
                g: g_cache,
                arg_v,
                arg_e,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the layer input.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache<T>,
        topo: &Topology,
        d_out: &LatentGraphState<T>,
        grads: &mut GnLayer<T>,
    ) -> Result<LatentGraphState<T>> {
        let d = self.latent_dim();
        let n = topo.num_nodes;
        let mut d_in = d_out.zeros_like();
        let mut dv_new = d_out.nodes.clone();
        let mut de_new = d_out.edges.clone();

        let dg_in = self.phi_g.backward(&cache.g, &d_out.globals, &mut grads.phi_g)?;
        let parts = dg_in.hsplit(&[d, d, d])?;
        segment_min_backward(&parts[0], &cache.arg_v, &mut dv_new);
        segment_min_backward(&parts[1], &cache.arg_e, &mut de_new);
        d_in.globals.add_assign(&parts[2])?;

        let dv_in = self.phi_v.backward(&cache.v, &dv_new, &mut grads.phi_v)?;
        let parts = dv_in.hsplit(&[d, d, d])?;
        d_in.nodes.add_assign(&parts[0])?;
        let d_agg = &parts[1];
        de_new.add_assign(&d_agg.gather_rows(&topo.receivers))?;
        if !topo.directed {
            de_new.add_assign(&d_agg.gather_rows(&topo.senders))?;
        }
        scatter_add(&parts[2], &topo.node_graph, topo.num_graphs, &mut d_in.globals);

        let m = topo.messages();
        let mut de_raw = de_new.gather_rows(&m.edge);
        if !topo.directed {
            de_raw = de_raw.map(|v| v * T::lit(0.5));
        }
        let de_in = self.phi_e.backward(&cache.e, &de_raw, &mut grads.phi_e)?;
        let parts = de_in.hsplit(&[d, d, d, d])?;
        scatter_add(&parts[0], &m.edge, topo.num_edges(), &mut d_in.edges);
        scatter_add(&parts[1], &m.src, n, &mut d_in.nodes);
        scatter_add(&parts[2], &m.dst, n, &mut d_in.nodes);
        scatter_add(&parts[3], &m.graph, topo.num_graphs, &mut d_in.globals);
        Ok(d_in)
    }
}
