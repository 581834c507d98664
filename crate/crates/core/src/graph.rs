//! Heterogeneous graph representation of one network realization: typed
//! nodes (BS, UE), typed directed edges (desired, interfering) and raw
//! real-valued features with complex values interleaved as `(re, im)`.

use crate::channel::{ChannelSample, Scenario};
use crate::linalg::interleave;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Desired,
    Interfering,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsNode {
    /// `[P_k]`
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeNode {
    /// `[sigma^2, re/im-interleaved sub-6GHz channel]`
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub bs: usize,
    pub ue: usize,
    pub kind: EdgeKind,
    /// re/im-interleaved partial mmWave channel.
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub bs_nodes: Vec<BsNode>,
    pub ue_nodes: Vec<UeNode>,
    /// Complete bipartite, ordered by ascending `(bs, ue)`.
    pub edges: Vec<Edge>,
    /// Serving BS per UE.
    pub serving: Vec<usize>,
}

/// Node type selector for neighborhood queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeType {
    Bs,
    Ue,
}

/// Node handle for neighborhood queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Bs(usize),
    Ue(usize),
}

/// Builds the heterogeneous graph of one sample.
pub fn build_graph(sample: &ChannelSample, scenario: &Scenario) -> Result<HeteroGraph> {
    let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
    if sample.sub6.dim() != (i_sum, scenario.n_sub)
        || sample.mm_partial.dim() != (i_sum, k, scenario.n_bar)
    {
        return Err(Error::Dimension(format!(
            "sample dims {:?}/{:?} do not match scenario ({} UEs, {} BSs, n_sub {}, n_bar {})",
            sample.sub6.dim(),
            sample.mm_partial.dim(),
            i_sum,
            k,
            scenario.n_sub,
            scenario.n_bar
        )));
    }
    let bs_nodes = (0..k).map(|b| BsNode { feature: vec![scenario.power[b]] }).collect();
    let mut ue_nodes = Vec::with_capacity(i_sum);
    for u in 0..i_sum {
        let mut feature = Vec::with_capacity(1 + 2 * scenario.n_sub);
        feature.push(scenario.noise);
        feature.extend(interleave(&sample.sub(u)));
        ue_nodes.push(UeNode { feature });
    }
    let serving: Vec<usize> = (0..i_sum).map(|u| scenario.serving(u)).collect();
    let mut edges = Vec::with_capacity(k * i_sum);
    for b in 0..k {
        for u in 0..i_sum {
            let kind = if serving[u] == b { EdgeKind::Desired } else { EdgeKind::Interfering };
            edges.push(Edge { bs: b, ue: u, kind, feature: interleave(&sample.mm_bar(u, b)) });
        }
    }
    Ok(HeteroGraph { bs_nodes, ue_nodes, edges, serving })
}

impl HeteroGraph {
    pub fn n_bs(&self) -> usize {
        self.bs_nodes.len()
    }

    pub fn n_ue(&self) -> usize {
        self.ue_nodes.len()
    }

    /// Edge from BS `b` to UE `u` (complete bipartite, fixed order).
    pub fn edge(&self, b: usize, u: usize) -> &Edge {
        &self.edges[b * self.n_ue() + u]
    }

    /// The neighborhood subset `N_{t,w}(v)`: neighbors of `node` with node
    /// type `t` connected through edges of kind `w`, in ascending neighbor
    /// index order, paired with the connecting edge feature.
    pub fn neighbors(&self, node: Node, t: NodeType, w: EdgeKind) -> Result<Vec<(usize, &[f64])>> {
        match (node, t) {
            (Node::Bs(b), NodeType::Ue) => {
                if b >= self.n_bs() {
                    return Err(Error::Lookup(format!("BS {b} not in graph")));
                }
                Ok((0..self.n_ue())
                    .filter(|&u| (self.serving[u] == b) == (w == EdgeKind::Desired))
                    .map(|u| (u, self.edge(b, u).feature.as_slice()))
                    .collect())
            }
            (Node::Ue(u), NodeType::Bs) => {
                if u >= self.n_ue() {
                    return Err(Error::Lookup(format!("UE {u} not in graph")));
                }
                Ok((0..self.n_bs())
                    .filter(|&b| (self.serving[u] == b) == (w == EdgeKind::Desired))
                    .map(|b| (b, self.edge(b, u).feature.as_slice()))
                    .collect())
            }
            // BS-BS and UE-UE pairs have no edges in this graph
            _ => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_sample, Scenario, Split, Structure};

    fn scenario(ues: Vec<usize>) -> Scenario {
        let k = ues.len();
        Scenario {
            ues_per_bs: ues,
            n_mm: 8,
            n_sub: 4,
            n_bar: 2,
            n_paths: 2,
            power: vec![1.5; k],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed: 3,
            structure: Structure::Fully,
        }
    }

    #[test]
    fn single_link_graph() {
        let sc = scenario(vec![1]);
        let s = gen_sample(&sc, Split::Train, 0);
        let g = build_graph(&s, &sc).unwrap();
        assert_eq!(g.n_bs(), 1);
        assert_eq!(g.n_ue(), 1);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Desired);
    }

    #[test]
    fn complete_bipartite_counts() {
        let sc = scenario(vec![2, 2]);
        let s = gen_sample(&sc, Split::Train, 0);
        let g = build_graph(&s, &sc).unwrap();
        assert_eq!(g.n_bs(), 2);
        assert_eq!(g.n_ue(), 4);
        assert_eq!(g.edges.len(), 8);
        let desired = g.edges.iter().filter(|e| e.kind == EdgeKind::Desired).count();
        assert_eq!(desired, 4);
        assert_eq!(g.edges.len() - desired, 4);
    }

    #[test]
    fn features_copied_from_scenario() {
        let sc = scenario(vec![2, 1]);
        let s = gen_sample(&sc, Split::Train, 1);
        let g = build_graph(&s, &sc).unwrap();
        for b in 0..2 {
            assert_eq!(g.bs_nodes[b].feature, vec![sc.power[b]]);
        }
        for u in 0..3 {
            assert_eq!(g.ue_nodes[u].feature.len(), 1 + 2 * sc.n_sub);
            assert_eq!(g.ue_nodes[u].feature[0], sc.noise);
        }
        for e in &g.edges {
            assert_eq!(e.feature.len(), 2 * sc.n_bar);
        }
    }

    #[test]
    fn neighbor_counts_invariant() {
        let sc = scenario(vec![2, 3]);
        let s = gen_sample(&sc, Split::Test, 0);
        let g = build_graph(&s, &sc).unwrap();
        let i_sum = 5;
        for b in 0..2 {
            let d = g.neighbors(Node::Bs(b), NodeType::Ue, EdgeKind::Desired).unwrap();
            let i = g.neighbors(Node::Bs(b), NodeType::Ue, EdgeKind::Interfering).unwrap();
            assert_eq!(d.len(), sc.ues_per_bs[b]);
            assert_eq!(i.len(), i_sum - sc.ues_per_bs[b]);
        }
        for u in 0..i_sum {
            let d = g.neighbors(Node::Ue(u), NodeType::Bs, EdgeKind::Desired).unwrap();
            let i = g.neighbors(Node::Ue(u), NodeType::Bs, EdgeKind::Interfering).unwrap();
            assert_eq!(d.len(), 1);
            assert_eq!(d[0].0, sc.serving(u));
            assert_eq!(i.len(), 1);
        }
        assert!(g.neighbors(Node::Ue(99), NodeType::Bs, EdgeKind::Desired).is_err());
    }

    #[test]
    fn build_is_pure() {
        let sc = scenario(vec![2, 2]);
        let s = gen_sample(&sc, Split::Train, 7);
        let a = build_graph(&s, &sc).unwrap();
        let b = build_graph(&s, &sc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let sc = scenario(vec![2, 2]);
        let other = scenario(vec![1, 1]);
        let s = gen_sample(&other, Split::Train, 0);
        assert!(build_graph(&s, &sc).is_err());
    }
}
