use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::log_add;

use super::model::HmmModel;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Emitting state `state` of unit instance `segment`.
    Emitting {
        unit: u32,
        state: u16,
        output: u32,
        segment: u32,
    },
    Junction,
}

/// One unit instance placed in the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub unit: u32,
    /// Position of the owning word in the transcription, `None` for silence.
    pub word: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub from: NodeId,
    pub to: NodeId,
    pub logp: f64,
}

/// Incrementally assembled state graph.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeKind>,
    arcs: Vec<Arc>,
    segments: Vec<Segment>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn junction(&mut self) -> NodeId {
        self.nodes.push(NodeKind::Junction);
        (self.nodes.len() - 1) as NodeId
    }

    pub fn arc(&mut self, from: NodeId, to: NodeId, logp: f64) {
        self.arcs.push(Arc { from, to, logp });
    }

    /// Place one instance of `unit`; returns its (entry, exit) junctions.
    pub fn unit(&mut self, model: &HmmModel, unit: usize, word: Option<u32>) -> (NodeId, NodeId) {
        self.scaled_unit(model, unit, word, 1.0)
    }

    /// As [`GraphBuilder::unit`] with every transition log-probability multiplied by `scale`.
    pub fn scaled_unit(
        &mut self,
        model: &HmmModel,
        unit: usize,
        word: Option<u32>,
        scale: f64,
    ) -> (NodeId, NodeId) {
        let u = model.unit(unit);
        let segment = self.segments.len() as u32;
        self.segments.push(Segment {
            unit: unit as u32,
            word,
        });
        let entry = self.junction();
        let first = self.nodes.len() as NodeId;
        for s in 0..u.n_states() {
            self.nodes.push(NodeKind::Emitting {
                unit: unit as u32,
                state: s as u16,
                output: model.tied(unit, s),
                segment,
            });
        }
        let exit = self.junction();
        self.arc(entry, first, scale * u.entry().ln());
        if u.has_tee() {
            self.arc(entry, exit, scale * u.tee().ln());
        }
        for s in 0..u.n_states() {
            let id = first + s as NodeId;
            if u.self_loop(s) > 0.0 {
                self.arc(id, id, scale * u.self_loop(s).ln());
            }
            let next = if s + 1 == u.n_states() { exit } else { id + 1 };
            self.arc(id, next, scale * u.advance(s).ln());
        }
        (entry, exit)
    }

    pub fn build(self, start: NodeId, end: NodeId) -> Result<CompositeGraph> {
        CompositeGraph::compile(self, start, end)
    }
}

/// Weight of a compiled emitting-to-emitting connection: log-sum over the
/// junction paths for the forward pass, and the best one for Viterbi.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub to: u32,
    pub sum: f64,
    pub max: f64,
}

/// A state graph whose junction paths are folded into emitting-state links.
#[derive(Clone, Debug)]
pub struct CompositeGraph {
    nodes: Vec<NodeKind>,
    arcs: Vec<Arc>,
    segments: Vec<Segment>,
    start: NodeId,
    end: NodeId,
    emitting: Vec<NodeId>,
    outputs: Vec<u32>,
    enter: Vec<Link>,
    succ: Vec<Vec<Link>>,
    pred: Vec<Vec<Link>>,
    leave: Vec<(f64, f64)>,
    self_loop: Vec<f64>,
}

impl CompositeGraph {
    fn compile(b: GraphBuilder, start: NodeId, end: NodeId) -> Result<Self> {
        let GraphBuilder {
            nodes,
            arcs,
            segments,
        } = b;
        let n = nodes.len();
        for &id in &[start, end] {
            if nodes.get(id as usize) != Some(&NodeKind::Junction) {
                return Err(Error::Validation("start and end must be junctions".into()));
            }
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, a) in arcs.iter().enumerate() {
            if a.from as usize >= n || a.to as usize >= n {
                return Err(Error::Validation(format!("arc {i} references a missing node")));
            }
            if a.logp > 1e-12 || a.logp.is_nan() {
                return Err(Error::Validation(format!("arc {i} has log-probability {}", a.logp)));
            }
            out[a.from as usize].push(i);
        }
        let is_j = |id: usize| nodes[id] == NodeKind::Junction;

        // topological order of the junction-only subgraph
        let mut indeg = vec![0usize; n];
        for a in &arcs {
            if is_j(a.from as usize) && is_j(a.to as usize) {
                indeg[a.to as usize] += 1;
            }
        }
        let mut order = Vec::new();
        let mut stack: Vec<usize> = (0..n).filter(|&i| is_j(i) && indeg[i] == 0).collect();
        while let Some(j) = stack.pop() {
            order.push(j);
            for &ai in &out[j] {
                let t = arcs[ai].to as usize;
                if is_j(t) {
                    indeg[t] -= 1;
                    if indeg[t] == 0 {
                        stack.push(t);
                    }
                }
            }
        }
        let n_junctions = (0..n).filter(|&i| is_j(i)).count();
        if order.len() != n_junctions {
            return Err(Error::Validation("graph has a cycle through junctions only".into()));
        }
        let mut rank = vec![usize::MAX; n];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r;
        }

        let emitting: Vec<NodeId> = (0..n).filter(|&i| !is_j(i)).map(|i| i as NodeId).collect();
        let mut eidx = vec![u32::MAX; n];
        for (e, &id) in emitting.iter().enumerate() {
            eidx[id as usize] = e as u32;
        }
        let outputs = emitting
            .iter()
            .map(|&id| match nodes[id as usize] {
                NodeKind::Emitting { output, .. } => output,
                NodeKind::Junction => unreachable!(),
            })
            .collect();

        // closure from one node's outgoing arcs through junctions
        let closure = |from: usize| -> (Vec<Link>, Option<(f64, f64)>, f64) {
            let mut direct: HashMap<u32, (f64, f64)> = HashMap::new();
            let mut self_loop = f64::NEG_INFINITY;
            let mut reach: HashMap<usize, (f64, f64)> = HashMap::new();
            let mut frontier: Vec<usize> = Vec::new();
            let add = |map: &mut HashMap<u32, (f64, f64)>, to: u32, s: f64, m: f64| {
                let e = map.entry(to).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
                e.0 = log_add(e.0, s);
                e.1 = e.1.max(m);
            };
            let seed = |reach: &mut HashMap<usize, (f64, f64)>, j: usize, s: f64, m: f64| {
                let e = reach.entry(j).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
                e.0 = log_add(e.0, s);
                e.1 = e.1.max(m);
            };
            for &ai in &out[from] {
                let a = arcs[ai];
                let t = a.to as usize;
                if is_j(t) {
                    seed(&mut reach, t, a.logp, a.logp);
                    frontier.push(t);
                } else if t == from {
                    self_loop = log_add(self_loop, a.logp);
                } else {
                    add(&mut direct, eidx[t], a.logp, a.logp);
                }
            }
            // expand junctions in topological order
            let mut pending: Vec<usize> = frontier;
            pending.sort_by_key(|&j| rank[j]);
            pending.dedup();
            let mut heap = std::collections::BinaryHeap::new();
            for j in pending {
                heap.push(std::cmp::Reverse((rank[j], j)));
            }
            let mut done = std::collections::HashSet::new();
            let mut at_end = None;
            while let Some(std::cmp::Reverse((_, j))) = heap.pop() {
                if !done.insert(j) {
                    continue;
                }
                let (s, m) = reach[&j];
                if j == end as usize {
                    at_end = Some((s, m));
                    continue;
                }
                for &ai in &out[j] {
                    let a = arcs[ai];
                    let t = a.to as usize;
                    if is_j(t) {
                        seed(&mut reach, t, s + a.logp, m + a.logp);
                        heap.push(std::cmp::Reverse((rank[t], t)));
                    } else {
                        add(&mut direct, eidx[t], s + a.logp, m + a.logp);
                    }
                }
            }
            let mut links: Vec<Link> = direct
                .into_iter()
                .map(|(to, (sum, max))| Link { to, sum, max })
                .collect();
            links.sort_by_key(|l| l.to);
            (links, at_end, self_loop)
        };

        let (enter, _, _) = closure(start as usize);
        let m = emitting.len();
        let mut succ = Vec::with_capacity(m);
        let mut leave = Vec::with_capacity(m);
        let mut self_loops = Vec::with_capacity(m);
        for &id in &emitting {
            let (links, at_end, sl) = closure(id as usize);
            succ.push(links);
            leave.push(at_end.unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY)));
            self_loops.push(sl);
        }
        let mut pred: Vec<Vec<Link>> = vec![Vec::new(); m];
        for (e, links) in succ.iter().enumerate() {
            for l in links {
                pred[l.to as usize].push(Link {
                    to: e as u32,
                    sum: l.sum,
                    max: l.max,
                });
            }
        }
        Ok(CompositeGraph {
            nodes,
            arcs,
            segments,
            start,
            end,
            emitting,
            outputs,
            enter,
            succ,
            pred,
            leave,
            self_loop: self_loops,
        })
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn end(&self) -> NodeId {
        self.end
    }

    /// Number of emitting nodes.
    pub fn n_emitting(&self) -> usize {
        self.emitting.len()
    }

    /// Graph node id of emitting index `e`.
    pub fn emitting_node(&self, e: usize) -> NodeId {
        self.emitting[e]
    }

    pub fn emitting_output(&self, e: usize) -> u32 {
        self.outputs[e]
    }

    pub fn node(&self, id: NodeId) -> NodeKind {
        self.nodes[id as usize]
    }

    pub(crate) fn enter(&self) -> &[Link] {
        &self.enter
    }

    /// Links leaving emitting node `e` (self-loops excluded).
    pub(crate) fn succ(&self, e: usize) -> &[Link] {
        &self.succ[e]
    }

    /// Links arriving at emitting node `e`; `to` holds the source.
    pub(crate) fn pred(&self, e: usize) -> &[Link] {
        &self.pred[e]
    }

    pub(crate) fn leave(&self, e: usize) -> (f64, f64) {
        self.leave[e]
    }

    pub(crate) fn self_loop(&self, e: usize) -> f64 {
        self.self_loop[e]
    }

    /// Distinct tied outputs touched by the graph, sorted.
    pub fn used_outputs(&self) -> Vec<u32> {
        let mut v = self.outputs.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Segment id of an emitting node.
    pub fn segment_of(&self, id: NodeId) -> Option<u32> {
        match self.nodes[id as usize] {
            NodeKind::Emitting { segment, .. } => Some(segment),
            NodeKind::Junction => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{DiagonalGaussian, OutputDist};
    use crate::hmm::HmmUnit;

    fn model() -> HmmModel {
        let g = OutputDist::Diagonal(DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap());
        HmmModel::new(
            1,
            vec![
                HmmUnit::linear("a", &[0.5, 0.5], None).unwrap(),
                HmmUnit::linear("sil", &[0.5], Some(0.25)).unwrap(),
            ],
            vec![vec![0, 0], vec![0]],
            vec![g],
        )
        .unwrap()
    }

    #[test]
    fn junction_cycle_is_rejected() {
        let mut b = GraphBuilder::new();
        let s = b.junction();
        let e = b.junction();
        b.arc(s, e, 0.0);
        b.arc(e, s, 0.0);
        assert!(b.build(s, e).is_err());
    }

    #[test]
    fn tee_folds_into_start_to_end_weights() {
        let m = model();
        let mut b = GraphBuilder::new();
        let (s1, e1) = b.unit(&m, 1, None);
        let (s2, e2) = b.unit(&m, 0, Some(0));
        b.arc(e1, s2, 0.0);
        let g = b.build(s1, e2).unwrap();
        // sil state 0 and the first state of "a" are both entry points
        let enter: Vec<(u32, f64)> = g.enter().iter().map(|l| (l.to, l.sum)).collect();
        assert_eq!(enter.len(), 2);
        assert!((enter[0].1 - 0.75f64.ln()).abs() < 1e-12);
        assert!((enter[1].1 - 0.25f64.ln()).abs() < 1e-12);
        assert_eq!(g.segments().len(), 2);
    }
}
