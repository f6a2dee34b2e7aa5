use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::numeric::{log_add, log_sum_exp};

use super::graph::{CompositeGraph, NodeId, NodeKind};
use super::model::HmmModel;

/// Occupancies below this are dropped from fractional alignments.
pub const OCCUPANCY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub node: NodeId,
    pub state: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlignmentKind {
    /// Graph node and tied state per frame.
    Hard { frames: Vec<NodeId>, states: Vec<u32> },
    /// Sparse posterior over graph nodes per frame.
    Fractional { occupancies: Vec<Vec<Occupancy>> },
}

/// Frame-to-state assignment for one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub utt_id: String,
    #[serde(flatten)]
    pub kind: AlignmentKind,
}

impl Alignment {
    pub fn hard(utt_id: impl Into<String>, frames: Vec<NodeId>, states: Vec<u32>) -> Self {
        Alignment {
            utt_id: utt_id.into(),
            kind: AlignmentKind::Hard { frames, states },
        }
    }

    /// Hard alignment known only by tied state (e.g. simulation ground truth).
    pub fn from_states(utt_id: impl Into<String>, states: Vec<u32>) -> Self {
        let frames = states.clone();
        Self::hard(utt_id, frames, states)
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            AlignmentKind::Hard { states, .. } => states.len(),
            AlignmentKind::Fractional { occupancies } => occupancies.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hard_states(&self) -> Option<&[u32]> {
        match &self.kind {
            AlignmentKind::Hard { states, .. } => Some(states),
            AlignmentKind::Fractional { .. } => None,
        }
    }

    pub fn hard_nodes(&self) -> Option<&[NodeId]> {
        match &self.kind {
            AlignmentKind::Hard { frames, .. } => Some(frames),
            AlignmentKind::Fractional { .. } => None,
        }
    }

    /// `(tied state, weight)` pairs for frame `t`, summed over nodes.
    pub fn state_weights(&self, t: usize) -> Vec<(u32, f64)> {
        match &self.kind {
            AlignmentKind::Hard { states, .. } => vec![(states[t], 1.0)],
            AlignmentKind::Fractional { occupancies } => {
                let mut v: Vec<(u32, f64)> = Vec::with_capacity(occupancies[t].len());
                for o in &occupancies[t] {
                    match v.iter_mut().find(|(s, _)| *s == o.state) {
                        Some(e) => e.1 += o.weight,
                        None => v.push((o.state, o.weight)),
                    }
                }
                v.sort_by_key(|e| e.0);
                v
            }
        }
    }
}

/// Per-frame log emission densities for the outputs a graph uses.
pub(crate) struct Emissions {
    slot: Vec<usize>,
    width: usize,
    table: Vec<f64>,
}

impl Emissions {
    pub(crate) fn new(model: &HmmModel, graph: &CompositeGraph, utt: &Utterance) -> Result<Self> {
        if utt.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: utt.dim(),
            });
        }
        let used = graph.used_outputs();
        let mut slot = vec![usize::MAX; model.n_outputs()];
        for (k, &j) in used.iter().enumerate() {
            slot[j as usize] = k;
        }
        let width = used.len();
        let mut table = Vec::with_capacity(width * utt.len());
        for x in utt.frames() {
            for &j in &used {
                table.push(model.output(j).log_density_unchecked(x));
            }
        }
        Ok(Emissions { slot, width, table })
    }

    #[inline]
    pub(crate) fn get(&self, t: usize, output: u32) -> f64 {
        self.table[t * self.width + self.slot[output as usize]]
    }
}

/// Forward-backward posteriors kept in dense form for training.
pub(crate) struct Posteriors {
    pub loglik: f64,
    /// `n × m` occupancies (probabilities).
    pub gamma: Vec<f64>,
    /// Expected self-loop count per emitting node.
    pub self_counts: Vec<f64>,
    pub m: usize,
}

fn failure(utt: &Utterance, reason: &str) -> Error {
    Error::AlignmentFailure {
        utt: utt.id.clone(),
        reason: reason.into(),
    }
}

pub(crate) fn posteriors(
    model: &HmmModel,
    graph: &CompositeGraph,
    utt: &Utterance,
) -> Result<Posteriors> {
    let n = utt.len();
    if n == 0 {
        return Err(failure(utt, "empty utterance"));
    }
    let em = Emissions::new(model, graph, utt)?;
    let m = graph.n_emitting();
    let b = |t: usize, e: usize| em.get(t, graph.emitting_output(e));
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; n * m];
    for l in graph.enter() {
        let e = l.to as usize;
        alpha[e] = l.sum + b(0, e);
    }
    for t in 1..n {
        let (prev, cur) = alpha.split_at_mut(t * m);
        let prev = &prev[(t - 1) * m..];
        for e in 0..m {
            let mut acc = prev[e] + graph.self_loop(e);
            for l in graph.pred(e) {
                acc = log_add(acc, prev[l.to as usize] + l.sum);
            }
            cur[e] = if acc == ninf { ninf } else { acc + b(t, e) };
        }
    }
    let last = &alpha[(n - 1) * m..];
    let ends: Vec<f64> = (0..m).map(|e| last[e] + graph.leave(e).0).collect();
    let loglik = log_sum_exp(&ends);
    if !loglik.is_finite() {
        return Err(failure(utt, &format!("no path of length {n} through the graph")));
    }

    let mut beta = vec![ninf; n * m];
    for e in 0..m {
        beta[(n - 1) * m + e] = graph.leave(e).0;
    }
    for t in (0..n - 1).rev() {
        for e in 0..m {
            let mut acc = graph.self_loop(e) + b(t + 1, e) + beta[(t + 1) * m + e];
            for l in graph.succ(e) {
                let f = l.to as usize;
                acc = log_add(acc, l.sum + b(t + 1, f) + beta[(t + 1) * m + f]);
            }
            beta[t * m + e] = acc;
        }
    }

    let mut gamma = vec![0.0; n * m];
    for i in 0..n * m {
        let v = alpha[i] + beta[i] - loglik;
        if v > -745.0 {
            gamma[i] = v.exp();
        }
    }
    let mut self_counts = vec![0.0; m];
    for t in 1..n {
        for (e, c) in self_counts.iter_mut().enumerate() {
            let sl = graph.self_loop(e);
            if sl == ninf {
                continue;
            }
            let v = alpha[(t - 1) * m + e] + sl + b(t, e) + beta[t * m + e] - loglik;
            if v > -745.0 {
                *c += v.exp();
            }
        }
    }
    Ok(Posteriors {
        loglik,
        gamma,
        self_counts,
        m,
    })
}

/// Total log-likelihood over all graph paths and the exact state posteriors.
pub fn forward_backward(
    model: &HmmModel,
    graph: &CompositeGraph,
    utt: &Utterance,
) -> Result<(f64, Alignment)> {
    let p = posteriors(model, graph, utt)?;
    let occupancies = p
        .gamma
        .chunks(p.m)
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &g)| g >= OCCUPANCY_EPS)
                .map(|(e, &g)| Occupancy {
                    node: graph.emitting_node(e),
                    state: graph.emitting_output(e),
                    weight: g,
                })
                .collect()
        })
        .collect();
    Ok((
        p.loglik,
        Alignment {
            utt_id: utt.id.clone(),
            kind: AlignmentKind::Fractional { occupancies },
        },
    ))
}

/// Log-likelihood by the backward recursion alone, for cross-checking.
pub fn backward_loglik(model: &HmmModel, graph: &CompositeGraph, utt: &Utterance) -> Result<f64> {
    let n = utt.len();
    if n == 0 {
        return Err(failure(utt, "empty utterance"));
    }
    let em = Emissions::new(model, graph, utt)?;
    let m = graph.n_emitting();
    let b = |t: usize, e: usize| em.get(t, graph.emitting_output(e));
    let mut beta: Vec<f64> = (0..m).map(|e| graph.leave(e).0).collect();
    for t in (0..n - 1).rev() {
        let next: Vec<f64> = (0..m)
            .map(|e| {
                let mut acc = graph.self_loop(e) + b(t + 1, e) + beta[e];
                for l in graph.succ(e) {
                    let f = l.to as usize;
                    acc = log_add(acc, l.sum + b(t + 1, f) + beta[f]);
                }
                acc
            })
            .collect();
        beta = next;
    }
    let total = graph
        .enter()
        .iter()
        .map(|l| l.sum + b(0, l.to as usize) + beta[l.to as usize])
        .fold(f64::NEG_INFINITY, log_add);
    if !total.is_finite() {
        return Err(failure(utt, "no admissible path"));
    }
    Ok(total)
}

/// Best path as emitting indices, with optional per-node emission scales.
pub(crate) fn viterbi_path(
    model: &HmmModel,
    graph: &CompositeGraph,
    utt: &Utterance,
    scales: Option<&[f64]>,
) -> Result<(f64, Vec<usize>)> {
    let n = utt.len();
    if n == 0 {
        return Err(failure(utt, "empty utterance"));
    }
    let em = Emissions::new(model, graph, utt)?;
    let m = graph.n_emitting();
    let b = |t: usize, e: usize| {
        let v = em.get(t, graph.emitting_output(e));
        match scales {
            Some(s) => s[e] * v,
            None => v,
        }
    };
    let ninf = f64::NEG_INFINITY;
    let mut delta = vec![ninf; m];
    let mut back = vec![u32::MAX; n * m];
    for l in graph.enter() {
        delta[l.to as usize] = l.max + b(0, l.to as usize);
    }
    let mut next = vec![ninf; m];
    for t in 1..n {
        for e in 0..m {
            let mut best = delta[e] + graph.self_loop(e);
            let mut arg = e as u32;
            for l in graph.pred(e) {
                let v = delta[l.to as usize] + l.max;
                if v > best {
                    best = v;
                    arg = l.to;
                }
            }
            if best == ninf {
                next[e] = ninf;
            } else {
                next[e] = best + b(t, e);
                back[t * m + e] = arg;
            }
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = ninf;
    let mut arg = usize::MAX;
    for e in 0..m {
        let v = delta[e] + graph.leave(e).1;
        if v > best {
            best = v;
            arg = e;
        }
    }
    if arg == usize::MAX {
        return Err(failure(utt, &format!("no admissible path of length {n}")));
    }
    let mut path = vec![0usize; n];
    path[n - 1] = arg;
    for t in (1..n).rev() {
        path[t - 1] = back[t * m + path[t]] as usize;
    }
    Ok((best, path))
}

/// Most probable state path and its log score.
pub fn viterbi_align(
    model: &HmmModel,
    graph: &CompositeGraph,
    utt: &Utterance,
) -> Result<(f64, Alignment)> {
    let (score, path) = viterbi_path(model, graph, utt, None)?;
    Ok((score, hard_from_path(graph, &utt.id, &path)))
}

pub(crate) fn hard_from_path(graph: &CompositeGraph, utt_id: &str, path: &[usize]) -> Alignment {
    let frames = path.iter().map(|&e| graph.emitting_node(e)).collect();
    let states = path.iter().map(|&e| graph.emitting_output(e)).collect();
    Alignment::hard(utt_id, frames, states)
}

/// Units visited by a hard alignment, in order, as `(segment, start, end)`.
pub fn segment_spans(graph: &CompositeGraph, nodes: &[NodeId]) -> Vec<(u32, usize, usize)> {
    let mut spans: Vec<(u32, usize, usize)> = Vec::new();
    let mut prev_state = None;
    for (t, &id) in nodes.iter().enumerate() {
        let (seg, state) = match graph.node(id) {
            NodeKind::Emitting { segment, state, .. } => (segment, state),
            NodeKind::Junction => continue,
        };
        match spans.last_mut() {
            // a new instance of the same unit restarts at state 0
            Some(last) if last.0 == seg && !(state == 0 && prev_state.is_some_and(|p| p > 0)) => {
                last.2 = t + 1
            }
            _ => spans.push((seg, t, t + 1)),
        }
        prev_state = Some(state);
    }
    spans
}
