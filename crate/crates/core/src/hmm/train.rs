use log::warn;
use rayon::prelude::*;

use crate::corpus::Utterance;
use crate::dists::{DiagonalGaussian, FullGaussian, OutputDist, VARIANCE_FLOOR};
use crate::error::{Error, Result};

use super::align::posteriors;
use super::graph::{CompositeGraph, NodeKind};
use super::model::HmmModel;

/// Transition probabilities are floored here before renormalization.
pub const TRANSITION_FLOOR: f64 = 1e-8;

/// Utterances accumulated serially per work item; fixed so reductions do not
/// depend on the thread count.
pub(crate) const CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceKind {
    Diagonal,
    Full,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub update_means: bool,
    pub update_variances: bool,
    pub update_transitions: bool,
    pub covariance: CovarianceKind,
    pub variance_floor: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            update_means: true,
            update_variances: true,
            update_transitions: true,
            covariance: CovarianceKind::Diagonal,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

/// Occupancy-weighted moments per tied output, taken about a fixed shift
/// (the previous mean) for numerical stability.
#[derive(Clone, Debug)]
pub struct OutputStats {
    pub occ: f64,
    pub shift: Vec<f64>,
    pub first: Vec<f64>,
    /// `d` entries (diagonal) or `d × d` row-major (full).
    pub second: Vec<f64>,
    pub full: bool,
}

impl OutputStats {
    pub fn new(shift: Vec<f64>, full: bool) -> Self {
        let d = shift.len();
        OutputStats {
            occ: 0.0,
            first: vec![0.0; d],
            second: vec![0.0; if full { d * d } else { d }],
            shift,
            full,
        }
    }

    #[inline]
    pub fn add(&mut self, x: &[f64], w: f64) {
        let d = self.shift.len();
        self.occ += w;
        if !self.full {
            for i in 0..d {
                let y = x[i] - self.shift[i];
                self.first[i] += w * y;
                self.second[i] += w * y * y;
            }
        } else {
            for i in 0..d {
                let yi = x[i] - self.shift[i];
                self.first[i] += w * yi;
                for j in 0..d {
                    self.second[i * d + j] += w * yi * (x[j] - self.shift[j]);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &OutputStats) {
        self.occ += other.occ;
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
    }

    /// Weighted mean.
    pub fn mean(&self) -> Vec<f64> {
        self.shift
            .iter()
            .zip(&self.first)
            .map(|(s, f)| s + f / self.occ)
            .collect()
    }

    /// Weighted population variance per dimension.
    pub fn variance(&self) -> Vec<f64> {
        let d = self.shift.len();
        (0..d)
            .map(|i| {
                let m = self.first[i] / self.occ;
                let s = if self.full {
                    self.second[i * d + i]
                } else {
                    self.second[i]
                };
                s / self.occ - m * m
            })
            .collect()
    }

    /// Weighted covariance, row-major (requires full statistics).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.shift.len();
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mi = self.first[i] / self.occ;
                let mj = self.first[j] / self.occ;
                c[i * d + j] = self.second[i * d + j] / self.occ - mi * mj;
            }
        }
        // symmetrize rounding
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (c[i * d + j] + c[j * d + i]);
                c[i * d + j] = v;
                c[j * d + i] = v;
            }
        }
        c
    }
}

/// Sufficient statistics of one Baum-Welch pass.
#[derive(Clone, Debug)]
pub struct Accumulator {
    pub loglik: f64,
    pub frames: usize,
    pub outputs: Vec<OutputStats>,
    /// Per unit, per state: (occupancy, expected self-loops).
    pub transitions: Vec<Vec<(f64, f64)>>,
}

impl Accumulator {
    pub fn new(model: &HmmModel, full: bool) -> Self {
        Accumulator {
            loglik: 0.0,
            frames: 0,
            outputs: model
                .outputs()
                .iter()
                .map(|o| OutputStats::new(o.mean().to_vec(), full))
                .collect(),
            transitions: model
                .units()
                .iter()
                .map(|u| vec![(0.0, 0.0); u.n_states()])
                .collect(),
        }
    }

    pub fn add_utterance(
        &mut self,
        model: &HmmModel,
        graph: &CompositeGraph,
        utt: &Utterance,
    ) -> Result<()> {
        let p = posteriors(model, graph, utt)?;
        self.loglik += p.loglik;
        self.frames += utt.len();
        let m = p.m;
        let mut node_occ = vec![0.0; m];
        for (t, row) in p.gamma.chunks(m).enumerate() {
            let x = utt.frame(t);
            for (e, &g) in row.iter().enumerate() {
                if g > 0.0 {
                    self.outputs[graph.emitting_output(e) as usize].add(x, g);
                    node_occ[e] += g;
                }
            }
        }
        for e in 0..m {
            if let NodeKind::Emitting { unit, state, .. } = graph.node(graph.emitting_node(e)) {
                let slot = &mut self.transitions[unit as usize][state as usize];
                slot.0 += node_occ[e];
                slot.1 += p.self_counts[e];
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.loglik += other.loglik;
        self.frames += other.frames;
        for (a, b) in self.outputs.iter_mut().zip(&other.outputs) {
            a.merge(b);
        }
        for (a, b) in self.transitions.iter_mut().zip(&other.transitions) {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
            }
        }
    }
}

/// Accumulate statistics over a corpus in parallel, reduced in input order.
pub fn accumulate(
    model: &HmmModel,
    data: &[(&Utterance, &CompositeGraph)],
    full: bool,
) -> Result<Accumulator> {
    let parts: Vec<Result<Accumulator>> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::new(model, full);
            for (utt, graph) in chunk {
                acc.add_utterance(model, graph, utt)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(model, full);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Re-estimate a model from accumulated statistics.
pub fn reestimate(model: &HmmModel, acc: &Accumulator, opts: &TrainOptions) -> Result<HmmModel> {
    let mut outputs = Vec::with_capacity(model.n_outputs());
    for (j, (old, st)) in model.outputs().iter().zip(&acc.outputs).enumerate() {
        if st.occ <= 0.0 {
            warn!("tied state {j} has zero occupancy; keeping its parameters");
            outputs.push(old.clone());
            continue;
        }
        let mean = if opts.update_means {
            st.mean()
        } else {
            old.mean().to_vec()
        };
        let new = match (old, opts.covariance) {
            (OutputDist::Laplace(_), _) => {
                return Err(Error::Validation(
                    "Baum-Welch re-estimates Gaussian outputs only".into(),
                ))
            }
            (OutputDist::Diagonal(g), CovarianceKind::Diagonal) => {
                let var = if opts.update_variances {
                    moment_variance(st, &mean)
                } else {
                    g.variance().to_vec()
                };
                OutputDist::Diagonal(DiagonalGaussian::with_floor(mean, var, opts.variance_floor)?)
            }
            (_, CovarianceKind::Full) => {
                let cov = if opts.update_variances {
                    let d = mean.len();
                    let mut c = moment_covariance(st, &mean);
                    for i in 0..d {
                        c[i * d + i] = c[i * d + i].max(opts.variance_floor);
                    }
                    c
                } else {
                    match old {
                        OutputDist::Full(f) => f.covariance().to_vec(),
                        OutputDist::Diagonal(g) => {
                            FullGaussian::from_diagonal(g)?.covariance().to_vec()
                        }
                        OutputDist::Laplace(_) => unreachable!(),
                    }
                };
                match FullGaussian::new(mean.clone(), cov) {
                    Ok(f) => OutputDist::Full(f),
                    Err(_) => {
                        warn!("tied state {j}: covariance not positive definite; keeping it");
                        old.clone()
                    }
                }
            }
            (OutputDist::Full(f), CovarianceKind::Diagonal) => {
                let d = f.dim();
                let var = if opts.update_variances {
                    moment_variance(st, &mean)
                } else {
                    (0..d).map(|i| f.covariance()[i * d + i]).collect()
                };
                OutputDist::Diagonal(DiagonalGaussian::with_floor(mean, var, opts.variance_floor)?)
            }
        };
        outputs.push(new);
    }
    let mut next = model.with_outputs(outputs)?;
    if opts.update_transitions {
        let mut units = Vec::with_capacity(model.units().len());
        for (u, counts) in model.units().iter().zip(&acc.transitions) {
            let loops: Vec<f64> = counts
                .iter()
                .enumerate()
                .map(|(s, &(occ, stay))| {
                    if occ <= 0.0 {
                        return u.self_loop(s);
                    }
                    let q = (stay / occ).clamp(0.0, 1.0);
                    let (a, b) = (q.max(TRANSITION_FLOOR), (1.0 - q).max(TRANSITION_FLOOR));
                    a / (a + b)
                })
                .collect();
            units.push(u.with_self_loops(&loops)?);
        }
        next = next.with_units(units)?;
    }
    Ok(next)
}

/// Weighted variance about `mean` (equal to the moment variance when `mean`
/// is the weighted mean).
fn moment_variance(st: &OutputStats, mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let full = st.full;
    (0..d)
        .map(|i| {
            let c = mean[i] - st.shift[i];
            let s2 = if full { st.second[i * d + i] } else { st.second[i] };
            (s2 - 2.0 * c * st.first[i]) / st.occ + c * c
        })
        .collect()
}

fn moment_covariance(st: &OutputStats, mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    if !st.full {
        let v = moment_variance(st, mean);
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            c[i * d + i] = v[i];
        }
        return c;
    }
    let c: Vec<f64> = (0..d).map(|i| mean[i] - st.shift[i]).collect();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v = (st.second[i * d + j] - c[i] * st.first[j] - c[j] * st.first[i]) / st.occ
                + c[i] * c[j];
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    out
}

/// One Baum-Welch pass: the re-estimated model and the total
/// log-likelihood of the corpus under the input model.
pub fn baum_welch_pass(
    model: &HmmModel,
    data: &[(&Utterance, &CompositeGraph)],
    opts: &TrainOptions,
) -> Result<(HmmModel, f64)> {
    let acc = accumulate(model, data, opts.covariance == CovarianceKind::Full)?;
    Ok((reestimate(model, &acc, opts)?, acc.loglik))
}

/// Largest absolute change of any mean, variance or self-loop.
pub fn max_parameter_change(a: &HmmModel, b: &HmmModel) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.outputs().iter().zip(b.outputs()) {
        for (p, q) in x.mean().iter().zip(y.mean()) {
            worst = worst.max((p - q).abs());
        }
        match (x, y) {
            (OutputDist::Diagonal(g), OutputDist::Diagonal(h)) => {
                for (p, q) in g.variance().iter().zip(h.variance()) {
                    worst = worst.max((p - q).abs());
                }
            }
            (OutputDist::Full(g), OutputDist::Full(h)) => {
                for (p, q) in g.covariance().iter().zip(h.covariance()) {
                    worst = worst.max((p - q).abs());
                }
            }
            _ => worst = f64::INFINITY,
        }
    }
    for (u, v) in a.units().iter().zip(b.units()) {
        for (p, q) in u.matrix().iter().zip(v.matrix()) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

/// Run passes until `max_passes` or the parameter change drops below `tol`.
/// Graphs come from `graph` and are rebuilt from the current model before
/// every pass, so re-estimated transitions take effect. Returns the final
/// model and the log-likelihood before each pass.
pub fn train<G>(
    model: &HmmModel,
    utts: &[Utterance],
    graph: G,
    opts: &TrainOptions,
    max_passes: usize,
    tol: f64,
) -> Result<(HmmModel, Vec<f64>)>
where
    G: Fn(&HmmModel, &Utterance) -> Result<CompositeGraph> + Sync,
{
    let mut current = model.clone();
    let mut history = Vec::with_capacity(max_passes);
    for _ in 0..max_passes {
        let graphs = utts.par_iter().map(|u| graph(&current, u)).collect::<Result<Vec<_>>>()?;
        let data: Vec<(&Utterance, &CompositeGraph)> = utts.iter().zip(&graphs).collect();
        let (next, ll) = baum_welch_pass(&current, &data, opts)?;
        history.push(ll);
        let change = max_parameter_change(&current, &next);
        current = next;
        if change < tol {
            break;
        }
    }
    Ok((current, history))
}
