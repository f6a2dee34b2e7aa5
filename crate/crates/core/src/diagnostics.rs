//! Acoustic scores, the score-variance test and lag-1 correlation analyses.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::dists::RandomSource;
use crate::error::{Error, Result};
use crate::hmm::{Alignment, HmmModel};
use crate::numeric::{median, quantile_sorted};
use crate::regions::partition_states;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Minimum within-region pairs for a state to enter the correlation report.
pub const MIN_WITHIN_EXAMPLES: usize = 20;

/// `V_j(x)`: negative log-density of output `j` without the `(d/2)·ln 2π` term.
pub fn frame_score(model: &HmmModel, state: u32, x: &[f64]) -> Result<f64> {
    let dist = model.output(state);
    Ok(-dist.log_density(x)? - dist.dim() as f64 * HALF_LN_2PI)
}

pub(crate) fn frame_score_unchecked(model: &HmmModel, state: u32, x: &[f64]) -> f64 {
    let dist = model.output(state);
    -dist.log_density_unchecked(x) - dist.dim() as f64 * HALF_LN_2PI
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePoint {
    pub frame: u32,
    pub state: u32,
    pub score: f64,
}

/// Scores of one utterance against its forced-alignment states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub utt_id: String,
    pub speaker: String,
    pub points: Vec<ScorePoint>,
}

pub fn score_series(model: &HmmModel, corpus: &Corpus, alignments: &[Alignment]) -> Result<Vec<ScoreSeries>> {
    check_cover(corpus, alignments)?;
    let mut out = Vec::with_capacity(corpus.len());
    for (utt, al) in corpus.utterances().iter().zip(alignments) {
        let states = al.hard_states().ok_or_else(|| {
            Error::Validation(format!("alignment for {} is not hard", utt.id))
        })?;
        let points = states
            .iter()
            .enumerate()
            .map(|(t, &s)| ScorePoint {
                frame: t as u32,
                state: s,
                score: frame_score_unchecked(model, s, utt.frame(t)),
            })
            .collect();
        out.push(ScoreSeries {
            utt_id: utt.id.clone(),
            speaker: utt.speaker.clone(),
            points,
        });
    }
    Ok(out)
}

fn check_cover(corpus: &Corpus, alignments: &[Alignment]) -> Result<()> {
    if alignments.len() != corpus.len() {
        return Err(Error::Validation(format!(
            "{} alignments for {} utterances",
            alignments.len(),
            corpus.len()
        )));
    }
    for (u, a) in corpus.utterances().iter().zip(alignments) {
        if a.utt_id != u.id {
            return Err(Error::MissingAlignment(u.id.clone()));
        }
        if a.len() != u.len() {
            return Err(Error::Validation(format!(
                "alignment for {} has {} frames, utterance {}",
                u.id,
                a.len(),
                u.len()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateScore {
    pub occupancy: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Occupancy-weighted score moments per tied state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub states: BTreeMap<u32, StateScore>,
}

pub fn score_stats(model: &HmmModel, corpus: &Corpus, alignments: &[Alignment]) -> Result<ScoreStats> {
    check_cover(corpus, alignments)?;
    if corpus.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: corpus.dim(),
        });
    }
    let n = model.n_outputs();
    // two passes: mean, then centred second moment
    let mut occ = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut scores: Vec<Vec<(u32, f64, f64)>> = Vec::with_capacity(corpus.len());
    for (utt, al) in corpus.utterances().iter().zip(alignments) {
        let mut per = Vec::new();
        for t in 0..utt.len() {
            for (s, w) in al.state_weights(t) {
                let v = frame_score_unchecked(model, s, utt.frame(t));
                occ[s as usize] += w;
                sum[s as usize] += w * v;
                per.push((s, w, v));
            }
        }
        scores.push(per);
    }
    let mean: Vec<f64> = (0..n).map(|j| sum[j] / occ[j]).collect();
    let mut sq = vec![0.0; n];
    for per in &scores {
        for &(s, w, v) in per {
            let e = v - mean[s as usize];
            sq[s as usize] += w * e * e;
        }
    }
    let mut states = BTreeMap::new();
    for j in 0..n {
        if occ[j] <= 0.0 {
            warn!("state {j} has zero occupancy; score statistics omitted");
            continue;
        }
        states.insert(
            j as u32,
            StateScore {
                occupancy: occ[j],
                mean: mean[j],
                variance: sq[j] / occ[j],
            },
        );
    }
    Ok(ScoreStats { states })
}

/// `d/2 + ½ Σ log σ²`: the expected score of a diagonal Gaussian state at a
/// Baum-Welch fixed point.
pub fn expected_score(model: &HmmModel, state: u32) -> Result<f64> {
    let g = model.output(state).as_diagonal().ok_or_else(|| {
        Error::Validation(format!("state {state} is not a diagonal Gaussian"))
    })?;
    Ok(0.5 * g.dim() as f64 + g.half_log_det())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVerdict {
    pub state: u32,
    pub occupancy: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceTest {
    pub null_variance: f64,
    pub level: f64,
    pub verdicts: Vec<StateVerdict>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Median of the per-state envelope upper bounds.
    pub median_upper: f64,
    pub fraction_inside: f64,
}

/// Compare each state's score variance with the sampling distribution of the
/// variance of `n` draws of ½χ²_d, where `n` is the state's rounded occupancy.
pub fn variance_test(
    stats: &ScoreStats,
    d: usize,
    null_draws: usize,
    level: f64,
    min_occupancy: f64,
    rng: &RandomSource,
) -> Result<VarianceTest> {
    if d == 0 || null_draws < 2 || !(0.0 < level && level < 1.0) {
        return Err(Error::Domain(format!(
            "variance test needs d ≥ 1, ≥ 2 null draws and level in (0,1); got {d}, {null_draws}, {level}"
        )));
    }
    let chi = ChiSquared::new(d as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let mut envelopes: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut verdicts = Vec::new();
    for (&state, s) in &stats.states {
        if s.occupancy < min_occupancy {
            continue;
        }
        let n = s.occupancy.round().max(2.0) as usize;
        let (lower, upper) = *envelopes.entry(n).or_insert_with(|| {
            let mut r = rng.derive(&format!("null-{n}"));
            let mut vars: Vec<f64> = (0..null_draws)
                .map(|_| {
                    let mut sum = 0.0;
                    let mut sq = 0.0;
                    for _ in 0..n {
                        let v = 0.5 * chi.sample(&mut r);
                        sum += v;
                        sq += v * v;
                    }
                    let m = sum / n as f64;
                    sq / n as f64 - m * m
                })
                .collect();
            vars.sort_by(f64::total_cmp);
            let tail = 0.5 * (1.0 - level);
            (quantile_sorted(&vars, tail), quantile_sorted(&vars, 1.0 - tail))
        });
        verdicts.push(StateVerdict {
            state,
            occupancy: s.occupancy,
            variance: s.variance,
            lower,
            upper,
            inside: lower <= s.variance && s.variance <= upper,
        });
    }
    if verdicts.is_empty() {
        return Err(Error::Validation(format!(
            "no state has occupancy ≥ {min_occupancy}"
        )));
    }
    let vars: Vec<f64> = verdicts.iter().map(|v| v.variance).collect();
    let uppers: Vec<f64> = verdicts.iter().map(|v| v.upper).collect();
    let inside = verdicts.iter().filter(|v| v.inside).count();
    Ok(VarianceTest {
        null_variance: d as f64 / 2.0,
        level,
        median: median(&vars).unwrap(),
        min: vars.iter().copied().fold(f64::INFINITY, f64::min),
        max: vars.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median_upper: median(&uppers).unwrap(),
        fraction_inside: inside as f64 / verdicts.len() as f64,
        verdicts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceMean {
    /// Mean of the series itself.
    ListMean,
    Global(f64),
}

/// Lag-1 correlation relative to a reference mean, with the covariance
/// averaged over `n−1` pairs and the variance over `n` values. Unclamped.
pub fn lag1_raw(series: &[f64], reference: ReferenceMean) -> Result<f64> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Undefined(format!("lag-1 correlation of {n} values")));
    }
    let mu = match reference {
        ReferenceMean::ListMean => series.iter().sum::<f64>() / n as f64,
        ReferenceMean::Global(m) => m,
    };
    let cov: f64 = series.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum::<f64>() / (n - 1) as f64;
    let var: f64 = series.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(Error::Undefined("lag-1 correlation of a constant series".into()));
    }
    Ok(cov / var)
}

/// [`lag1_raw`] clamped to [−1, 1].
pub fn lag1_correlation(series: &[f64], reference: ReferenceMean) -> Result<f64> {
    Ok(clamp_rho(lag1_raw(series, reference)?))
}

fn clamp_rho(r: f64) -> f64 {
    if !(-1.0..=1.0).contains(&r) {
        warn!("lag-1 correlation {r:.4} clamped to [-1, 1]");
    }
    r.clamp(-1.0, 1.0)
}

/// Lag-1 correlation pooled over several lists: pairs never straddle lists.
pub fn pooled_lag1(lists: &[Vec<f64>], reference: ReferenceMean) -> Result<f64> {
    let n: usize = lists.iter().map(Vec::len).sum();
    let pairs: usize = lists.iter().map(|l| l.len().saturating_sub(1)).sum();
    if n < 3 || pairs == 0 {
        return Err(Error::Undefined(format!("lag-1 correlation of {n} values")));
    }
    let mu = match reference {
        ReferenceMean::ListMean => lists.iter().flatten().sum::<f64>() / n as f64,
        ReferenceMean::Global(m) => m,
    };
    let cov: f64 = lists
        .iter()
        .flat_map(|l| l.windows(2))
        .map(|w| (w[0] - mu) * (w[1] - mu))
        .sum::<f64>()
        / pairs as f64;
    let var: f64 = lists.iter().flatten().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(Error::Undefined("lag-1 correlation of a constant series".into()));
    }
    Ok(clamp_rho(cov / var))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinRegion {
    pub state: u32,
    pub examples: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetweenRegion {
    pub speaker: String,
    pub regions: usize,
    pub rho: f64,
    pub shuffled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub within: Vec<WithinRegion>,
    pub between: Vec<BetweenRegion>,
}

impl CorrelationReport {
    pub fn median_within(&self) -> Option<f64> {
        median(&self.within.iter().map(|w| w.rho).collect::<Vec<_>>())
    }
}

/// Within-region and between-region score correlations from forced
/// alignments. Within-region: adjacent frames of each region, per state,
/// relative to that state's mean score. Between-region: region lead-frame
/// scores per utterance, pooled per speaker, relative to the speaker mean;
/// the shuffled baseline permutes each speaker's concatenated list and uses
/// the corpus-wide mean.
pub fn correlation_report(
    model: &HmmModel,
    corpus: &Corpus,
    alignments: &[Alignment],
    rng: &RandomSource,
) -> Result<CorrelationReport> {
    let series = score_series(model, corpus, alignments)?;
    let mut by_state: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    let mut by_speaker: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for s in &series {
        let states: Vec<u32> = s.points.iter().map(|p| p.state).collect();
        let mut leads = Vec::new();
        for r in partition_states(&states) {
            let scores: Vec<f64> = s.points[r.start as usize..r.end as usize]
                .iter()
                .map(|p| p.score)
                .collect();
            leads.push(scores[0]);
            by_state.entry(r.state).or_default().push(scores);
        }
        by_speaker.entry(s.speaker.clone()).or_default().push(leads);
    }

    let mut within = Vec::new();
    for (state, lists) in &by_state {
        let examples: usize = lists.iter().map(|l| l.len().saturating_sub(1)).sum();
        if examples < MIN_WITHIN_EXAMPLES {
            continue;
        }
        if let Ok(rho) = pooled_lag1(lists, ReferenceMean::ListMean) {
            within.push(WithinRegion {
                state: *state,
                examples,
                rho,
            });
        }
    }

    let all: Vec<f64> = by_speaker.values().flatten().flatten().copied().collect();
    let global = all.iter().sum::<f64>() / all.len().max(1) as f64;
    let mut between = Vec::new();
    for (speaker, lists) in &by_speaker {
        let rho = match pooled_lag1(lists, ReferenceMean::ListMean) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let mut flat: Vec<f64> = lists.iter().flatten().copied().collect();
        rng.derive(speaker).shuffle(&mut flat);
        let shuffled = lag1_correlation(&flat, ReferenceMean::Global(global))?;
        between.push(BetweenRegion {
            speaker: speaker.clone(),
            regions: flat.len(),
            rho,
            shuffled,
        });
    }
    Ok(CorrelationReport { within, between })
}

/// Equal-width histogram: `(left edge, count)` per bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect()
}
