//! Lattice-based extended Baum-Welch and phone-dependent score scaling.

mod scales;

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::decoder::{align_counts, center_phone, EditCounts, Lattice};
use crate::diagnostics::frame_score_unchecked;
use crate::dists::{DiagonalGaussian, OutputDist, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::hmm::{Alignment, HmmModel, OutputStats, CHUNK};

pub use scales::PhoneScaleMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbwConfig {
    /// Multiplier on denominator occupancy in the per-state constant D.
    pub e: f64,
    pub variance_floor: f64,
    pub passes: usize,
}

impl Default for EbwConfig {
    fn default() -> Self {
        EbwConfig {
            e: 1.0,
            variance_floor: VARIANCE_FLOOR,
            passes: 10,
        }
    }
}

impl EbwConfig {
    fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.variance_floor > 0.0) {
            return Err(Error::Domain(format!(
                "E = {} and variance floor = {} must be positive",
                self.e, self.variance_floor
            )));
        }
        Ok(())
    }
}

/// Numerator and denominator moments per tied output, taken about the
/// model mean at accumulation time.
#[derive(Clone, Debug)]
pub struct MmiStats {
    pub num: Vec<OutputStats>,
    pub den: Vec<OutputStats>,
}

impl MmiStats {
    pub fn new(model: &HmmModel) -> Self {
        let zero: Vec<OutputStats> = model
            .outputs()
            .iter()
            .map(|o| OutputStats::new(o.mean().to_vec(), false))
            .collect();
        MmiStats {
            num: zero.clone(),
            den: zero,
        }
    }

    pub fn merge(&mut self, other: &MmiStats) {
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            a.merge(b);
        }
        for (a, b) in self.den.iter_mut().zip(&other.den) {
            a.merge(b);
        }
    }

    fn add_lattice(
        side: &mut [OutputStats],
        model: &HmmModel,
        utt: &Utterance,
        lat: &Lattice,
        kappa: f64,
        scales: &PhoneScaleMap,
    ) -> Result<()> {
        let scored = lat.score_arcs(model, utt, kappa, scales)?;
        let weights: Vec<f64> = scored.iter().map(|a| a.weight).collect();
        let (_, post) = lat.arc_posteriors(&weights)?;
        for (arc, p) in scored.iter().zip(post) {
            if p <= 0.0 {
                continue;
            }
            for ph in &arc.phones {
                for (k, &s) in ph.states.iter().enumerate() {
                    side[s as usize].add(utt.frame(ph.start + k), p);
                }
            }
        }
        Ok(())
    }
}

/// Occupancies and moments from arc posteriors of both lattices, the
/// state alignment inside each phone re-derived under `model`.
pub fn accumulate_lattice_stats(
    model: &HmmModel,
    utt: &Utterance,
    numerator: &Lattice,
    denominator: &Lattice,
    kappa: f64,
    scales: &PhoneScaleMap,
) -> Result<MmiStats> {
    let mut st = MmiStats::new(model);
    MmiStats::add_lattice(&mut st.num, model, utt, numerator, kappa, scales)?;
    MmiStats::add_lattice(&mut st.den, model, utt, denominator, kappa, scales)?;
    Ok(st)
}

/// Numerator and denominator lattices of one utterance. The denominator
/// should contain the numerator path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePair {
    pub numerator: Lattice,
    pub denominator: Lattice,
}

fn check_pairs(utts: &[Utterance], lattices: &[LatticePair]) -> Result<()> {
    if utts.len() != lattices.len() {
        return Err(Error::Validation(format!(
            "{} lattice pairs for {} utterances",
            lattices.len(),
            utts.len()
        )));
    }
    for (u, l) in utts.iter().zip(lattices) {
        if l.numerator.utt_id != u.id || l.denominator.utt_id != u.id {
            return Err(Error::Validation(format!("lattices out of order at {}", u.id)));
        }
    }
    Ok(())
}

/// Corpus-level statistics, accumulated in parallel and reduced in input order.
pub fn accumulate_corpus(
    model: &HmmModel,
    utts: &[Utterance],
    lattices: &[LatticePair],
    kappa: f64,
    scales: &PhoneScaleMap,
) -> Result<MmiStats> {
    check_pairs(utts, lattices)?;
    let items: Vec<(&Utterance, &LatticePair)> = utts.iter().zip(lattices).collect();
    let parts: Vec<Result<MmiStats>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = MmiStats::new(model);
            for (u, l) in chunk {
                acc.merge(&accumulate_lattice_stats(
                    model,
                    u,
                    &l.numerator,
                    &l.denominator,
                    kappa,
                    scales,
                )?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = MmiStats::new(model);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Smallest D for which the updated variance of every dimension stays at or
/// above `floor` (and `G + D > 0`), where G is the occupancy difference.
pub fn minimum_d(old: &DiagonalGaussian, num: &OutputStats, den: &OutputStats, floor: f64) -> f64 {
    let g = num.occ - den.occ;
    let mut d_min = -g;
    for i in 0..old.dim() {
        let var = old.variance()[i];
        let b_i = num.first[i] - den.first[i];
        let a_i = num.second[i] - den.second[i];
        let fl = floor.min(var);
        // (A + Dσ²)(G + D) − B² ≥ floor·(G + D)²
        let a = var - fl;
        let b = a_i + var * g - 2.0 * fl * g;
        let c = a_i * g - b_i * b_i - fl * g * g;
        let root = if a > 0.0 {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                (-b + disc.sqrt()) / (2.0 * a)
            } else {
                f64::NEG_INFINITY
            }
        } else if b > 0.0 {
            -c / b
        } else {
            f64::NEG_INFINITY
        };
        d_min = d_min.max(root);
    }
    d_min
}

/// The EBW re-estimate of one diagonal Gaussian for a given D.
pub fn ebw_gaussian(
    old: &DiagonalGaussian,
    num: &OutputStats,
    den: &OutputStats,
    d: f64,
    floor: f64,
) -> Result<DiagonalGaussian> {
    let denom = num.occ - den.occ + d;
    if denom <= 0.0 {
        return Err(Error::Domain(format!("EBW denominator {denom} is not positive")));
    }
    let dim = old.dim();
    let mut mean = Vec::with_capacity(dim);
    let mut var = Vec::with_capacity(dim);
    for i in 0..dim {
        // moments are about the old mean, so the D·μ term vanishes
        let dm = (num.first[i] - den.first[i]) / denom;
        let s2 = (num.second[i] - den.second[i] + d * old.variance()[i]) / denom - dm * dm;
        mean.push(num.shift[i] + dm);
        var.push(s2.max(floor));
    }
    DiagonalGaussian::new(mean, var)
}

/// Per-output D values used by an update.
#[derive(Clone, Debug, PartialEq)]
pub struct EbwUpdate {
    pub model: HmmModel,
    pub d: Vec<f64>,
}

/// One extended Baum-Welch update of every diagonal Gaussian output:
/// `D_j = max(E·γ_den, 2·D_min)`.
pub fn ebw_update(model: &HmmModel, stats: &MmiStats, cfg: &EbwConfig) -> Result<EbwUpdate> {
    cfg.validate()?;
    let mut outputs = Vec::with_capacity(model.n_outputs());
    let mut ds = Vec::with_capacity(model.n_outputs());
    for (j, old) in model.outputs().iter().enumerate() {
        let g = old.as_diagonal().ok_or_else(|| {
            Error::Validation(format!(
                "extended Baum-Welch needs diagonal Gaussian outputs; state {j} is {}",
                old.kind()
            ))
        })?;
        let (num, den) = (&stats.num[j], &stats.den[j]);
        if num.shift != g.mean() {
            return Err(Error::Validation(format!(
                "statistics for state {j} were accumulated under a different model"
            )));
        }
        if num.occ <= 0.0 && den.occ <= 0.0 {
            outputs.push(old.clone());
            ds.push(0.0);
            continue;
        }
        let d_min = minimum_d(g, num, den, cfg.variance_floor);
        let d = (cfg.e * den.occ).max(2.0 * d_min);
        if num.occ - den.occ + d <= f64::EPSILON * (num.occ + den.occ) {
            warn!("state {j}: degenerate EBW constant; keeping its parameters");
            outputs.push(old.clone());
            ds.push(d);
            continue;
        }
        outputs.push(OutputDist::Diagonal(ebw_gaussian(g, num, den, d, cfg.variance_floor)?));
        ds.push(d);
    }
    Ok(EbwUpdate {
        model: model.with_outputs(outputs)?,
        d: ds,
    })
}

/// Largest of `|Δμ|/σ` and `|Δσ²|/σ²` over all diagonal outputs and dimensions.
pub fn max_relative_change(old: &HmmModel, new: &HmmModel) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in old.outputs().iter().zip(new.outputs()) {
        if let (Some(a), Some(b)) = (a.as_diagonal(), b.as_diagonal()) {
            for i in 0..a.dim() {
                let v = a.variance()[i];
                worst = worst
                    .max((b.mean()[i] - a.mean()[i]).abs() / v.sqrt())
                    .max((b.variance()[i] - v).abs() / v);
            }
        }
    }
    worst
}

/// Errors of the best path through the merged lattices under `model`.
pub fn lattice_rescore_wer(
    numerator: &Lattice,
    denominator: &Lattice,
    model: &HmmModel,
    utt: &Utterance,
    kappa: f64,
    scales: &PhoneScaleMap,
    reference: &[String],
) -> Result<EditCounts> {
    let merged = numerator.merge(denominator)?;
    rescore_merged(&merged, model, utt, kappa, scales, reference)
}

fn rescore_merged(
    merged: &Lattice,
    model: &HmmModel,
    utt: &Utterance,
    kappa: f64,
    scales: &PhoneScaleMap,
    reference: &[String],
) -> Result<EditCounts> {
    let weights: Vec<f64> = merged
        .score_arcs(model, utt, kappa, scales)?
        .into_iter()
        .map(|a| a.weight)
        .collect();
    let (_, _, words) = merged.best_path(&weights)?;
    Ok(align_counts(reference, &words))
}

fn corpus_wer(
    model: &HmmModel,
    utts: &[Utterance],
    merged: &[Lattice],
    kappa: f64,
    scales: &PhoneScaleMap,
) -> Result<EditCounts> {
    let parts: Vec<Result<EditCounts>> = utts
        .par_iter()
        .zip(merged)
        .map(|(u, l)| rescore_merged(l, model, u, kappa, scales, &u.transcript))
        .collect();
    let mut total = EditCounts::default();
    for p in parts {
        total.add(&p?);
    }
    Ok(total)
}

/// Center phone of the units owning each tied output, when unambiguous.
pub fn output_phones(model: &HmmModel) -> Vec<Option<String>> {
    let mut out: Vec<Option<Option<String>>> = vec![None; model.n_outputs()];
    for (u, unit) in model.units().iter().enumerate() {
        let p = center_phone(unit.label());
        for &j in model.unit_outputs(u) {
            let slot = &mut out[j as usize];
            match slot {
                None => *slot = Some(Some(p.to_string())),
                Some(Some(q)) if q != p => *slot = Some(None),
                _ => {}
            }
        }
    }
    out.into_iter().map(Option::flatten).collect()
}

/// Mean frame score per phone over fixed hard alignments, for each model.
pub fn score_tracks(
    models: &[HmmModel],
    utts: &[Utterance],
    alignments: &[Alignment],
) -> Result<Vec<BTreeMap<String, f64>>> {
    if utts.len() != alignments.len() {
        return Err(Error::Validation(format!(
            "{} alignments for {} utterances",
            alignments.len(),
            utts.len()
        )));
    }
    let mut tracks = Vec::with_capacity(models.len());
    for model in models {
        let phones = output_phones(model);
        let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for (u, al) in utts.iter().zip(alignments) {
            if al.utt_id != u.id || al.len() != u.len() {
                return Err(Error::MissingAlignment(u.id.clone()));
            }
            for t in 0..u.len() {
                for (s, w) in al.state_weights(t) {
                    if let Some(p) = &phones[s as usize] {
                        let e = acc.entry(p.clone()).or_insert((0.0, 0.0));
                        e.0 += w;
                        e.1 += w * frame_score_unchecked(model, s, u.frame(t));
                    }
                }
            }
        }
        tracks.push(acc.into_iter().map(|(p, (w, s))| (p, s / w)).collect());
    }
    Ok(tracks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmiPass {
    pub pass: usize,
    pub errors: usize,
    pub ref_words: usize,
    pub wer: f64,
    pub max_change: f64,
    pub tracks: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct MmiRun {
    /// Initial model followed by one model per pass.
    pub models: Vec<HmmModel>,
    pub passes: Vec<MmiPass>,
}

/// Repeated EBW over fixed lattices. Pass 0 reports the initial model.
pub fn run_mmi(
    model: &HmmModel,
    utts: &[Utterance],
    lattices: &[LatticePair],
    kappa: f64,
    scales: &PhoneScaleMap,
    cfg: &EbwConfig,
    track_alignments: &[Alignment],
) -> Result<MmiRun> {
    cfg.validate()?;
    check_pairs(utts, lattices)?;
    let merged: Vec<Lattice> = lattices
        .iter()
        .map(|l| l.numerator.merge(&l.denominator))
        .collect::<Result<_>>()?;
    let mut models = vec![model.clone()];
    let mut passes = Vec::with_capacity(cfg.passes + 1);
    for pass in 0..=cfg.passes {
        if pass > 0 {
            let cur = models.last().unwrap();
            let stats = accumulate_corpus(cur, utts, lattices, kappa, scales)?;
            let next = ebw_update(cur, &stats, cfg)?.model;
            models.push(next);
        }
        let cur = models.last().unwrap();
        let edits = corpus_wer(cur, utts, &merged, kappa, scales)?;
        let max_change = if pass == 0 {
            0.0
        } else {
            max_relative_change(&models[pass - 1], cur)
        };
        let tracks = score_tracks(std::slice::from_ref(cur), utts, track_alignments)?
            .pop()
            .unwrap_or_default();
        log::info!(
            "mmi pass {pass}: WER {:.2}% max change {max_change:.3e}",
            100.0 * edits.rate().unwrap_or(0.0)
        );
        passes.push(MmiPass {
            pass,
            errors: edits.errors(),
            ref_words: edits.ref_len,
            wer: edits.rate().unwrap_or(0.0),
            max_change,
            tracks,
        });
    }
    Ok(MmiRun { models, passes })
}
