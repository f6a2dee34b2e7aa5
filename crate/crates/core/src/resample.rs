//! Urns of aligned frames and bootstrap resampling of corpora.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Utterance};
use crate::dists::{DiscreteSampler, RandomSource};
use crate::error::{Error, Result};
use crate::hmm::{Alignment, HmmModel};

/// Fractional entries below this occupancy are not put in an urn.
pub const URN_OCCUPANCY_MIN: f64 = 1e-8;

const SIDECAR_MAGIC: &[u8; 4] = b"HMPU";
const SIDECAR_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UrnMode {
    SpeakerIndependent,
    SpeakerDependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    Hard,
    Fractional,
}

impl std::str::FromStr for UrnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "si" | "speaker-independent" => Ok(UrnMode::SpeakerIndependent),
            "sd" | "speaker-dependent" => Ok(UrnMode::SpeakerDependent),
            other => Err(Error::Config(format!("unknown urn mode {other}"))),
        }
    }
}

impl std::str::FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(CountMode::Hard),
            "fractional" => Ok(CountMode::Fractional),
            other => Err(Error::Config(format!("unknown count mode {other}"))),
        }
    }
}

/// Weighted frames of one tied state (and speaker), referenced by their
/// global index in the source corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Urn {
    pub state: u32,
    pub speaker: Option<String>,
    entries: Vec<u32>,
    weights: Vec<f64>,
    sampler: DiscreteSampler,
}

impl Urn {
    fn new(state: u32, speaker: Option<String>, entries: Vec<u32>, weights: Vec<f64>) -> Result<Self> {
        let sampler = DiscreteSampler::new(&weights)?;
        Ok(Urn {
            state,
            speaker,
            entries,
            weights,
            sampler,
        })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.sampler.total()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Global frame index chosen with probability proportional to weight.
    pub fn draw(&self, rng: &mut RandomSource) -> u32 {
        self.entries[self.sampler.index(rng.uniform())]
    }
}

type UrnKey = (u32, Option<String>);

#[derive(Clone, Debug, PartialEq)]
pub struct UrnSet {
    pub mode: UrnMode,
    pub count: CountMode,
    urns: BTreeMap<UrnKey, Urn>,
    /// Speaker-independent urns used when a speaker-dependent one is missing.
    backoff: Option<BTreeMap<u32, Urn>>,
}

fn group(
    corpus: &Corpus,
    alignments: &[Alignment],
    count: CountMode,
    by_speaker: bool,
) -> Result<BTreeMap<UrnKey, (Vec<u32>, Vec<f64>)>> {
    let mut acc: BTreeMap<UrnKey, (Vec<u32>, Vec<f64>)> = BTreeMap::new();
    let mut by_id: BTreeMap<&str, &Alignment> = BTreeMap::new();
    for a in alignments {
        by_id.insert(a.utt_id.as_str(), a);
    }
    for (u, utt) in corpus.utterances().iter().enumerate() {
        let al = by_id
            .get(utt.id.as_str())
            .ok_or_else(|| Error::MissingAlignment(utt.id.clone()))?;
        if al.len() != utt.len() {
            return Err(Error::Validation(format!(
                "alignment for {} has {} frames, utterance {}",
                utt.id,
                al.len(),
                utt.len()
            )));
        }
        if count == CountMode::Hard && al.hard_states().is_none() {
            return Err(Error::Validation(format!(
                "hard urns need a hard alignment for {}",
                utt.id
            )));
        }
        let speaker = by_speaker.then(|| utt.speaker.clone());
        for t in 0..utt.len() {
            let g = corpus.global_index(u, t) as u32;
            for (s, w) in al.state_weights(t) {
                if w < URN_OCCUPANCY_MIN {
                    continue;
                }
                let e = acc.entry((s, speaker.clone())).or_default();
                e.0.push(g);
                e.1.push(w);
            }
        }
    }
    Ok(acc)
}

fn finish(groups: BTreeMap<UrnKey, (Vec<u32>, Vec<f64>)>) -> Result<BTreeMap<UrnKey, Urn>> {
    groups
        .into_iter()
        .map(|((s, spk), (e, w))| Ok(((s, spk.clone()), Urn::new(s, spk, e, w)?)))
        .collect()
}

/// Put every frame in the urn of its aligned state (and speaker): weight 1
/// per frame for hard alignments, the occupancy for fractional ones.
pub fn build_urns(
    corpus: &Corpus,
    alignments: &[Alignment],
    mode: UrnMode,
    count: CountMode,
) -> Result<UrnSet> {
    let sd = mode == UrnMode::SpeakerDependent;
    Ok(UrnSet {
        mode,
        count,
        urns: finish(group(corpus, alignments, count, sd)?)?,
        backoff: None,
    })
}

impl UrnSet {
    /// Keep speaker-independent urns to fall back on when a speaker-dependent
    /// urn is missing. A no-op in speaker-independent mode.
    pub fn with_backoff(mut self, corpus: &Corpus, alignments: &[Alignment]) -> Result<Self> {
        if self.mode == UrnMode::SpeakerDependent {
            let si = finish(group(corpus, alignments, self.count, false)?)?;
            self.backoff = Some(si.into_iter().map(|((s, _), u)| (s, u)).collect());
        }
        Ok(self)
    }

    pub fn urns(&self) -> impl Iterator<Item = &Urn> {
        self.urns.values()
    }

    pub fn len(&self) -> usize {
        self.urns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urns.is_empty()
    }

    pub fn get(&self, state: u32, speaker: Option<&str>) -> Option<&Urn> {
        let spk = match self.mode {
            UrnMode::SpeakerIndependent => None,
            UrnMode::SpeakerDependent => speaker.map(str::to_string),
        };
        self.urns.get(&(state, spk))
    }

    fn urn_for(&self, state: u32, speaker: Option<&str>) -> Result<&Urn> {
        if self.mode == UrnMode::SpeakerDependent && speaker.is_none() {
            return Err(Error::Validation("speaker-dependent draw without a speaker".into()));
        }
        self.get(state, speaker)
            .or_else(|| self.backoff.as_ref().and_then(|b| b.get(&state)))
            .ok_or_else(|| Error::EmptyUrn {
                state,
                speaker: speaker.filter(|_| self.mode == UrnMode::SpeakerDependent).map(str::to_string),
            })
    }

    /// Global index of one frame drawn from the `(state, speaker)` urn.
    pub fn draw_index(&self, state: u32, speaker: Option<&str>, rng: &mut RandomSource) -> Result<u32> {
        Ok(self.urn_for(state, speaker)?.draw(rng))
    }

    pub fn draw_frame<'c>(
        &self,
        corpus: &'c Corpus,
        state: u32,
        speaker: Option<&str>,
        rng: &mut RandomSource,
    ) -> Result<&'c [f64]> {
        Ok(corpus.frame_global(self.draw_index(state, speaker, rng)? as usize))
    }

    /// Total urn weight per state, summed over speakers.
    pub fn state_totals(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for u in self.urns.values() {
            *out.entry(u.state).or_insert(0.0) += u.total_weight();
        }
        out
    }

    /// Little-endian sidecar: magic, version, modes, corpus checksum, urn
    /// count; per urn its state, speaker and entry count; then all frame
    /// indices (u32) and all weights (f64) in urn order.
    pub fn write_sidecar<W: Write>(&self, mut w: W, corpus_checksum: &[u8; 32]) -> std::io::Result<()> {
        w.write_all(SIDECAR_MAGIC)?;
        w.write_all(&SIDECAR_VERSION.to_le_bytes())?;
        w.write_all(&[
            (self.mode == UrnMode::SpeakerDependent) as u8,
            (self.count == CountMode::Fractional) as u8,
        ])?;
        w.write_all(corpus_checksum)?;
        w.write_all(&(self.urns.len() as u32).to_le_bytes())?;
        for u in self.urns.values() {
            w.write_all(&u.state.to_le_bytes())?;
            match &u.speaker {
                Some(s) => {
                    w.write_all(&(s.len() as u32).to_le_bytes())?;
                    w.write_all(s.as_bytes())?;
                }
                None => w.write_all(&u32::MAX.to_le_bytes())?,
            }
            w.write_all(&(u.entries.len() as u32).to_le_bytes())?;
        }
        for u in self.urns.values() {
            for e in &u.entries {
                w.write_all(&e.to_le_bytes())?;
            }
        }
        for u in self.urns.values() {
            for x in &u.weights {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a sidecar, checking it belongs to the corpus with `corpus_checksum`.
    pub fn read_sidecar<R: Read>(mut r: R, corpus_checksum: &[u8; 32]) -> Result<UrnSet> {
        let ctx = "urn sidecar";
        let io = |e: std::io::Error| Error::format(ctx, e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SIDECAR_MAGIC {
            return Err(Error::format(ctx, "bad magic"));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(io)?;
        if u16::from_le_bytes(b2) != SIDECAR_VERSION {
            return Err(Error::format(ctx, "unsupported version"));
        }
        r.read_exact(&mut b2).map_err(io)?;
        let mode = if b2[0] == 1 { UrnMode::SpeakerDependent } else { UrnMode::SpeakerIndependent };
        let count = if b2[1] == 1 { CountMode::Fractional } else { CountMode::Hard };
        let mut sum = [0u8; 32];
        r.read_exact(&mut sum).map_err(io)?;
        if &sum != corpus_checksum {
            return Err(Error::format(ctx, "corpus checksum does not match"));
        }
        let mut b4 = [0u8; 4];
        let mut u32_at = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut b4).map_err(io)?;
            Ok(u32::from_le_bytes(b4))
        };
        let n = u32_at(&mut r)?;
        let mut heads = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let state = u32_at(&mut r)?;
            let len = u32_at(&mut r)?;
            let speaker = if len == u32::MAX {
                None
            } else {
                let mut s = vec![0u8; len as usize];
                r.read_exact(&mut s).map_err(io)?;
                Some(String::from_utf8(s).map_err(|e| Error::format(ctx, e.to_string()))?)
            };
            heads.push((state, speaker, u32_at(&mut r)? as usize));
        }
        let mut entries = Vec::with_capacity(heads.len());
        for (_, _, k) in &heads {
            entries.push((0..*k).map(|_| u32_at(&mut r)).collect::<Result<Vec<u32>>>()?);
        }
        let mut urns = BTreeMap::new();
        let mut b8 = [0u8; 8];
        for ((state, speaker, k), e) in heads.into_iter().zip(entries) {
            let mut w = Vec::with_capacity(k);
            for _ in 0..k {
                r.read_exact(&mut b8).map_err(io)?;
                w.push(f64::from_le_bytes(b8));
            }
            urns.insert((state, speaker.clone()), Urn::new(state, speaker, e, w)?);
        }
        Ok(UrnSet {
            mode,
            count,
            urns,
            backoff: None,
        })
    }
}

/// A new utterance with the given state sequence, each frame drawn
/// independently from its state's urn. Metadata comes from `template`.
pub fn resample_states(
    urns: &UrnSet,
    source: &Corpus,
    template: &Utterance,
    states: &[u32],
    rng: &mut RandomSource,
) -> Result<Utterance> {
    let d = source.dim();
    let spk = Some(template.speaker.as_str());
    let mut frames = Vec::with_capacity(states.len() * d);
    for &s in states {
        frames.extend_from_slice(urns.draw_frame(source, s, spk, rng)?);
    }
    Utterance::new(
        template.id.clone(),
        template.speaker.clone(),
        template.transcript.clone(),
        d,
        frames,
    )?
    .with_states(states.to_vec())
}

/// Where the state sequence of a resampled utterance comes from.
pub enum StateSource<'a> {
    /// The utterance's own hard alignment (parallel corpus).
    Fixed(&'a Alignment),
    /// A sequence simulated from a model over the given units.
    Simulate(&'a HmmModel, &'a [usize]),
}

pub fn resample_utterance(
    urns: &UrnSet,
    source: &Corpus,
    template: &Utterance,
    states: StateSource<'_>,
    rng: &mut RandomSource,
) -> Result<Utterance> {
    let seq = match states {
        StateSource::Fixed(a) => a
            .hard_states()
            .ok_or_else(|| Error::Validation(format!("alignment for {} is not hard", a.utt_id)))?
            .to_vec(),
        StateSource::Simulate(model, units) => crate::synth::simulate_state_sequence(model, units, rng)?,
    };
    resample_states(urns, source, template, &seq, rng)
}

/// Parallel corpus: every utterance of `targets` keeps its aligned state
/// sequence and gets fresh frames from the urns of `source`.
pub fn resample_parallel(
    urns: &UrnSet,
    source: &Corpus,
    targets: &Corpus,
    alignments: &[Alignment],
    rng: &RandomSource,
) -> Result<Corpus> {
    if alignments.len() != targets.len() {
        return Err(Error::Validation("one alignment per target utterance required".into()));
    }
    let utts = targets
        .utterances()
        .par_iter()
        .zip(alignments)
        .map(|(u, a)| {
            if a.utt_id != u.id {
                return Err(Error::MissingAlignment(u.id.clone()));
            }
            resample_utterance(urns, source, u, StateSource::Fixed(a), &mut rng.derive(&u.id))
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(source.dim(), utts)
}

/// Two-sample Kolmogorov-Smirnov statistic between a weighted sample and an
/// unweighted one.
pub fn ks_statistic(a: &[(f64, f64)], b: &[f64]) -> f64 {
    let mut a: Vec<(f64, f64)> = a.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut b = b.to_vec();
    b.sort_by(f64::total_cmp);
    let wa: f64 = a.iter().map(|x| x.1).sum();
    let nb = b.len() as f64;
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut dmax = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(&q)) => p.0.min(q),
            (Some(p), None) => p.0,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == x {
            fa += a[i].1 / wa;
            i += 1;
        }
        while j < b.len() && b[j] == x {
            fb += 1.0 / nb;
            j += 1;
        }
        dmax = dmax.max((fa - fb).abs());
    }
    dmax
}

/// Asymptotic two-sample critical value `c(α)·√((n+m)/(n·m))`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> (Corpus, Vec<Alignment>) {
        let a = Utterance::new("a", "s1", vec![], 1, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Utterance::new("b", "s2", vec![], 1, vec![10.0, 20.0]).unwrap();
        let al = vec![
            Alignment::from_states("a", vec![0, 0, 1]),
            Alignment::from_states("b", vec![1, 0]),
        ];
        (Corpus::new(1, vec![a, b]).unwrap(), al)
    }

    #[test]
    fn hard_urns_hold_aligned_frames() {
        let (c, al) = corpus();
        let u = build_urns(&c, &al, UrnMode::SpeakerIndependent, CountMode::Hard).unwrap();
        let frames = |s: u32| -> Vec<f64> {
            u.get(s, None).unwrap().entries().iter().map(|&g| c.frame_global(g as usize)[0]).collect()
        };
        assert_eq!(frames(0), vec![1.0, 2.0, 20.0]);
        assert_eq!(frames(1), vec![3.0, 10.0]);
        let sd = build_urns(&c, &al, UrnMode::SpeakerDependent, CountMode::Hard).unwrap();
        assert_eq!(sd.len(), 4);
        for urn in sd.urns() {
            for &g in urn.entries() {
                let (ui, _) = c.locate(g as usize);
                assert_eq!(Some(&c.utterances()[ui].speaker), urn.speaker.as_ref());
            }
        }
    }

    #[test]
    fn missing_urn_names_state_and_speaker() {
        let (c, al) = corpus();
        let sd = build_urns(&c, &al, UrnMode::SpeakerDependent, CountMode::Hard).unwrap();
        let mut r = RandomSource::new(1, "t");
        match sd.draw_index(7, Some("s1"), &mut r) {
            Err(Error::EmptyUrn { state: 7, speaker: Some(s) }) => assert_eq!(s, "s1"),
            other => panic!("{other:?}"),
        }
        let si = build_urns(&c, &al, UrnMode::SpeakerIndependent, CountMode::Hard).unwrap();
        let missing = Alignment::from_states("zzz", vec![0]);
        assert!(build_urns(&c, &[al[0].clone(), missing], UrnMode::SpeakerIndependent, CountMode::Hard).is_err());
        assert!(si.draw_index(1, None, &mut r).is_ok());
    }

    #[test]
    fn sidecar_round_trip() {
        let (c, al) = corpus();
        let sd = build_urns(&c, &al, UrnMode::SpeakerDependent, CountMode::Hard).unwrap();
        let sum = [7u8; 32];
        let mut buf = Vec::new();
        sd.write_sidecar(&mut buf, &sum).unwrap();
        let back = UrnSet::read_sidecar(buf.as_slice(), &sum).unwrap();
        assert_eq!(back, sd);
        assert!(UrnSet::read_sidecar(buf.as_slice(), &[0u8; 32]).is_err());
    }

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a: Vec<(f64, f64)> = [1.0, 2.0, 3.0].iter().map(|&x| (x, 1.0)).collect();
        assert_eq!(ks_statistic(&a, &[1.0, 2.0, 3.0]), 0.0);
        assert!((ks_statistic(&a, &[10.0, 11.0]) - 1.0).abs() < 1e-12);
        assert!((ks_critical(100, 100, 0.01) - 1.6276 * 0.141_421).abs() < 1e-3);
    }
}
