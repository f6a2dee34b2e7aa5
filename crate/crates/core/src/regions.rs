//! State regions and the six frame-rearrangement codes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::hmm::Alignment;

/// A maximal run `[start, end)` of frames aligned to one state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRegion {
    pub state: u32,
    pub start: u32,
    pub end: u32,
}

impl StateRegion {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub frames: usize,
    pub regions: usize,
    pub mean_length: f64,
}

pub fn partition_states(states: &[u32]) -> Vec<StateRegion> {
    let mut out: Vec<StateRegion> = Vec::new();
    for (t, &s) in states.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.state == s => r.end = t as u32 + 1,
            _ => out.push(StateRegion {
                state: s,
                start: t as u32,
                end: t as u32 + 1,
            }),
        }
    }
    out
}

/// Regions of a hard alignment.
pub fn partition_regions(alignment: &Alignment) -> Result<Vec<StateRegion>> {
    let states = alignment.hard_states().ok_or_else(|| {
        Error::Validation(format!("alignment for {} is not hard", alignment.utt_id))
    })?;
    Ok(partition_states(states))
}

pub fn summarize<'a>(all: impl IntoIterator<Item = &'a [StateRegion]>) -> RegionSummary {
    let mut frames = 0;
    let mut regions = 0;
    for rs in all {
        regions += rs.len();
        frames += rs.iter().map(StateRegion::len).sum::<usize>();
    }
    RegionSummary {
        frames,
        regions,
        mean_length: if regions == 0 { 0.0 } else { frames as f64 / regions as f64 },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionCode {
    R1R2R3,
    R1R1R1,
    S1S2S3,
    S1S1S1,
    R1S2S3,
    R1S1S1,
}

impl RegionCode {
    pub const ALL: [RegionCode; 6] = [
        RegionCode::R1R2R3,
        RegionCode::R1R1R1,
        RegionCode::S1S2S3,
        RegionCode::S1S1S1,
        RegionCode::R1S2S3,
        RegionCode::R1S1S1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionCode::R1R2R3 => "r1r2r3",
            RegionCode::R1R1R1 => "r1r1r1",
            RegionCode::S1S2S3 => "s1s2s3",
            RegionCode::S1S1S1 => "s1s1s1",
            RegionCode::R1S2S3 => "r1s2s3",
            RegionCode::R1S1S1 => "r1s1s1",
        }
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegionCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown region code {s:?}")))
    }
}

/// Source of each frame of a region of length `len` under `code`:
/// `(from_real, offset)` pairs.
fn sources(code: RegionCode, len: usize) -> impl Iterator<Item = (bool, usize)> {
    (0..len).map(move |k| match code {
        RegionCode::R1R2R3 => (true, k),
        RegionCode::R1R1R1 => (true, 0),
        RegionCode::S1S2S3 => (false, k),
        RegionCode::S1S1S1 => (false, 0),
        RegionCode::R1S2S3 => (k == 0, k),
        RegionCode::R1S1S1 => (k == 0, 0),
    })
}

/// Rearrange frames region by region. `real` and `resampled` must share
/// length; when both carry state sequences these must agree too.
pub fn apply_region_code(
    real: &Utterance,
    resampled: &Utterance,
    regions: &[StateRegion],
    code: RegionCode,
) -> Result<Utterance> {
    if real.len() != resampled.len() || real.dim() != resampled.dim() {
        return Err(Error::Validation(format!(
            "real {} ({}×{}) and resampled {} ({}×{}) differ in shape",
            real.id,
            real.len(),
            real.dim(),
            resampled.id,
            resampled.len(),
            resampled.dim()
        )));
    }
    if let (Some(a), Some(b)) = (&real.states, &resampled.states) {
        if a != b {
            return Err(Error::Validation(format!(
                "{} and {} have different state sequences",
                real.id, resampled.id
            )));
        }
    }
    let covered: usize = regions.iter().map(StateRegion::len).sum();
    if covered != real.len() || regions.first().is_some_and(|r| r.start != 0) {
        return Err(Error::Validation(format!(
            "regions cover {covered} of {} frames of {}",
            real.len(),
            real.id
        )));
    }
    let d = real.dim();
    let mut frames = Vec::with_capacity(real.len() * d);
    for r in regions {
        for (from_real, k) in sources(code, r.len()) {
            let src = if from_real { real } else { resampled };
            frames.extend_from_slice(src.frame(r.start as usize + k));
        }
    }
    real.with_frames(d, frames)
}

/// Positions whose frame differs in source or offset from the real stream.
pub fn altered_positions(regions: &[StateRegion], code: RegionCode) -> usize {
    regions
        .iter()
        .map(|r| {
            sources(code, r.len())
                .enumerate()
                .filter(|&(k, src)| src != (true, k))
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> (Utterance, Utterance, Vec<StateRegion>) {
        let states = vec![1, 1, 1, 1, 2, 3, 3, 3, 3, 3, 3, 3];
        let real: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let res: Vec<f64> = (1..=12).map(|i| -(i as f64)).collect();
        let r = Utterance::new("u", "s", vec![], 1, real).unwrap().with_states(states.clone()).unwrap();
        let s = Utterance::new("u", "s", vec![], 1, res).unwrap().with_states(states.clone()).unwrap();
        (r, s, partition_states(&states))
    }

    #[test]
    fn worked_example_regions() {
        let (_, _, regions) = worked();
        let lens: Vec<(u32, usize)> = regions.iter().map(|r| (r.state, r.len())).collect();
        assert_eq!(lens, vec![(1, 4), (2, 1), (3, 7)]);
        let s = summarize([regions.as_slice()]);
        assert_eq!((s.frames, s.regions), (12, 3));
        assert_eq!(partition_states(&[5, 5, 5]).len(), 1);
        assert_eq!(partition_states(&[1, 2, 3, 4]).len(), 4);
    }

    #[test]
    fn worked_example_codes() {
        let (r, s, regions) = worked();
        let get = |c| apply_region_code(&r, &s, &regions, c).unwrap().data().to_vec();
        assert_eq!(
            get(RegionCode::R1R1R1),
            vec![1., 1., 1., 1., 5., 6., 6., 6., 6., 6., 6., 6.]
        );
        assert_eq!(
            get(RegionCode::R1S2S3),
            vec![1., -2., -3., -4., 5., 6., -7., -8., -9., -10., -11., -12.]
        );
        assert_eq!(get(RegionCode::S1S2S3), s.data().to_vec());
        assert_eq!(get(RegionCode::R1R2R3), r.data().to_vec());
        assert_eq!(
            get(RegionCode::R1S1S1),
            vec![1., -1., -1., -1., 5., 6., -6., -6., -6., -6., -6., -6.]
        );
        assert_eq!(
            get(RegionCode::S1S1S1),
            vec![-1., -1., -1., -1., -5., -6., -6., -6., -6., -6., -6., -6.]
        );
        assert_eq!(altered_positions(&regions, RegionCode::R1S2S3), 12 - 3);
    }

    #[test]
    fn codes_parse() {
        for c in RegionCode::ALL {
            assert_eq!(c.as_str().parse::<RegionCode>().unwrap(), c);
        }
        assert!("r2r2r2".parse::<RegionCode>().is_err());
    }

    #[test]
    fn mismatched_states_rejected() {
        let (r, _, regions) = worked();
        let other = Utterance::new("v", "s", vec![], 1, vec![0.0; 12])
            .unwrap()
            .with_states(vec![9; 12])
            .unwrap();
        assert!(apply_region_code(&r, &other, &regions, RegionCode::S1S2S3).is_err());
    }
}
